"""Chart metadata model: the structured annotations the QA pipeline queries.

A chart is described by a `ChartSpec`: its type, one or more groups
(series) of labeled numeric entries, and optional per-entry color and
pixel bounding box. Specs are read from and written to a line-structured
text format (see `parse_chart_spec` / `serialize_chart_spec`) and can be
flattened into a `DataTable`, the textual table handed to the generation
service.

All types are immutable and validated on construction, so a ChartSpec in
hand always satisfies the model invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .formatting import format_value

CHART_TYPES = ("vertical_bar", "horizontal_bar", "line", "pie")
BAR_TYPES = ("vertical_bar", "horizontal_bar")

RECORD_SEPARATOR = "---"


class ChartError(ValueError):
    """Base class for chart-spec ingestion problems."""


class ChartParseError(ChartError):
    """Malformed chart-spec document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ChartValidationError(ChartError):
    """Structurally parseable document that violates a model invariant."""


def _load_palette() -> frozenset[str]:
    text = resources.files("chartsynth.data").joinpath("palette.txt").read_text("utf-8")
    names = [ln.strip() for ln in text.splitlines()]
    return frozenset(n for n in names if n and not n.startswith("#"))


PALETTE: frozenset[str] = _load_palette()


def is_palette_color(name: str) -> bool:
    return name in PALETTE


def _check_text_field(value: str, field: str, allow_empty: bool = False) -> None:
    if not allow_empty and not value:
        raise ChartValidationError(f"{field} must be non-empty")
    if value != value.strip():
        raise ChartValidationError(f"{field} {value!r} has leading/trailing whitespace")
    if "|" in value or "\n" in value:
        raise ChartValidationError(f"{field} {value!r} contains a reserved character")


@dataclass(frozen=True)
class BBox:
    """Pixel-space rectangle; width and height strictly positive."""

    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        for field in ("x", "y", "width", "height"):
            v = getattr(self, field)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ChartValidationError(f"bbox {field} must be a finite number, got {v!r}")
        if self.width <= 0 or self.height <= 0:
            raise ChartValidationError("bbox width and height must be strictly positive")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)


@dataclass(frozen=True)
class Entry:
    label: str
    value: float
    color: str | None = None
    bbox: BBox | None = None


@dataclass(frozen=True)
class Group:
    name: str  # series / legend name; empty for single-series charts
    entries: tuple[Entry, ...]


@dataclass(frozen=True)
class ChartSpec:
    image_id: str
    chart_type: str
    groups: tuple[Group, ...]
    element_kind: str = "bar"  # noun for plotted marks: "bar", "dot", "slice"
    source: str | None = None

    def __post_init__(self):
        _check_text_field(self.image_id, "image_id")
        _check_text_field(self.element_kind, "element_kind")
        if self.source is not None:
            _check_text_field(self.source, "source")
        if self.chart_type not in CHART_TYPES:
            raise ChartValidationError(
                f"chart_type must be one of {CHART_TYPES}, got {self.chart_type!r}"
            )
        if not self.groups:
            raise ChartValidationError("chart needs at least one group")
        if self.chart_type == "pie" and len(self.groups) != 1:
            raise ChartValidationError("pie charts must have exactly one group")
        for gi, group in enumerate(self.groups):
            _check_text_field(group.name, f"group[{gi}].name", allow_empty=True)
            if not group.entries:
                raise ChartValidationError(f"group {group.name!r} has no entries")
            seen: set[str] = set()
            for entry in group.entries:
                _check_text_field(entry.label, f"entry label in group {group.name!r}")
                if entry.label in seen:
                    raise ChartValidationError(
                        f"duplicate label {entry.label!r} in group {group.name!r}"
                    )
                seen.add(entry.label)
                if not isinstance(entry.value, (int, float)) or not math.isfinite(entry.value):
                    raise ChartValidationError(
                        f"entry {entry.label!r}: value must be a finite number, got {entry.value!r}"
                    )
                if entry.color is not None and entry.color not in PALETTE:
                    raise ChartValidationError(
                        f"entry {entry.label!r}: color {entry.color!r} is not in the palette"
                    )

    def iter_entries(self) -> Iterator[tuple[int, int, Group, Entry]]:
        """Flattened (group_index, entry_index, group, entry) in first-appearance order."""
        for gi, group in enumerate(self.groups):
            for ei, entry in enumerate(group.entries):
                yield gi, ei, group, entry

    @property
    def entry_count(self) -> int:
        return sum(len(g.entries) for g in self.groups)

    def distinct_labels(self) -> list[str]:
        seen: list[str] = []
        for _, _, _, entry in self.iter_entries():
            if entry.label not in seen:
                seen.append(entry.label)
        return seen


@dataclass(frozen=True)
class DataTable:
    """Row-oriented text table; every row matches the header width."""

    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    title: str | None = None

    def __post_init__(self):
        for i, row in enumerate(self.rows):
            if len(row) != len(self.header):
                raise ChartValidationError(
                    f"row {i} has {len(row)} cells, header has {len(self.header)}"
                )


# --- text format -------------------------------------------------------------
#
# One document per chart:
#
#   image_id: two_col_104
#   chart_type: vertical_bar
#   element_kind: bar
#   source: statista            (optional)
#   group: Democrats            (value may be empty for unnamed series)
#   entry: 2009 | 31 | silver | 10,20,30,40
#   entry: 2010 | 45 | midnightblue | -
#
# entry fields: label | value [| color-or-"-" [| bbox "x,y,w,h" or "-"]]
# Multi-record files separate documents with a line containing only "---".


def parse_chart_spec(document: str) -> ChartSpec:
    """Parse one chart-spec document. Raises ChartParseError / ChartValidationError."""
    header: dict[str, str] = {}
    groups: list[tuple[str, list[Entry]]] = []

    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ChartParseError(f"expected 'key: value', got {line!r}", lineno)
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key in ("image_id", "chart_type", "element_kind", "source"):
            if key in header:
                raise ChartParseError(f"duplicate field {key!r}", lineno)
            header[key] = value
        elif key == "group":
            groups.append((value, []))
        elif key == "entry":
            if not groups:
                raise ChartParseError("entry before any group", lineno)
            groups[-1][1].append(_parse_entry(value, lineno))
        else:
            raise ChartParseError(f"unknown field {key!r}", lineno)

    for required in ("image_id", "chart_type"):
        if required not in header:
            raise ChartParseError(f"missing required field {required!r}")
    if not groups:
        raise ChartParseError("document has no groups")

    return ChartSpec(
        image_id=header["image_id"],
        chart_type=header["chart_type"],
        groups=tuple(Group(name, tuple(entries)) for name, entries in groups),
        element_kind=header.get("element_kind", "bar"),
        source=header.get("source") or None,
    )


def _parse_entry(value: str, lineno: int) -> Entry:
    parts = [p.strip() for p in value.split("|")]
    if len(parts) < 2 or not parts[1]:
        label = parts[0] if parts and parts[0] else "<unnamed>"
        raise ChartValidationError(f"line {lineno}: entry {label!r} is missing a value")
    if len(parts) > 4:
        raise ChartParseError(f"entry has {len(parts)} fields, at most 4 allowed", lineno)
    label = parts[0]
    try:
        number = float(parts[1])
    except ValueError:
        raise ChartValidationError(
            f"line {lineno}: entry {label!r}: value {parts[1]!r} is not a number"
        ) from None
    color = None
    if len(parts) >= 3 and parts[2] not in ("", "-"):
        color = parts[2]
    bbox = None
    if len(parts) == 4 and parts[3] not in ("", "-"):
        fields = parts[3].split(",")
        if len(fields) != 4:
            raise ChartParseError(f"bbox needs 4 comma-separated numbers, got {parts[3]!r}", lineno)
        try:
            x, y, w, h = (float(f) for f in fields)
        except ValueError:
            raise ChartParseError(f"bbox {parts[3]!r} is not numeric", lineno) from None
        bbox = BBox(x, y, w, h)
    return Entry(label=label, value=number, color=color, bbox=bbox)


def serialize_chart_spec(spec: ChartSpec) -> str:
    """Canonical text form; parse(serialize(spec)) == spec."""
    lines = [
        f"image_id: {spec.image_id}",
        f"chart_type: {spec.chart_type}",
        f"element_kind: {spec.element_kind}",
    ]
    if spec.source is not None:
        lines.append(f"source: {spec.source}")
    for group in spec.groups:
        lines.append(f"group: {group.name}".rstrip())
        for entry in group.entries:
            fields = [entry.label, format_value(entry.value)]
            if entry.color is not None or entry.bbox is not None:
                fields.append(entry.color if entry.color is not None else "-")
            if entry.bbox is not None:
                b = entry.bbox
                fields.append(
                    ",".join(format_value(v) for v in (b.x, b.y, b.width, b.height))
                )
            lines.append("entry: " + " | ".join(fields))
    return "\n".join(lines) + "\n"


def parse_chart_documents(text: str) -> list[ChartSpec]:
    """Parse a concatenated multi-record file ("---" separator lines)."""
    specs = []
    for block in _split_records(text):
        if block.strip():
            specs.append(parse_chart_spec(block))
    return specs


def _split_records(text: str) -> Iterator[str]:
    current: list[str] = []
    for line in text.splitlines():
        if line.strip() == RECORD_SEPARATOR:
            yield "\n".join(current)
            current = []
        else:
            current.append(line)
    yield "\n".join(current)


def load_chart_specs(path: str | Path) -> list[ChartSpec]:
    """Load specs from a single file or a directory of files (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        specs: list[ChartSpec] = []
        for child in sorted(path.iterdir()):
            if child.is_file() and not child.name.startswith("."):
                specs.extend(parse_chart_documents(child.read_text("utf-8")))
        return specs
    return parse_chart_documents(path.read_text("utf-8"))


# --- linearized table --------------------------------------------------------

LABEL_COLUMN = "category"


def linearize_table(spec: ChartSpec) -> DataTable:
    """Flatten a spec into one row per distinct label, one column per group.

    A single unnamed group becomes a plain "value" column. Labels keep
    first-appearance order; a label missing from a group leaves an empty cell.
    """
    labels = spec.distinct_labels()
    single_unnamed = len(spec.groups) == 1 and not spec.groups[0].name
    if single_unnamed:
        columns = ["value"]
    else:
        columns = [g.name for g in spec.groups]
    by_group: list[dict[str, str]] = [
        {e.label: format_value(e.value) for e in g.entries} for g in spec.groups
    ]
    rows = tuple(
        (label, *(cells.get(label, "") for cells in by_group)) for label in labels
    )
    return DataTable(header=(LABEL_COLUMN, *columns), rows=rows)


def render_table_text(table: DataTable) -> str:
    """Single text block: optional TITLE line, header line, one line per row."""
    lines = []
    if table.title is not None:
        lines.append(f"TITLE | {table.title}")
    lines.append(" | ".join(table.header))
    lines.extend(" | ".join(row) for row in table.rows)
    return "\n".join(lines)
