"""Structured reasoning programs evaluated directly against a ChartSpec.

A `QueryProgram` is a straight-line sequence of steps, each binding a fresh
name to the result of one operation: selections produce element sets,
projections extract a single entry's value/color/label, and math ops
combine numbers. The final step binds "ans". Programs have a canonical
text form (`name = op(arg, ...)`, one step per line) used in golden files
and in the template catalog, where `$X` placeholders stand for template
slots.

Evaluation is pure and deterministic; every failure mode raises a typed
error so callers can tell an unresolvable selection from an ambiguous one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .charts import BAR_TYPES, ChartSpec
from .formatting import bool_text, format_number


class QueryError(ValueError):
    """Base class for program validation and evaluation failures."""


class SelectionError(QueryError):
    """A selection matched nothing (unknown label/color, empty result)."""


class AmbiguityError(QueryError):
    """A projection received more than one element."""


class QueryTypeError(QueryError):
    """An operation received a value of the wrong type."""


class QueryArithmeticError(QueryError):
    """Numeric failure, e.g. ratio with zero denominator."""


class CapabilityError(QueryError):
    """The spec cannot support the operation (no bboxes, wrong chart type)."""


class RangeError(QueryError):
    """Positional/extreme rank beyond the number of elements."""


@dataclass(frozen=True)
class Ref:
    """Reference to a previously bound step."""

    name: str


@dataclass(frozen=True)
class SlotRef:
    """Template-slot placeholder; only valid inside catalog programs."""

    symbol: str


Arg = Union[str, float, Ref, SlotRef]

# op name -> (min arity, max arity or None for unbounded)
OPS: dict[str, tuple[int, int | None]] = {
    "select_by_label": (1, 2),
    "select_by_color": (1, 1),
    "select_by_position": (2, 2),
    "select_extreme": (2, 2),
    "query_value": (1, 1),
    "query_color": (1, 1),
    "query_label": (1, 1),
    "count": (0, 1),
    "sum": (1, None),
    "diff": (2, 2),
    "avg": (1, None),
    "min": (1, None),
    "max": (1, None),
    "ratio": (2, 2),
    "compare": (3, 3),
}

FINAL_BINDING = "ans"


@dataclass(frozen=True)
class QueryStep:
    target: str
    op: str
    args: tuple[Arg, ...]


@dataclass(frozen=True)
class QueryProgram:
    steps: tuple[QueryStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise QueryError("program has no steps")
        bound: set[str] = set()
        for step in self.steps:
            if step.op not in OPS:
                raise QueryError(f"unknown op {step.op!r}")
            lo, hi = OPS[step.op]
            if len(step.args) < lo or (hi is not None and len(step.args) > hi):
                if hi == lo:
                    expect = str(lo)
                elif hi is None:
                    expect = f"at least {lo}"
                else:
                    expect = f"{lo}..{hi}"
                raise QueryError(f"op {step.op!r} takes {expect} args, got {len(step.args)}")
            if step.target in bound:
                raise QueryError(f"binding {step.target!r} defined twice")
            for arg in step.args:
                if isinstance(arg, Ref) and arg.name not in bound:
                    raise QueryError(f"binding {arg.name!r} used before definition")
            bound.add(step.target)
        if self.steps[-1].target != FINAL_BINDING:
            raise QueryError(f"last step must bind {FINAL_BINDING!r}")

    def slot_symbols(self) -> set[str]:
        return {
            a.symbol for step in self.steps for a in step.args if isinstance(a, SlotRef)
        }


@dataclass(frozen=True)
class ElementSet:
    """Ordered references to entries of the spec being evaluated."""

    members: tuple[tuple[int, int], ...]  # (group index, entry index)

    def __len__(self) -> int:
        return len(self.members)


Value = Union[float, str, bool, ElementSet]


# --- canonical text form -----------------------------------------------------

_STEP_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*=\s*([A-Za-z_][A-Za-z_0-9]*)\s*\((.*)\)\s*$")
_NUMBER_RE = re.compile(r"^-?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _parse_args(text: str, lineno: int) -> tuple[Arg, ...]:
    args: list[Arg] = []
    rest = text.strip()
    while rest:
        rest = rest.lstrip()
        if rest.startswith('"'):
            end = rest.find('"', 1)
            if end < 0:
                raise QueryError(f"line {lineno}: unterminated string literal")
            args.append(rest[1:end])
            rest = rest[end + 1 :].lstrip()
        else:
            token, _, rest = rest.partition(",")
            token = token.strip()
            if not token:
                raise QueryError(f"line {lineno}: empty argument")
            if token.startswith("$"):
                args.append(SlotRef(token[1:]))
            elif _NUMBER_RE.match(token):
                args.append(float(token))
            else:
                args.append(Ref(token))
            continue
        if rest.startswith(","):
            rest = rest[1:].lstrip()
        elif rest:
            raise QueryError(f"line {lineno}: expected ',' between arguments")
    return tuple(args)


def parse_query_program(text: str, allow_slots: bool = False) -> QueryProgram:
    """Parse the canonical one-step-per-line form."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _STEP_RE.match(line)
        if not m:
            raise QueryError(f"line {lineno}: expected 'name = op(args)', got {line!r}")
        target, op, argtext = m.groups()
        args = _parse_args(argtext, lineno)
        if not allow_slots and any(isinstance(a, SlotRef) for a in args):
            raise QueryError(f"line {lineno}: slot placeholders not allowed here")
        steps.append(QueryStep(target=target, op=op, args=args))
    return QueryProgram(steps=tuple(steps))


def _format_arg(arg: Arg) -> str:
    if isinstance(arg, Ref):
        return arg.name
    if isinstance(arg, SlotRef):
        return f"${arg.symbol}"
    if isinstance(arg, float):
        return format_number(arg) if float(arg).is_integer() else repr(float(arg))
    return f'"{arg}"'


def print_query_program(program: QueryProgram) -> str:
    return "\n".join(
        f"{s.target} = {s.op}({', '.join(_format_arg(a) for a in s.args)})"
        for s in program.steps
    )


# --- evaluation --------------------------------------------------------------

_SIDES = ("left", "right", "top", "bottom")


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


def spatial_rank(spec: ChartSpec, side: str, k: int) -> ElementSet:
    """The k-th plotted element from `side`, by bbox center along that axis.

    left/right order by x center ascending/descending, top/bottom by y
    center ascending/descending (pixel y grows downward). Ties keep
    first-appearance order.
    """
    if side not in _SIDES:
        raise QueryError(f"side must be one of {_SIDES}, got {side!r}")
    if spec.chart_type not in BAR_TYPES:
        raise CapabilityError(f"positional selection needs a bar chart, got {spec.chart_type}")
    members = []
    for gi, ei, _, entry in spec.iter_entries():
        if entry.bbox is None:
            raise CapabilityError(f"entry {entry.label!r} has no bounding box")
        cx, cy = entry.bbox.center
        members.append((gi, ei, cx, cy))
    if not isinstance(k, int) or isinstance(k, bool):
        k = int(k)
    if k < 1 or k > len(members):
        raise RangeError(f"rank {k} out of range for {len(members)} elements")
    axis = 2 if side in ("left", "right") else 3
    reverse = side in ("right", "bottom")
    ordered = sorted(members, key=lambda m: -m[axis] if reverse else m[axis])
    gi, ei, _, _ = ordered[k - 1]
    return ElementSet(members=((gi, ei),))


def extreme_rank(spec: ChartSpec, which: str, k: int) -> ElementSet:
    """The k smallest ("min") or largest ("max") entries, rank order.

    Ties are broken by first-appearance order, making the result
    deterministic for any spec.
    """
    flat = [(gi, ei, e.value) for gi, ei, _, e in spec.iter_entries()]
    if k < 1 or k > len(flat):
        raise RangeError(f"rank {k} out of range for {len(flat)} elements")
    ordered = sorted(flat, key=lambda m: m[2], reverse=(which == "max"))
    return ElementSet(members=tuple((gi, ei) for gi, ei, _ in ordered[:k]))


def _entry(spec: ChartSpec, ref: tuple[int, int]):
    gi, ei = ref
    return spec.groups[gi].entries[ei]


def select_by_label(spec: ChartSpec, label: str, group: str | None = None) -> ElementSet:
    want = _norm(label)
    if group is not None:
        want_group = _norm(group)
        members = tuple(
            (gi, ei)
            for gi, ei, g, e in spec.iter_entries()
            if _norm(g.name) == want_group and _norm(e.label) == want
        )
        if not members:
            # the caller may have swapped the two name roles
            members = tuple(
                (gi, ei)
                for gi, ei, g, e in spec.iter_entries()
                if _norm(g.name) == want and _norm(e.label) == want_group
            )
        if not members:
            raise SelectionError(f"no entry labeled {label!r} in group {group!r}")
        return ElementSet(members=members)
    members = tuple((gi, ei) for gi, ei, _, e in spec.iter_entries() if _norm(e.label) == want)
    if not members:
        members = tuple(
            (gi, ei) for gi, ei, g, _ in spec.iter_entries() if g.name and _norm(g.name) == want
        )
    if not members:
        raise SelectionError(f"nothing labeled or named {label!r}")
    return ElementSet(members=members)


def _singleton(spec: ChartSpec, value: Value, op: str):
    if not isinstance(value, ElementSet):
        raise QueryTypeError(f"{op} expects an element set")
    if len(value) != 1:
        raise AmbiguityError(f"{op} expects exactly one element, got {len(value)}")
    return _entry(spec, value.members[0])


def _numbers(spec: ChartSpec, args: list[Value], op: str) -> list[float]:
    out: list[float] = []
    for value in args:
        if isinstance(value, bool):
            raise QueryTypeError(f"{op} cannot consume a boolean")
        if isinstance(value, float):
            out.append(value)
        elif isinstance(value, ElementSet):
            out.extend(_entry(spec, ref).value for ref in value.members)
        else:
            raise QueryTypeError(f"{op} cannot consume text {value!r}")
    return out


def _number_pair(args: list[Value], op: str) -> tuple[float, float]:
    pair = []
    for value in args:
        if isinstance(value, bool) or not isinstance(value, float):
            raise QueryTypeError(f"{op} expects two numbers")
        pair.append(value)
    return pair[0], pair[1]


def evaluate_query(program: QueryProgram, spec: ChartSpec) -> Value:
    """Run the program against the spec and return the "ans" value."""
    value, _ = evaluate_query_env(program, spec)
    return value


def evaluate_query_env(program: QueryProgram, spec: ChartSpec) -> tuple[Value, dict[str, Value]]:
    """Like `evaluate_query` but also exposes every intermediate binding."""
    env: dict[str, Value] = {}
    for step in program.steps:
        args: list[Value] = []
        for arg in step.args:
            if isinstance(arg, SlotRef):
                raise QueryError(f"unsubstituted slot ${arg.symbol} in program")
            args.append(env[arg.name] if isinstance(arg, Ref) else arg)
        env[step.target] = _apply(spec, step.op, args)
    return env[FINAL_BINDING], env


def _apply(spec: ChartSpec, op: str, args: list[Value]) -> Value:
    if op == "select_by_label":
        label = args[0]
        group = args[1] if len(args) == 2 else None
        if not isinstance(label, str) or (group is not None and not isinstance(group, str)):
            raise QueryTypeError("select_by_label expects text arguments")
        return select_by_label(spec, label, group)
    if op == "select_by_color":
        color = args[0]
        if not isinstance(color, str):
            raise QueryTypeError("select_by_color expects a color name")
        members = tuple(
            (gi, ei) for gi, ei, _, e in spec.iter_entries() if e.color == _norm(color)
        )
        if not members:
            raise SelectionError(f"no element colored {color!r}")
        return ElementSet(members=members)
    if op == "select_by_position":
        side, k = args
        if not isinstance(side, str) or not isinstance(k, float):
            raise QueryTypeError("select_by_position expects (side, rank)")
        return spatial_rank(spec, side, int(k))
    if op == "select_extreme":
        which, k = args
        if which not in ("min", "max") or not isinstance(k, float):
            raise QueryTypeError('select_extreme expects ("min"|"max", rank)')
        return extreme_rank(spec, which, int(k))
    if op == "query_value":
        return float(_singleton(spec, args[0], op).value)
    if op == "query_color":
        entry = _singleton(spec, args[0], op)
        if entry.color is None:
            raise SelectionError(f"entry {entry.label!r} has no color annotation")
        return entry.color
    if op == "query_label":
        return _singleton(spec, args[0], op).label
    if op == "count":
        if not args or args[0] == "elements":
            return float(spec.entry_count)
        if args[0] == "colors":
            return float(len({e.color for _, _, _, e in spec.iter_entries() if e.color}))
        if isinstance(args[0], ElementSet):
            return float(len(args[0]))
        raise QueryTypeError(f"count cannot consume {args[0]!r}")
    if op in ("sum", "avg", "min", "max"):
        values = _numbers(spec, args, op)
        if not values:
            raise QueryTypeError(f"{op} needs at least one value")
        if op == "sum":
            return float(sum(values))
        if op == "avg":
            return float(sum(values) / len(values))
        return float(min(values) if op == "min" else max(values))
    if op == "diff":
        a, b = _number_pair(args, op)
        return a - b
    if op == "ratio":
        a, b = _number_pair(args, op)
        if b == 0:
            raise QueryArithmeticError("ratio with zero denominator")
        return a / b
    if op == "compare":
        direction = args[2]
        if direction not in ("greater", "less"):
            raise QueryTypeError('compare direction must be "greater" or "less"')
        a, b = _number_pair(args[:2], op)
        return a > b if direction == "greater" else a < b
    raise QueryError(f"unknown op {op!r}")


def value_to_text(value: Value) -> str:
    """Render a final answer value: numbers clipped to two decimals,
    booleans as Yes/No, text passed through."""
    if isinstance(value, bool):
        return bool_text(value)
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, str):
        return value
    raise QueryTypeError("an element set is not a final answer")
