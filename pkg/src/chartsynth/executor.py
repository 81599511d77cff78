"""Rationale execution: derive final answers by running rationale programs.

VQA steps are resolved by a pluggable answerer; tool calls run natively on
plain floats. Three answerers ship here:

* `GroundTruthAnswerer` answers atomic questions by structured lookup in a
  ChartSpec store. It is deliberately strict: a question it cannot parse,
  or one whose referent is missing or ambiguous, fails instead of guessing,
  which is how hallucinated sub-questions surface as execution failures.
* `ServiceAnswerer` forwards to an external model endpoint.
* `ScriptedAnswerer` maps exact question strings to canned replies (tests).

Execution never raises for a bad program or reply; it returns a trace whose
failure fields say which step broke and why.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Union, runtime_checkable

from .charts import PALETTE, ChartSpec
from .formatting import bool_text, format_number
from .queries import (
    QueryError,
    SelectionError,
    extreme_rank,
    select_by_label,
    spatial_rank,
)
from .rationales import RationaleProgram, RationaleStep, ToolCall, VqaCall
from .transport import post_json_lines

log = logging.getLogger(__name__)


class AnswererError(Exception):
    """An answerer could not produce a reply for a question."""


class CoercionError(ValueError):
    """A textual reply could not be read as a number."""


@runtime_checkable
class Answerer(Protocol):
    name: str

    def answer(self, image_id: str, question: str) -> str: ...


# --- numeric coercion ---------------------------------------------------------

_NUMERIC_RE = re.compile(
    r"^\s*[$€£¥]?\s*(?P<body>[+-]?(?:[0-9][0-9,]*(?:\.[0-9]+)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)\s*%?\s*$"
)


def coerce_numeric(reply: str) -> float:
    """Read a decimal out of answer text.

    Tolerates surrounding whitespace, one leading currency symbol, a
    trailing "%", and thousands separators. A percent sign does not
    rescale: "42%" coerces to 42.
    """
    m = _NUMERIC_RE.match(reply)
    if not m:
        raise CoercionError(f"non-numeric operand {reply!r}")
    return float(m.group("body").replace(",", ""))


# --- execution -----------------------------------------------------------------

Binding = Union[str, float, bool]


@dataclass
class StepTrace:
    target: str
    call: str
    value: str
    elapsed: float


@dataclass
class ExecutionTrace:
    """Per-step results plus the final outcome.

    `failed_step` is the 1-based index of the first failing step; `steps`
    holds only the steps that completed.
    """

    steps: list[StepTrace] = field(default_factory=list)
    answer: str | None = None
    failed_step: int | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.answer is not None

    def diagnostic(self, image_id: str) -> str:
        """One-line failure record for triage files."""
        if self.ok:
            return f"{image_id}, -, ok"
        return f"{image_id}, {self.failed_step}, {self.failure}"


def _render_binding(value: Binding) -> str:
    if isinstance(value, bool):
        return bool_text(value)
    if isinstance(value, float):
        return format_number(value)
    return value


def _plain_step_text(step: RationaleStep) -> str:
    if isinstance(step.call, VqaCall):
        return f'{step.target} = VQA("{step.call.question}")'
    args = ", ".join(
        a if isinstance(a, str) else format_number(a) for a in step.call.args
    )
    return f"{step.target} = {step.call.op}({args})"


def _apply_tool(call: ToolCall, bindings: dict[str, Binding]) -> Binding:
    resolved = [bindings[a] if isinstance(a, str) else a for a in call.args]
    if call.op == "count":
        return float(len(resolved))
    numbers = []
    for value in resolved:
        if isinstance(value, bool):
            raise CoercionError("boolean operand in arithmetic")
        numbers.append(coerce_numeric(value) if isinstance(value, str) else float(value))
    if call.op == "sum":
        return float(sum(numbers))
    if call.op == "avg":
        return float(sum(numbers) / len(numbers))
    if call.op == "min":
        return float(min(numbers))
    if call.op == "max":
        return float(max(numbers))
    if call.op == "diff":
        return numbers[0] - numbers[1]
    if call.op == "times":
        return numbers[0] * numbers[1]
    if call.op == "ratio":
        if numbers[1] == 0:
            raise CoercionError("ratio with zero denominator")
        return numbers[0] / numbers[1]
    if call.op == "compare_greater":
        return numbers[0] > numbers[1]
    if call.op == "compare_less":
        return numbers[0] < numbers[1]
    raise CoercionError(f"unknown tool op {call.op!r}")


def execute(program: RationaleProgram, image_id: str, answerer: Answerer) -> ExecutionTrace:
    """Run every step in order; stop at the first failure."""
    bindings: dict[str, Binding] = {}
    trace = ExecutionTrace()
    for index, step in enumerate(program.steps, start=1):
        started = time.perf_counter()
        try:
            if isinstance(step.call, VqaCall):
                result: Binding = answerer.answer(image_id, step.call.question)
            else:
                result = _apply_tool(step.call, bindings)
        except Exception as err:  # a bad step must never abort the batch
            trace.failed_step = index
            trace.failure = str(err) or type(err).__name__
            return trace
        bindings[step.target] = result
        trace.steps.append(
            StepTrace(
                target=step.target,
                call=_plain_step_text(step),
                value=_render_binding(result),
                elapsed=time.perf_counter() - started,
            )
        )
    trace.answer = _render_binding(bindings["ans"])
    return trace


# --- answerers -------------------------------------------------------------------


class ScriptedAnswerer:
    """Exact question -> reply mapping; unknown questions fail."""

    name = "scripted"

    def __init__(self, replies: Mapping[str, str]):
        self._replies = dict(replies)

    def answer(self, image_id: str, question: str) -> str:
        try:
            return self._replies[question]
        except KeyError:
            raise AnswererError(f"no scripted reply for {question!r}") from None


class GroundTruthAnswerer:
    """Answers atomic questions by structured lookup against chart specs."""

    name = "groundtruth"

    def __init__(self, specs: Mapping[str, ChartSpec]):
        self._specs = dict(specs)

    @classmethod
    def from_specs(cls, specs) -> "GroundTruthAnswerer":
        return cls({spec.image_id: spec for spec in specs})

    def answer(self, image_id: str, question: str) -> str:
        spec = self._specs.get(image_id)
        if spec is None:
            raise AnswererError(f"no chart annotations for image {image_id!r}")
        return ground_truth_answer(spec, question)


class ServiceAnswerer:
    """Forwards atomic questions to an external answering endpoint."""

    name = "service"

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 3, backoff: float = 0.5):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def answer(self, image_id: str, question: str) -> str:
        try:
            records = post_json_lines(
                f"{self.endpoint}/answer",
                {"image_id": image_id, "question": question},
                timeout=self.timeout,
                retries=self.retries,
                backoff=self.backoff,
            )
        except Exception as err:
            raise AnswererError(f"answer service failed: {err}") from err
        if not records or "answer" not in records[0]:
            raise AnswererError("answer service reply missing 'answer'")
        return str(records[0]["answer"])


# --- ground-truth question patterns ----------------------------------------------

_SIDE = r"(left|right|top|bottom)"
_ORDINAL = {"second": 2, "third": 3}

_VALUE_AT_SIDE = re.compile(rf"^what is the value of the {_SIDE} bar$")
_VALUE_AT_RANK = re.compile(rf"^what is the value of the (second|third) bar from the {_SIDE}$")
_LABEL_AT_SIDE = re.compile(rf"^what does the {_SIDE} bar represent$")
_LABEL_AT_RANK = re.compile(rf"^what is represented by the (second|third) bar from the {_SIDE}$")
_VALUE_EXTREME = re.compile(r"^what is the value of the (?:(second|third) )?(smallest|largest) category$")
_LABEL_EXTREME = re.compile(r"^what is the (smallest|largest) category$")
_VALUE_OF = re.compile(r"^what is the value of (.+)$")
_COLOR_OF = re.compile(r"^what color is (.+) represented$")
_LABEL_OF_COLOR = re.compile(r"^which category is represented by (.+)$")
_COUNT_COLORS = re.compile(r"^how many colors are used to represent the (.+) in the plot$")
_COUNT = re.compile(r"^how many (.+) are shown in the plot$")


def _normalize_question(question: str) -> str:
    q = " ".join(question.split()).strip().casefold()
    return q.rstrip("?").strip()


def _name_variants(phrase: str) -> list[str]:
    """Undecorated forms of a name phrase: strip "the " / " category"."""
    variants = [phrase]
    if phrase.startswith("the "):
        variants.append(phrase[4:])
    more = []
    for v in variants:
        if v.endswith(" category"):
            more.append(v[: -len(" category")])
    variants.extend(more)
    out = []
    for v in variants:
        if v and v not in out:
            out.append(v)
    return out


def _resolve_members(spec: ChartSpec, phrase: str) -> list:
    """Resolve a (possibly decorated, possibly "G in L") name phrase.

    The first decoration variant that selects anything wins: whole-phrase
    label/group lookup first, then group-scoped "<group> in <label>"
    splits. Returns the matched entries.
    """
    for name in _name_variants(phrase):
        try:
            selected = select_by_label(spec, name)
            return [spec.groups[gi].entries[ei] for gi, ei in selected.members]
        except SelectionError:
            pass
        start = 0
        while True:
            cut = name.find(" in ", start)
            if cut < 0:
                break
            left, right = name[:cut], name[cut + 4 :]
            try:
                selected = select_by_label(spec, right, left)
                return [spec.groups[gi].entries[ei] for gi, ei in selected.members]
            except SelectionError:
                pass
            start = cut + 4
    raise AnswererError(f"cannot resolve {phrase!r} in the chart")


def _resolve_single_entry(spec: ChartSpec, phrase: str):
    entries = _resolve_members(spec, phrase)
    if len(entries) != 1:
        raise AnswererError(f"{phrase!r} matches {len(entries)} elements")
    return entries[0]


def _position_entry(spec: ChartSpec, side: str, rank: int):
    try:
        selected = spatial_rank(spec, side, rank)
    except QueryError as err:
        raise AnswererError(str(err)) from None
    gi, ei = selected.members[0]
    return spec.groups[gi].entries[ei]


def _extreme_entry(spec: ChartSpec, which: str, rank: int):
    try:
        selected = extreme_rank(spec, "min" if which == "smallest" else "max", rank)
    except QueryError as err:
        raise AnswererError(str(err)) from None
    gi, ei = selected.members[rank - 1]
    return spec.groups[gi].entries[ei]


def ground_truth_answer(spec: ChartSpec, question: str) -> str:
    """Answer one atomic question from the spec, or fail loudly.

    Supported shapes mirror the sub-questions the template pipeline emits:
    value/color lookups by name, lookups by color, positional and extreme
    lookups, and the three counting forms.
    """
    q = _normalize_question(question)

    m = _VALUE_AT_SIDE.match(q)
    if m:
        return format_number(_position_entry(spec, m.group(1), 1).value)
    m = _VALUE_AT_RANK.match(q)
    if m:
        return format_number(_position_entry(spec, m.group(2), _ORDINAL[m.group(1)]).value)
    m = _LABEL_AT_SIDE.match(q)
    if m:
        return _position_entry(spec, m.group(1), 1).label
    m = _LABEL_AT_RANK.match(q)
    if m:
        return _position_entry(spec, m.group(2), _ORDINAL[m.group(1)]).label
    m = _VALUE_EXTREME.match(q)
    if m:
        rank = _ORDINAL[m.group(1)] if m.group(1) else 1
        return format_number(_extreme_entry(spec, m.group(2), rank).value)
    m = _LABEL_EXTREME.match(q)
    if m:
        return _extreme_entry(spec, m.group(1), 1).label
    m = _COUNT_COLORS.match(q)
    if m:
        if m.group(1) != f"{spec.element_kind.casefold()}s":
            raise AnswererError(f"unsupported pattern: {question!r}")
        colors = {e.color for _, _, _, e in spec.iter_entries() if e.color}
        return format_number(float(len(colors)))
    m = _COUNT.match(q)
    if m:
        phrase = m.group(1)
        if phrase == f"{spec.element_kind.casefold()}s":
            return format_number(float(spec.entry_count))
        words = phrase.split()
        if len(words) == 2 and words[0] in PALETTE and words[1] == "bars":
            n = sum(1 for _, _, _, e in spec.iter_entries() if e.color == words[0])
            return format_number(float(n))
        raise AnswererError(f"unsupported pattern: {question!r}")
    m = _COLOR_OF.match(q)
    if m:
        # a whole series shares one color, so a uniform multi-match is fine
        entries = _resolve_members(spec, m.group(1))
        colors = {e.color for e in entries}
        if colors == {None}:
            raise AnswererError(f"{m.group(1)!r} has no color annotation")
        if len(colors) != 1:
            raise AnswererError(f"{m.group(1)!r} has no single color")
        return colors.pop()
    m = _LABEL_OF_COLOR.match(q)
    if m:
        color = m.group(1)
        if color not in PALETTE:
            raise AnswererError(f"{color!r} is not a known color")
        matches = [e for _, _, _, e in spec.iter_entries() if e.color == color]
        if not matches:
            raise AnswererError(f"no element colored {color!r}")
        if len(matches) > 1:
            raise AnswererError(f"{color!r} matches {len(matches)} elements")
        return matches[0].label
    m = _VALUE_OF.match(q)
    if m:
        phrase = m.group(1)
        words = phrase.split()
        if len(words) == 3 and words[0] == "the" and words[1] in PALETTE:
            color = words[1]
            matches = [e for _, _, _, e in spec.iter_entries() if e.color == color]
            if not matches:
                raise AnswererError(f"no element colored {color!r}")
            if len(matches) > 1:
                raise AnswererError(f"{color!r} matches {len(matches)} elements")
            return format_number(matches[0].value)
        return format_number(_resolve_single_entry(spec, phrase).value)

    raise AnswererError(f"unsupported pattern: {question!r}")
