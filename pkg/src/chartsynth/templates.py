"""Question templates and their instantiation against chart annotations.

The shipped catalog (data/templates.json) holds 28 templates in four
sections (3 color, 6 spatial, 3 count, 16 math). Each template bundles a
question pattern with typed slots and bracketed optional phrases, a query
program that computes the gold answer, a rationale plan that turns the
program into an executable step-by-step rationale, and preconditions over
the chart.

Instantiation fills slots from the chart, evaluates the program for the
gold answer, renders the rationale, and skips any filling whose program
evaluation fails (ambiguous color, zero denominator, ...). All choices
are driven by a seeded pseudorandom stream, so generation is reproducible
and parallelizable per image.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .charts import BAR_TYPES, ChartSpec
from .queries import (
    ElementSet,
    QueryError,
    QueryProgram,
    QueryStep,
    SlotRef,
    evaluate_query_env,
    parse_query_program,
    value_to_text,
)
from .rationales import RationaleProgram, RationaleStep, ToolCall, VqaCall, print_rationale

CATEGORIES = ("color", "spatial", "count", "math")
CATEGORY_SIZES = {"color": 3, "spatial": 6, "count": 3, "math": 16}
QUESTION_TYPES = ("colors", "spatial", "count", "minmax", "average", "compare", "calculation")
SLOT_SYMBOLS = ("N", "C", "F", "S", "L", "L2")
SLOT_DOMAINS = ("name_single", "name_multi", "color", "kind", "side", "label")
TEMPLATE_COUNT = 28

_SLOT_MARK = re.compile(r"⟨([A-Z][A-Z0-9]*)⟩")
_BRACKET = re.compile(r"\[([^\]]*)\]")
_SLOT_SUBST = re.compile(r"\$([A-Z][A-Z0-9]*)")


class CatalogError(ValueError):
    """The template catalog is malformed or incomplete."""


@dataclass(frozen=True)
class SlotSpec:
    symbol: str
    domain: str


@dataclass(frozen=True)
class AskStep:
    question: str
    covers: tuple[str, ...]


@dataclass(frozen=True)
class AskEachStep:
    over: str  # program binding of an element set, or "all"
    question: str  # contains {member}
    covers: tuple[str, ...]


@dataclass(frozen=True)
class CallStep:
    op: str
    args: tuple[str, ...]  # "@<k>" plan-step refs or "*" for all asked values
    covers: tuple[str, ...]


PlanStep = AskStep | AskEachStep | CallStep


@dataclass(frozen=True)
class Template:
    id: int
    category: str
    question_type: str
    pattern: str
    slots: tuple[SlotSpec, ...]
    preconditions: tuple[str, ...]
    program: QueryProgram
    plan: tuple[PlanStep, ...]


@dataclass(frozen=True)
class TemplateQa:
    image_id: str
    template_id: int
    question: str
    answer: str
    rationale_text: str
    question_type: str


# --- catalog loading ----------------------------------------------------------


def load_templates(document: str) -> list[Template]:
    """Parse and fully validate a catalog document."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as err:
        raise CatalogError(f"catalog is not valid JSON: {err}") from None
    raw_templates = data.get("templates")
    if not isinstance(raw_templates, list):
        raise CatalogError("catalog has no 'templates' list")

    templates = [_load_one(item) for item in raw_templates]

    ids = [t.id for t in templates]
    if sorted(ids) != list(range(1, TEMPLATE_COUNT + 1)):
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise CatalogError(f"duplicate template ids {sorted(dupes)}")
        missing = sorted(set(range(1, TEMPLATE_COUNT + 1)) - set(ids))
        raise CatalogError(f"catalog must hold ids 1..{TEMPLATE_COUNT}; missing {missing}")
    for category, expected in CATEGORY_SIZES.items():
        have = sum(1 for t in templates if t.category == category)
        if have != expected:
            raise CatalogError(f"category {category!r} must have {expected} templates, found {have}")
    return sorted(templates, key=lambda t: t.id)


def _load_one(item: dict) -> Template:
    try:
        tid = int(item["id"])
        category = item["category"]
        question_type = item["question_type"]
        pattern = item["pattern"]
        raw_slots = item.get("slots", [])
        preconditions = tuple(item.get("preconditions", []))
        program_lines = item["program"]
        raw_plan = item["rationale"]
    except KeyError as err:
        raise CatalogError(f"template entry missing field {err}") from None

    if category not in CATEGORIES:
        raise CatalogError(f"template {tid}: unknown category {category!r}")
    if question_type not in QUESTION_TYPES:
        raise CatalogError(f"template {tid}: unknown question type {question_type!r}")

    slots = tuple(SlotSpec(symbol=s["symbol"], domain=s["domain"]) for s in raw_slots)
    declared = {s.symbol for s in slots}
    for slot in slots:
        if slot.symbol not in SLOT_SYMBOLS:
            raise CatalogError(f"template {tid}: unknown slot symbol {slot.symbol!r}")
        if slot.domain not in SLOT_DOMAINS:
            raise CatalogError(f"template {tid}: unknown slot domain {slot.domain!r}")
    for symbol in _SLOT_MARK.findall(pattern):
        if symbol not in declared:
            raise CatalogError(f"template {tid}: pattern uses undeclared slot {symbol!r}")

    try:
        program = parse_query_program("\n".join(program_lines), allow_slots=True)
    except QueryError as err:
        raise CatalogError(f"template {tid}: bad program: {err}") from None
    for symbol in program.slot_symbols():
        if symbol not in declared:
            raise CatalogError(f"template {tid}: program uses undeclared slot {symbol!r}")

    for name in preconditions:
        if not _known_precondition(name):
            raise CatalogError(f"template {tid}: unknown precondition {name!r}")

    plan = tuple(_load_plan_step(tid, i, s, declared) for i, s in enumerate(raw_plan))
    _check_plan(tid, plan, program)
    return Template(
        id=tid,
        category=category,
        question_type=question_type,
        pattern=pattern,
        slots=slots,
        preconditions=preconditions,
        program=program,
        plan=plan,
    )


def _load_plan_step(tid: int, index: int, step: dict, declared: set[str]) -> PlanStep:
    covers = tuple(step.get("covers", []))
    if "ask" in step:
        _check_plan_slots(tid, step["ask"], declared)
        return AskStep(question=step["ask"], covers=covers)
    if "ask_each" in step:
        question = step.get("question", "")
        if "{member}" not in question:
            raise CatalogError(f"template {tid}: ask_each question needs {{member}}")
        _check_plan_slots(tid, question, declared)
        return AskEachStep(over=step["ask_each"], question=question, covers=covers)
    if "call" in step:
        from .rationales import TOOL_OPS

        if step["call"] not in TOOL_OPS:
            raise CatalogError(f"template {tid}: unknown tool op {step['call']!r}")
        return CallStep(op=step["call"], args=tuple(step.get("args", [])), covers=covers)
    raise CatalogError(f"template {tid}: plan step {index} has no ask/ask_each/call")


def _check_plan_slots(tid: int, question: str, declared: set[str]) -> None:
    for symbol in _SLOT_SUBST.findall(question):
        if symbol not in declared:
            raise CatalogError(f"template {tid}: rationale uses undeclared slot {symbol!r}")


def _check_plan(tid: int, plan: tuple[PlanStep, ...], program: QueryProgram) -> None:
    if not plan:
        raise CatalogError(f"template {tid}: empty rationale plan")
    targets = {s.target for s in program.steps}
    covered: set[str] = set()
    for step in plan:
        unknown = set(step.covers) - targets
        if unknown:
            raise CatalogError(f"template {tid}: plan covers unknown steps {sorted(unknown)}")
        covered.update(step.covers)
        if isinstance(step, AskEachStep) and step.over != "all" and step.over not in targets:
            raise CatalogError(f"template {tid}: ask_each over unknown binding {step.over!r}")
        if isinstance(step, CallStep):
            for arg in step.args:
                if arg == "*":
                    continue
                if arg.startswith("@"):
                    k = int(arg[1:])
                    if k >= len(plan) or not isinstance(plan[k], (AskStep, CallStep)):
                        raise CatalogError(f"template {tid}: bad plan reference {arg!r}")
    uncovered = targets - covered
    if uncovered:
        raise CatalogError(f"template {tid}: program steps never covered: {sorted(uncovered)}")


def load_default_templates() -> list[Template]:
    text = resources.files("chartsynth.data").joinpath("templates.json").read_text("utf-8")
    return load_templates(text)


# --- preconditions and slot domains --------------------------------------------


def _known_precondition(name: str) -> bool:
    if name in ("bar_chart", "has_bboxes", "has_color", "all_colored"):
        return True
    head, _, arg = name.partition(":")
    return head in ("min_entries", "min_labels") and arg.isdigit()


def _precondition_ok(name: str, spec: ChartSpec) -> bool:
    entries = [e for _, _, _, e in spec.iter_entries()]
    if name == "bar_chart":
        return spec.chart_type in BAR_TYPES
    if name == "has_bboxes":
        return all(e.bbox is not None for e in entries)
    if name == "has_color":
        return any(e.color is not None for e in entries)
    if name == "all_colored":
        return all(e.color is not None for e in entries)
    head, _, arg = name.partition(":")
    if head == "min_entries":
        return spec.entry_count >= int(arg)
    if head == "min_labels":
        return len(spec.distinct_labels()) >= int(arg)
    raise CatalogError(f"unknown precondition {name!r}")


def _selection_sizes(spec: ChartSpec) -> dict[str, int]:
    """How many entries each usable name (label or group name) selects.

    Mirrors select_by_label: labels win, group names only resolve when no
    label carries the same text.
    """
    sizes: dict[str, int] = {}
    label_keys: set[str] = set()
    for _, _, _, entry in spec.iter_entries():
        key = entry.label.casefold()
        label_keys.add(key)
        if entry.label not in sizes:
            sizes[entry.label] = 0
    for _, _, _, entry in spec.iter_entries():
        sizes[entry.label] += 1
    for group in spec.groups:
        if group.name and group.name.casefold() not in label_keys and group.name not in sizes:
            sizes[group.name] = len(group.entries)
    return sizes


def _domain_values(domain: str, spec: ChartSpec) -> list[str]:
    if domain == "name_single":
        return [n for n, size in _selection_sizes(spec).items() if size == 1]
    if domain == "name_multi":
        return [n for n, size in _selection_sizes(spec).items() if size >= 2]
    if domain == "color":
        seen: list[str] = []
        for _, _, _, entry in spec.iter_entries():
            if entry.color and entry.color not in seen:
                seen.append(entry.color)
        return seen
    if domain == "kind":
        return [spec.element_kind]
    if domain == "side":
        if spec.chart_type == "vertical_bar":
            return ["left", "right"]
        if spec.chart_type == "horizontal_bar":
            return ["top", "bottom"]
        return []
    if domain == "label":
        return spec.distinct_labels()
    raise CatalogError(f"unknown slot domain {domain!r}")


def _slot_combinations(template: Template, spec: ChartSpec) -> list[dict[str, str]]:
    combos: list[dict[str, str]] = [{}]
    for slot in template.slots:
        values = _domain_values(slot.domain, spec)
        if not values:
            return []
        combos = [
            {**combo, slot.symbol: value} for combo in combos for value in values
        ]
    if any(s.symbol == "L" for s in template.slots) and any(
        s.symbol == "L2" for s in template.slots
    ):
        combos = [c for c in combos if c["L"] != c["L2"]]
    return combos


# --- instantiation --------------------------------------------------------------


def _substitute_program(program: QueryProgram, values: dict[str, str]) -> QueryProgram:
    steps = []
    for step in program.steps:
        args = tuple(
            values[a.symbol] if isinstance(a, SlotRef) else a for a in step.args
        )
        steps.append(QueryStep(target=step.target, op=step.op, args=args))
    return QueryProgram(steps=tuple(steps))


def _substitute_slots(text: str, values: dict[str, str]) -> str:
    return _SLOT_SUBST.sub(lambda m: values[m.group(1)], text)


def _member_phrase(spec: ChartSpec, gi: int, ei: int) -> str:
    group = spec.groups[gi]
    entry = group.entries[ei]
    return f"{group.name} in {entry.label}" if group.name else entry.label


def _render_question(pattern: str, values: dict[str, str], rng: random.Random) -> str:
    resolved = _BRACKET.sub(lambda m: m.group(1) if rng.random() < 0.5 else "", pattern)
    return _SLOT_MARK.sub(lambda m: values[m.group(1)], resolved)


def _build_rationale(
    template: Template,
    spec: ChartSpec,
    env: dict,
    values: dict[str, str],
) -> RationaleProgram:
    # resolve the plan into concrete calls, then name them ans_0.. / ans
    resolved: list[tuple[str, object]] = []  # ("vqa", question) | ("tool", ToolCall parts)
    per_plan_output: list[list[int]] = []  # plan step -> indices into `resolved`
    ask_indices: list[int] = []

    for step in template.plan:
        outputs: list[int] = []
        if isinstance(step, AskStep):
            question = _substitute_slots(step.question, values)
            outputs.append(len(resolved))
            ask_indices.append(len(resolved))
            resolved.append(("vqa", question))
        elif isinstance(step, AskEachStep):
            members = _plan_members(template, spec, env, step.over)
            for gi, ei in members:
                question = _substitute_slots(
                    step.question.replace("{member}", _member_phrase(spec, gi, ei)), values
                )
                outputs.append(len(resolved))
                ask_indices.append(len(resolved))
                resolved.append(("vqa", question))
        else:
            args: list[object] = []
            for arg in step.args:
                if arg == "*":
                    args.extend(ask_indices)
                elif isinstance(arg, str) and arg.startswith("@"):
                    refs = per_plan_output[int(arg[1:])]
                    if len(refs) != 1:
                        raise CatalogError(
                            f"template {template.id}: {arg} does not name a single step"
                        )
                    args.append(refs[0])
                else:
                    args.append(float(arg))
            outputs.append(len(resolved))
            resolved.append(("tool", (step.op, tuple(args))))
        per_plan_output.append(outputs)

    names = [f"ans_{i}" for i in range(len(resolved) - 1)] + ["ans"]
    steps: list[RationaleStep] = []
    for name, (kind, payload) in zip(names, resolved):
        if kind == "vqa":
            steps.append(RationaleStep(target=name, call=VqaCall(question=payload)))
        else:
            op, args = payload
            call_args = tuple(names[a] if isinstance(a, int) else a for a in args)
            steps.append(RationaleStep(target=name, call=ToolCall(op=op, args=call_args)))
    return RationaleProgram(steps=tuple(steps))


def _plan_members(template: Template, spec: ChartSpec, env: dict, over: str):
    if over == "all":
        return [(gi, ei) for gi, ei, _, _ in spec.iter_entries()]
    value = env.get(over)
    if not isinstance(value, ElementSet):
        raise CatalogError(f"template {template.id}: {over!r} is not an element set")
    return list(value.members)


def instantiate(
    template: Template,
    spec: ChartSpec,
    budget: int,
    rng: random.Random | None = None,
) -> list[TemplateQa]:
    """Generate up to `budget` QA items for one template on one chart.

    Fillings whose program evaluation fails are skipped rather than
    emitted; an unsatisfiable template yields an empty list.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    if not all(_precondition_ok(p, spec) for p in template.preconditions):
        return []
    combos = _slot_combinations(template, spec)
    if not combos:
        return []
    if rng is None:
        rng = random.Random(f"{spec.image_id}/{template.id}")
    rng.shuffle(combos)

    out: list[TemplateQa] = []
    for values in combos:
        if len(out) >= budget:
            break
        program = _substitute_program(template.program, values)
        try:
            answer_value, env = evaluate_query_env(program, spec)
            answer = value_to_text(answer_value)
        except QueryError:
            continue
        rationale = _build_rationale(template, spec, env, values)
        question = _render_question(template.pattern, values, rng)
        out.append(
            TemplateQa(
                image_id=spec.image_id,
                template_id=template.id,
                question=question,
                answer=answer,
                rationale_text=print_rationale(rationale),
                question_type=template.question_type,
            )
        )
    return out


def generate_corpus(
    specs: Iterable[ChartSpec],
    templates: Sequence[Template],
    seed: int,
    per_image_budget: int = 20,
) -> list[TemplateQa]:
    """Instantiate every template over every spec, capped per image.

    Items are interleaved round-robin across templates so a small budget
    still spans many templates. The stream is split per (image, template),
    so output does not depend on worker scheduling, only on input order.
    """
    if per_image_budget < 1:
        raise ValueError("per_image_budget must be positive")
    corpus: list[TemplateQa] = []
    for spec in specs:
        per_template = []
        for template in templates:
            rng = random.Random(f"{seed}/{spec.image_id}/{template.id}")
            per_template.append(instantiate(template, spec, per_image_budget, rng=rng))
        taken: list[TemplateQa] = []
        rank = 0
        while len(taken) < per_image_budget:
            progressed = False
            for items in per_template:
                if rank < len(items):
                    taken.append(items[rank])
                    progressed = True
                    if len(taken) >= per_image_budget:
                        break
            if not progressed:
                break
            rank += 1
        corpus.extend(taken)
    return corpus
