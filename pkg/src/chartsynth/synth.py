"""Randomized chart-spec generation for demos, fixtures and stress tests.

Values are drawn on a quarter grid (k/4), so their two-decimal text form
is exact: an answerer that reads a value off the chart and prints it back
loses nothing. That keeps derived answers bit-identical whether they are
computed from the raw spec or from rendered sub-answers.
"""

from __future__ import annotations

import random

from .charts import BBox, ChartSpec, Entry, Group

_LABEL_POOLS = (
    [str(year) for year in range(1990, 2024)],
    ["apples", "pears", "plums", "grapes", "melons", "cherries", "figs", "dates"],
    ["north", "south", "east", "west", "central", "coastal"],
    ["Q1", "Q2", "Q3", "Q4", "H1", "H2"],
    ["rent", "food", "travel", "savings", "utilities", "leisure"],
)

_GROUP_POOLS = (
    ["Democrats", "Republicans", "Independents"],
    ["men", "women"],
    ["2019", "2020", "2021"],
    ["imports", "exports"],
    ["urban", "rural", "suburban"],
)

_COLOR_POOL = (
    "silver", "midnightblue", "crimson", "steelblue", "goldenrod", "seagreen",
    "orchid", "chocolate", "teal", "tomato", "slategray", "olive",
)

_KIND_BY_TYPE = {
    "vertical_bar": "bar",
    "horizontal_bar": "bar",
    "line": "dot",
    "pie": "slice",
}


def _quarter(rng: random.Random, lo: float = 1.0, hi: float = 500.0) -> float:
    return rng.randint(int(lo * 4), int(hi * 4)) / 4.0


def _bboxes(chart_type: str, count: int, values: list[float]) -> list[BBox]:
    peak = max(values)
    boxes = []
    for i, value in enumerate(values):
        extent = max(8.0, 180.0 * value / peak)
        if chart_type == "vertical_bar":
            boxes.append(BBox(x=20.0 + 40.0 * i, y=200.0 - extent, width=24.0, height=extent))
        else:
            boxes.append(BBox(x=10.0, y=20.0 + 32.0 * i, width=extent, height=18.0))
    return boxes


def random_chart_spec(rng: random.Random, image_id: str, chart_type: str | None = None) -> ChartSpec:
    """One random but fully annotated chart."""
    if chart_type is None:
        chart_type = rng.choice(("vertical_bar", "vertical_bar", "horizontal_bar", "line", "pie"))

    labels = rng.sample(rng.choice(_LABEL_POOLS), k=rng.randint(3, 6))
    multi = chart_type in ("vertical_bar", "line") and rng.random() < 0.35
    colors = rng.sample(_COLOR_POOL, k=len(labels) if not multi else 3)

    if multi:
        pool = rng.choice(_GROUP_POOLS)
        names = rng.sample(pool, k=min(rng.randint(2, 3), len(pool)))
        groups = []
        for gi, name in enumerate(names):
            entries = tuple(
                Entry(label=label, value=_quarter(rng), color=colors[gi]) for label in labels
            )
            groups.append(Group(name=name, entries=entries))
        spec_groups = tuple(groups)
    else:
        values = [_quarter(rng) for _ in labels]
        boxes: list[BBox | None]
        if chart_type in ("vertical_bar", "horizontal_bar"):
            boxes = list(_bboxes(chart_type, len(labels), values))
        else:
            boxes = [None] * len(labels)
        entries = tuple(
            Entry(label=label, value=value, color=color, bbox=box)
            for label, value, color, box in zip(labels, values, colors, boxes)
        )
        spec_groups = (Group(name="", entries=entries),)

    return ChartSpec(
        image_id=image_id,
        chart_type=chart_type,
        groups=spec_groups,
        element_kind=_KIND_BY_TYPE[chart_type],
        source="synthetic",
    )


def random_specs(seed: int, count: int) -> list[ChartSpec]:
    """A reproducible corpus of `count` random charts."""
    rng = random.Random(seed)
    return [random_chart_spec(rng, f"synth_{seed}_{i:05d}") for i in range(count)]


def build_mock_fixture(
    specs,
    templates,
    path,
    seed: int = 0,
    candidates_per_prompt: int = 1,
    corrupt_rate: float = 0.12,
) -> int:
    """Write a generation-service fixture the mock endpoint can serve.

    Candidate questions and rationales come from the template engine, so a
    ground-truth answerer can execute most of them; a deterministic
    fraction is corrupted (unknown category, or a truncated program) to
    exercise the unexecutable-drop path. Scores are spread over [-15, -5]
    so a threshold of -10 separates the population.

    Returns the number of fixture rows written.
    """
    import json

    from .genclient import load_prompts
    from .templates import instantiate

    prompts = load_prompts()
    rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        for spec in specs:
            for prompt in prompts:
                rng = random.Random(f"{seed}/fixture/{spec.image_id}/{prompt.id}")
                if prompt.question_type == "freeform":
                    pool = list(templates)
                else:
                    pool = [t for t in templates if t.question_type == prompt.question_type]
                rng.shuffle(pool)
                emitted = []
                for template in pool:
                    emitted.extend(
                        instantiate(
                            template,
                            spec,
                            candidates_per_prompt,
                            rng=random.Random(f"{seed}/{spec.image_id}/{prompt.id}/{template.id}"),
                        )
                    )
                    if len(emitted) >= candidates_per_prompt:
                        break
                for qa in emitted[:candidates_per_prompt]:
                    rationale = qa.rationale_text
                    roll = rng.random()
                    if roll < corrupt_rate / 2:
                        rationale = 'ans_0 = VQA("What is the value of Atlantis?")\nans = sum(ans_0, ans_0)'
                    elif roll < corrupt_rate:
                        rationale = rationale.rsplit("\n", 1)[0] if "\n" in rationale else "ans = avg("
                    score = round(-5.0 - 10.0 * rng.random(), 2)
                    base = {
                        "image_id": spec.image_id,
                        "prompt_id": prompt.id,
                        "question": qa.question,
                        "decoding_score": score,
                    }
                    fh.write(
                        json.dumps({**base, "mode": "step_by_step", "body": rationale}) + "\n"
                    )
                    fh.write(
                        json.dumps({**base, "mode": "straightforward", "body": qa.answer}) + "\n"
                    )
                    rows += 2
    return rows
