"""Strict and relaxed accuracy scoring for prediction files.

Strict accuracy is exact match after light normalization (case, internal
whitespace, a trailing "%" and thousands separators on purely numeric
strings). Relaxed accuracy additionally accepts numeric predictions within
5% of the gold value; the tolerance is scaled by the gold side only, so
the numeric check is intentionally asymmetric. Text answers fall back to
strict matching.

Note the known blind spot of the relaxed metric: for year-like answers
(1996 vs 2012) a 5% window spans roughly a century, so relaxed accuracy
can look incorrectly high. Both metrics are therefore always reported
side by side.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .executor import CoercionError, coerce_numeric

SPLITS = ("human", "augment")

RELATIVE_TOLERANCE = 0.05

_NUMERIC_FORM = re.compile(r"[+-]?[\d,]*\.?\d+%?")


class EvalError(ValueError):
    """Bad evaluation input (empty pair list, unmatched ids, bad files)."""


@dataclass(frozen=True)
class EvalPair:
    qid: str
    prediction: str
    gold: str
    split: str | None = None
    question_type: str | None = None

    def __post_init__(self):
        if not self.gold:
            raise EvalError(f"pair {self.qid!r} has an empty gold answer")
        if self.split is not None and self.split not in SPLITS:
            raise EvalError(f"pair {self.qid!r}: unknown split {self.split!r}")


def _normalize(text: str) -> str:
    out = " ".join(text.split()).strip().lower()
    if _NUMERIC_FORM.fullmatch(out):
        out = out.rstrip("%").replace(",", "")
    return out


def strict_match(prediction: str, gold: str) -> bool:
    """Exact match after normalization."""
    return _normalize(prediction) == _normalize(gold)


def relaxed_match(prediction: str, gold: str) -> bool:
    """5% relative tolerance on numbers, strict matching otherwise.

    Gold zero demands an exactly-zero prediction, since a relative window
    around zero is empty.
    """
    try:
        predicted = coerce_numeric(prediction)
        target = coerce_numeric(gold)
    except CoercionError:
        return strict_match(prediction, gold)
    if target == 0:
        return predicted == 0
    return abs(predicted - target) <= RELATIVE_TOLERANCE * abs(target)


@dataclass
class MetricPair:
    strict: float | None
    relaxed: float | None
    count: int


@dataclass
class EvalReport:
    strict: dict[str, float | None]  # avg / human / augment, percentages
    relaxed: dict[str, float | None]
    per_type: dict[str, MetricPair] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def render_text(self) -> str:
        headers = ("avg", "human", "augment")

        def fmt(value: float | None) -> str:
            return f"{value:>8.2f}" if value is not None else f"{'-':>8}"

        lines = [
            f"{'':<10}{'Accuracy':^26}  {'Relaxed Accuracy':^26}",
            f"{'':<10}" + "".join(f"{h:>8}" for h in headers) + "  "
            + "".join(f"{h:>8}" for h in headers),
            f"{'overall':<10}"
            + "".join(fmt(self.strict[h]) for h in headers)
            + "  "
            + "".join(fmt(self.relaxed[h]) for h in headers),
        ]
        if self.per_type:
            lines.append("")
            lines.append(f"{'type':<14}{'n':>6}{'strict':>10}{'relaxed':>10}")
            for name, metrics in sorted(self.per_type.items()):
                strict = fmt(metrics.strict).strip()
                relaxed = fmt(metrics.relaxed).strip()
                lines.append(f"{name:<14}{metrics.count:>6}{strict:>10}{relaxed:>10}")
        lines.append(
            "counts: "
            + ", ".join(f"{bucket}={count}" for bucket, count in sorted(self.counts.items()))
        )
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(
            {
                "strict": self.strict,
                "relaxed": self.relaxed,
                "per_type": {
                    k: {"strict": v.strict, "relaxed": v.relaxed, "count": v.count}
                    for k, v in sorted(self.per_type.items())
                },
                "counts": self.counts,
            },
            sort_keys=True,
        )


def _percentage(hits: int, total: int) -> float | None:
    return 100.0 * hits / total if total else None


def evaluate(pairs: Iterable[EvalPair]) -> EvalReport:
    """Score every pair and aggregate overall, per split and per type."""
    pairs = list(pairs)
    if not pairs:
        raise EvalError("no evaluation pairs")

    def tally(selected: list[EvalPair]) -> tuple[int, int, int]:
        s = sum(strict_match(p.prediction, p.gold) for p in selected)
        r = sum(relaxed_match(p.prediction, p.gold) for p in selected)
        return s, r, len(selected)

    strict_scores: dict[str, float | None] = {}
    relaxed_scores: dict[str, float | None] = {}
    counts: dict[str, int] = {"total": len(pairs)}
    s, r, n = tally(pairs)
    strict_scores["avg"] = _percentage(s, n)
    relaxed_scores["avg"] = _percentage(r, n)
    for split in SPLITS:
        subset = [p for p in pairs if p.split == split]
        s, r, n = tally(subset)
        strict_scores[split] = _percentage(s, n)
        relaxed_scores[split] = _percentage(r, n)
        counts[split] = n

    per_type: dict[str, MetricPair] = {}
    for name in sorted({p.question_type for p in pairs if p.question_type}):
        subset = [p for p in pairs if p.question_type == name]
        s, r, n = tally(subset)
        per_type[name] = MetricPair(strict=_percentage(s, n), relaxed=_percentage(r, n), count=n)

    return EvalReport(strict=strict_scores, relaxed=relaxed_scores, per_type=per_type, counts=counts)


# --- file interface -------------------------------------------------------------
#
# gold file:       JSONL {"id", "gold", "split"?, "question_type"?}
# prediction file: JSONL {"id", "prediction"}


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise EvalError(f"{path}, line {lineno}: not JSON: {err}") from None
            if not isinstance(record, dict):
                raise EvalError(f"{path}, line {lineno}: not a JSON object")
            yield lineno, record


def load_pairs(prediction_path: str | Path, gold_path: str | Path) -> list[EvalPair]:
    """Join the two files on question id; every id must appear in both."""
    predictions: dict[str, str] = {}
    for lineno, record in _read_jsonl(prediction_path):
        try:
            qid = str(record["id"])
            predictions[qid] = str(record["prediction"])
        except KeyError as err:
            raise EvalError(f"{prediction_path}, line {lineno}: missing {err}") from None

    pairs: list[EvalPair] = []
    seen: set[str] = set()
    for lineno, record in _read_jsonl(gold_path):
        try:
            qid = str(record["id"])
            gold = str(record["gold"])
        except KeyError as err:
            raise EvalError(f"{gold_path}, line {lineno}: missing {err}") from None
        if qid not in predictions:
            raise EvalError(f"no prediction for question {qid!r}")
        seen.add(qid)
        pairs.append(
            EvalPair(
                qid=qid,
                prediction=predictions[qid],
                gold=gold,
                split=record.get("split"),
                question_type=record.get("question_type"),
            )
        )
    stray = set(predictions) - seen
    if stray:
        raise EvalError(f"predictions without gold entries: {sorted(stray)[:5]}")
    return pairs
