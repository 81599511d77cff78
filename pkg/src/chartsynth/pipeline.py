"""Dataset records, staging, filtering and statistics.

Every generated candidate becomes exactly one `QaRecord` and keeps exactly
one status for its whole life: "ok" while it survives, or one of the two
dropped states once execution or score filtering rejects it. Records are
stored as line-delimited JSON (UTF-8, sorted keys), so corpora can be
streamed, diffed and resumed.

The stage flow mirrors the CLI: generate (template or service-backed),
execute rationales, filter on decoding score, then count. Counts are
monotone by construction: filtered <= executed_ok <= generated.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .charts import ChartSpec, linearize_table, parse_chart_documents, render_table_text
from .executor import Answerer, GroundTruthAnswerer, execute
from .genclient import (
    GenerationCandidate,
    GenerationRequest,
    PromptSpec,
    SamplingConfig,
    load_prompts,
    request_candidates,
)
from .rationales import RationaleError, parse_rationale
from .templates import QUESTION_TYPES, Template, TemplateQa, generate_corpus
from .transport import TransportError

log = logging.getLogger(__name__)

SOURCES = ("template", "llm_straightforward", "llm_stepwise")
STATUSES = ("ok", "dropped_unexecutable", "dropped_low_score")

DEFAULT_THRESHOLD = -10.0
DEFAULT_CHECKPOINT_EVERY = 1000


class DatasetError(ValueError):
    """A dataset file or record violates the record contract."""


@dataclass(frozen=True)
class QaRecord:
    image_id: str
    question: str
    source: str
    status: str = "ok"
    answer: str | None = None
    rationale: str | None = None
    decoding_score: float | None = None
    question_type: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DatasetError(f"unknown source {self.source!r}")
        if self.status not in STATUSES:
            raise DatasetError(f"unknown status {self.status!r}")
        if self.question_type is not None and self.question_type not in QUESTION_TYPES:
            raise DatasetError(f"unknown question type {self.question_type!r}")
        if self.source == "template":
            if self.rationale is None:
                raise DatasetError("template records must carry a rationale")
            if self.decoding_score is not None:
                raise DatasetError("template records carry no decoding score")
        if self.status != "ok" and self.answer is not None:
            raise DatasetError("dropped records carry no answer")

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "question": self.question,
                "source": self.source,
                "status": self.status,
                "answer": self.answer,
                "rationale": self.rationale,
                "decoding_score": self.decoding_score,
                "question_type": self.question_type,
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "QaRecord":
        data = json.loads(line)
        if not isinstance(data, dict):
            raise DatasetError("record line is not a JSON object")
        try:
            return cls(
                image_id=data["image_id"],
                question=data["question"],
                source=data["source"],
                status=data.get("status", "ok"),
                answer=data.get("answer"),
                rationale=data.get("rationale"),
                decoding_score=data.get("decoding_score"),
                question_type=data.get("question_type"),
            )
        except KeyError as err:
            raise DatasetError(f"record missing field {err}") from None


def record_from_template_qa(qa: TemplateQa) -> QaRecord:
    return QaRecord(
        image_id=qa.image_id,
        question=qa.question,
        source="template",
        answer=qa.answer,
        rationale=qa.rationale_text,
        question_type=qa.question_type,
    )


def write_records(path: str | Path, records: Iterable[QaRecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
            count += 1
    return count


def read_records(path: str | Path) -> Iterator[QaRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield QaRecord.from_json(line)
            except (json.JSONDecodeError, DatasetError) as err:
                raise DatasetError(f"{path}, line {lineno}: {err}") from None


# --- stage: execute -------------------------------------------------------------


def execute_records(records: Iterable[QaRecord], answerer: Answerer) -> list[QaRecord]:
    """Derive answers for step-by-step records; bad ones become unexecutable.

    Template and straightforward records pass through untouched. The
    operation is idempotent for a deterministic answerer.
    """
    out: list[QaRecord] = []
    for record in records:
        if record.source != "llm_stepwise" or record.status != "ok":
            out.append(record)
            continue
        if record.rationale is None:
            out.append(replace(record, status="dropped_unexecutable", answer=None))
            continue
        try:
            program = parse_rationale(record.rationale)
        except RationaleError as err:
            log.debug("%s: rationale does not parse: %s", record.image_id, err)
            out.append(replace(record, status="dropped_unexecutable", answer=None))
            continue
        trace = execute(program, record.image_id, answerer)
        if trace.ok:
            out.append(replace(record, answer=trace.answer))
        else:
            log.debug("%s: %s", record.image_id, trace.diagnostic(record.image_id))
            out.append(replace(record, status="dropped_unexecutable", answer=None))
    return out


# --- stage: filter ----------------------------------------------------------------


def filter_records(records: Iterable[QaRecord], threshold: float) -> list[QaRecord]:
    """Keep service-generated records scoring at or above the threshold.

    Records already dropped stay dropped; template records (which carry no
    score) pass through untouched. Order is preserved and no record is
    ever removed, only re-labeled, so the stage is idempotent.
    """
    out: list[QaRecord] = []
    for record in records:
        if record.source == "template" or record.status != "ok":
            out.append(record)
            continue
        if record.decoding_score is None:
            raise DatasetError(
                f"record {record.question!r} for {record.image_id!r} has no decoding score"
            )
        if record.decoding_score >= threshold:
            out.append(record)
        else:
            out.append(replace(record, status="dropped_low_score", answer=None))
    return out


# --- stage: stats -----------------------------------------------------------------


@dataclass
class StatsReport:
    """Stage bookkeeping: how many records entered, executed, and survived."""

    images: int
    generated: int
    executed_ok: int
    filtered: int
    per_type: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0 <= self.filtered <= self.executed_ok <= self.generated):
            raise DatasetError(
                "stage counts must satisfy filtered <= executed_ok <= generated, got "
                f"{self.filtered} / {self.executed_ok} / {self.generated}"
            )
        for name, count in self.per_type.items():
            if name not in QUESTION_TYPES:
                raise DatasetError(f"unknown question type {name!r}")
            if count < 0:
                raise DatasetError(f"negative count for {name!r}")
        if sum(self.per_type.values()) > self.filtered:
            raise DatasetError("per-type counts exceed the surviving total")

    @property
    def dropped(self) -> int:
        return self.generated - self.filtered

    @property
    def typed_total(self) -> int:
        return sum(self.per_type.values())

    @classmethod
    def from_records(cls, records: Iterable[QaRecord]) -> "StatsReport":
        images: set[str] = set()
        generated = executed_ok = filtered = 0
        per_type: dict[str, int] = {}
        for record in records:
            images.add(record.image_id)
            generated += 1
            if record.status != "dropped_unexecutable":
                executed_ok += 1
            if record.status == "ok":
                filtered += 1
                if record.question_type is not None:
                    per_type[record.question_type] = per_type.get(record.question_type, 0) + 1
        return cls(
            images=len(images),
            generated=generated,
            executed_ok=executed_ok,
            filtered=filtered,
            per_type=per_type,
        )

    @classmethod
    def from_counts(cls, counts: dict) -> "StatsReport":
        return cls(
            images=int(counts["images"]),
            generated=int(counts["generated"]),
            executed_ok=int(counts.get("executed_ok", counts["generated"])),
            filtered=int(counts["filtered"]),
            per_type={k: int(v) for k, v in counts.get("per_type", {}).items()},
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "images": self.images,
                "generated": self.generated,
                "executed_ok": self.executed_ok,
                "filtered": self.filtered,
                "dropped": self.dropped,
                "per_type": dict(sorted(self.per_type.items())),
            },
            sort_keys=True,
        )

    def render_text(self) -> str:
        lines = [
            f"images        {self.images:>12,}",
            f"generated     {self.generated:>12,}",
            f"executed_ok   {self.executed_ok:>12,}",
            f"filtered      {self.filtered:>12,}",
            f"dropped       {self.dropped:>12,}",
        ]
        if self.per_type:
            lines.append("per question type (surviving records):")
            for name in QUESTION_TYPES:
                if name in self.per_type:
                    lines.append(f"  {name:<12}{self.per_type[name]:>12,}")
            lines.append(f"  {'total':<12}{self.typed_total:>12,}")
        return "\n".join(lines)


def compute_stats(path: str | Path) -> StatsReport:
    return StatsReport.from_records(read_records(path))


# --- lenient spec loading -----------------------------------------------------------


def load_specs_lenient(path: str | Path) -> tuple[list[ChartSpec], int]:
    """Directory/file loader that skips unreadable documents with a warning.

    Returns (specs, skipped_count).
    """
    path = Path(path)
    files = (
        sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
        if path.is_dir()
        else [path]
    )
    specs: list[ChartSpec] = []
    skipped = 0
    for file in files:
        try:
            text = file.read_text("utf-8")
        except OSError as err:
            log.warning("skipping unreadable %s: %s", file, err)
            skipped += 1
            continue
        try:
            specs.extend(parse_chart_documents(text))
        except ValueError as err:
            log.warning("skipping malformed %s: %s", file, err)
            skipped += 1
    return specs, skipped


# --- stage: generate -----------------------------------------------------------------


def generate_template_records(
    specs: Sequence[ChartSpec],
    templates: Sequence[Template],
    seed: int,
    per_image_budget: int = 20,
) -> list[QaRecord]:
    corpus = generate_corpus(specs, templates, seed=seed, per_image_budget=per_image_budget)
    return [record_from_template_qa(qa) for qa in corpus]


def _candidate_record(
    spec: ChartSpec, prompt: PromptSpec, mode: str, candidate: GenerationCandidate
) -> QaRecord:
    question_type = prompt.question_type if prompt.question_type != "freeform" else None
    if mode == "step_by_step":
        return QaRecord(
            image_id=spec.image_id,
            question=candidate.question,
            source="llm_stepwise",
            rationale=candidate.body,
            decoding_score=candidate.decoding_score,
            question_type=question_type,
        )
    return QaRecord(
        image_id=spec.image_id,
        question=candidate.question,
        source="llm_straightforward",
        answer=candidate.body,
        decoding_score=candidate.decoding_score,
        question_type=question_type,
    )


def generate_llm_records(
    specs: Sequence[ChartSpec],
    endpoint: str,
    mode: str,
    prompts: Sequence[PromptSpec] | None = None,
    sampling: SamplingConfig | None = None,
    passes: int = 1,
    concurrency: int = 1,
    progress: Callable[[int], None] | None = None,
) -> Iterator[list[QaRecord]]:
    """Request candidates for every (image, prompt) pair, one image at a time.

    Yields per-image record lists in input order regardless of worker
    scheduling; `progress` is called with the number of finished images.
    """
    prompts = list(prompts if prompts is not None else load_prompts())
    sampling = sampling or SamplingConfig()

    def fetch(spec: ChartSpec) -> list[QaRecord]:
        table_text = render_table_text(linearize_table(spec))
        records: list[QaRecord] = []
        for _ in range(passes):
            for prompt in prompts:
                request = GenerationRequest(
                    image_id=spec.image_id,
                    table_text=table_text,
                    prompt=prompt,
                    mode=mode,
                    sampling=sampling,
                )
                for candidate in request_candidates(request, endpoint):
                    records.append(_candidate_record(spec, prompt, mode, candidate))
        return records

    done = 0
    if concurrency <= 1:
        for spec in specs:
            yield fetch(spec)
            done += 1
            if progress:
                progress(done)
        return
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for records in pool.map(fetch, specs):
            yield records
            done += 1
            if progress:
                progress(done)


def run_generation(
    specs: Sequence[ChartSpec],
    templates: Sequence[Template],
    out_path: str | Path,
    mode: str = "template",
    endpoint: str | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    per_image_budget: int = 20,
    prompts: Sequence[PromptSpec] | None = None,
    sampling: SamplingConfig | None = None,
    answerer: Answerer | None = None,
    passes: int = 1,
    concurrency: int = 1,
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
) -> StatsReport:
    """End-to-end flow: generate, execute, filter, write, count.

    In "template" mode the corpus comes from the template engine. In the
    two service modes each image receives every prompt once per pass;
    step-by-step rationales are executed with `answerer` (defaulting to
    ground truth over the input specs) and survivors are filtered at
    `threshold`. A transport failure aborts after writing a progress
    checkpoint next to the partial output.
    """
    out_path = Path(out_path)
    if mode == "template":
        records = generate_template_records(specs, templates, seed, per_image_budget)
        write_records(out_path, records)
        return StatsReport.from_records(records)

    if endpoint is None:
        raise ValueError("service-backed generation needs an endpoint")
    if answerer is None:
        answerer = GroundTruthAnswerer.from_specs(specs)

    checkpoint = out_path.with_suffix(out_path.suffix + ".progress")
    written = 0
    images_done = 0
    all_records: list[QaRecord] = []
    with open(out_path, "w", encoding="utf-8") as fh:

        def flush_checkpoint():
            checkpoint.write_text(
                json.dumps({"images_done": images_done, "records": written}) + "\n",
                encoding="utf-8",
            )

        try:
            for image_records in generate_llm_records(
                specs,
                endpoint,
                mode,
                prompts=prompts,
                sampling=sampling,
                passes=passes,
                concurrency=concurrency,
            ):
                if mode == "step_by_step":
                    image_records = execute_records(image_records, answerer)
                image_records = filter_records(image_records, threshold)
                for record in image_records:
                    fh.write(record.to_json() + "\n")
                    written += 1
                all_records.extend(image_records)
                images_done += 1
                if images_done % checkpoint_every == 0:
                    fh.flush()
                    flush_checkpoint()
        except TransportError:
            fh.flush()
            flush_checkpoint()
            log.error("generation aborted after %d images; partial output kept", images_done)
            raise
        flush_checkpoint()
    return StatsReport.from_records(all_records)
