"""Client for the external question-generation service.

The service plays the role of the tuned language model: given a linearized
data table and one steering prompt, it returns question candidates, each
scored with the summed log-probability of its decoded sequence (higher is
better, typically negative). This client builds the text input, speaks a
minimal line-delimited JSON protocol, and never touches candidate scores
or text.

Two endpoint forms are understood:

* ``http(s)://host:port`` - POST to ``<endpoint>/generate``.
* ``mock:<path>`` - offline stand-in that reads candidates from a fixture
  file (JSONL rows with image_id, mode, optional prompt_id, question,
  body, decoding_score) and filters them per request.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .transport import ProtocolError, TransportError, post_json_lines

__all__ = [
    "PromptSpec",
    "SamplingConfig",
    "GenerationRequest",
    "GenerationCandidate",
    "ProtocolError",
    "TransportError",
    "load_prompts",
    "build_input",
    "request_candidates",
]

MODES = ("straightforward", "step_by_step")

INSTRUCTION = "Ask a question about the given chart plot and answer it."

PROMPT_COUNT = 24


@dataclass(frozen=True)
class PromptSpec:
    id: int
    text: str
    question_type: str  # one of the 7 question-type groups, or "freeform"


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.0
    max_tokens: int = 256
    candidates: int = 1

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1 or self.candidates < 1:
            raise ValueError("max_tokens and candidates must be positive")


@dataclass(frozen=True)
class GenerationRequest:
    image_id: str
    table_text: str
    prompt: PromptSpec
    mode: str  # straightforward | step_by_step
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class GenerationCandidate:
    question: str
    body: str  # answer text (straightforward) or rationale text (step_by_step)
    decoding_score: float

    def __post_init__(self):
        if not self.question:
            raise ValueError("candidate question must be non-empty")


def load_prompts(document: str | None = None) -> list[PromptSpec]:
    """The 24-entry steering-prompt catalog (shipped file by default)."""
    if document is None:
        document = resources.files("chartsynth.data").joinpath("prompts.json").read_text("utf-8")
    data = json.loads(document)
    prompts = [
        PromptSpec(id=int(p["id"]), text=p["text"], question_type=p["question_type"])
        for p in data["prompts"]
    ]
    ids = sorted(p.id for p in prompts)
    if len(prompts) != PROMPT_COUNT or ids != list(range(1, PROMPT_COUNT + 1)):
        raise ValueError(f"prompt catalog must hold ids 1..{PROMPT_COUNT}")
    return sorted(prompts, key=lambda p: p.id)


def build_input(table_text: str, prompt: PromptSpec) -> str:
    """Three blocks separated by blank lines: table, instruction, prompt."""
    return f"{table_text}\n\n{INSTRUCTION}\n\n{prompt.text}"


def request_candidates(
    request: GenerationRequest,
    endpoint: str,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.5,
) -> list[GenerationCandidate]:
    """Fetch up to `sampling.candidates` candidates for one request.

    Candidates whose body later fails rationale parsing are still
    returned; dropping them is the pipeline's job, not the client's.
    """
    if endpoint.startswith("mock:"):
        return _mock_candidates(request, endpoint[len("mock:") :])
    records = post_json_lines(
        f"{endpoint.rstrip('/')}/generate",
        {
            "image_id": request.image_id,
            "input_text": build_input(request.table_text, request.prompt),
            "mode": request.mode,
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_tokens,
            "candidates": request.sampling.candidates,
        },
        timeout=timeout,
        retries=retries,
        backoff=backoff,
    )
    return [_to_candidate(r, i) for i, r in enumerate(records[: request.sampling.candidates], 1)]


def _to_candidate(record: dict, lineno: int) -> GenerationCandidate:
    for field_name in ("question", "body", "decoding_score"):
        if field_name not in record:
            raise ProtocolError(f"candidate {lineno} is missing {field_name!r}")
    score = record["decoding_score"]
    if not isinstance(score, (int, float)):
        raise ProtocolError(f"candidate {lineno}: decoding_score must be a number")
    return GenerationCandidate(
        question=str(record["question"]),
        body=str(record["body"]),
        decoding_score=float(score),
    )


def _mock_candidates(request: GenerationRequest, path: str) -> list[GenerationCandidate]:
    fixture = Path(path)
    if not fixture.is_file():
        raise TransportError(f"mock fixture {path!r} does not exist")
    out: list[GenerationCandidate] = []
    for lineno, line in enumerate(fixture.read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as err:
            raise ProtocolError(f"mock fixture line {lineno} is not JSON: {err}") from None
        if row.get("image_id") != request.image_id or row.get("mode") != request.mode:
            continue
        if "prompt_id" in row and row["prompt_id"] != request.prompt.id:
            continue
        out.append(_to_candidate(row, lineno))
        if len(out) >= request.sampling.candidates:
            break
    return out
