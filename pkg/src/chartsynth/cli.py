"""Command-line entry point: composable stages over the same record format.

    gen-template   chart specs -> template QA corpus
    gen-llm        chart specs + generation endpoint -> raw candidates
    execute        candidates -> derived answers via the chosen answerer
    filter         records + score threshold -> surviving records
    stats          dataset (or stage-count file) -> bookkeeping report
    eval           predictions + gold -> strict/relaxed accuracy report

Every stage is deterministic given its inputs and seed, streams
line-delimited records, and exits nonzero with a one-line diagnostic on
failure (3 unreadable input, 4 unwritable output, 5 bad data, 6 transport).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import evaluation, pipeline
from .charts import ChartError
from .executor import GroundTruthAnswerer, ScriptedAnswerer, ServiceAnswerer
from .genclient import SamplingConfig, load_prompts
from .queries import QueryError
from .rationales import RationaleError
from .templates import CatalogError, load_default_templates, load_templates
from .transport import ProtocolError, TransportError

log = logging.getLogger(__name__)

EX_OK = 0
EX_USAGE = 2
EX_INPUT = 3
EX_OUTPUT = 4
EX_DATA = 5
EX_TRANSPORT = 6

ENDPOINT_ENV = "CHARTSYNTH_ENDPOINT"


def _load_specs(path: str):
    specs, skipped = pipeline.load_specs_lenient(path)
    if skipped:
        log.warning("skipped %d unreadable spec document(s)", skipped)
    if not specs:
        raise ChartError(f"no chart specs found under {path!r}")
    return specs


def _load_templates(path: str | None):
    if path is None:
        return load_default_templates()
    return load_templates(Path(path).read_text("utf-8"))


def _endpoint(args) -> str:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise TransportError(
            f"no endpoint given; use --endpoint or set {ENDPOINT_ENV}"
        )
    return endpoint


def _select_prompts(selector: str | None):
    prompts = load_prompts()
    if not selector:
        return prompts
    ids: set[int] = set()
    types: set[str] = set()
    for part in selector.split(","):
        part = part.strip()
        if not part:
            continue
        if part.isdigit():
            ids.add(int(part))
        elif "-" in part and all(x.isdigit() for x in part.split("-", 1)):
            lo, hi = part.split("-", 1)
            ids.update(range(int(lo), int(hi) + 1))
        else:
            types.add(part)
    chosen = [p for p in prompts if p.id in ids or p.question_type in types]
    if not chosen:
        raise ValueError(f"prompt selector {selector!r} matches nothing")
    return chosen


def _build_answerer(args):
    if args.answerer == "groundtruth":
        if not args.specs:
            raise ValueError("--answerer groundtruth needs --specs")
        return GroundTruthAnswerer.from_specs(_load_specs(args.specs))
    if args.answerer == "scripted":
        if not args.answers:
            raise ValueError("--answerer scripted needs --answers")
        replies = json.loads(Path(args.answers).read_text("utf-8"))
        return ScriptedAnswerer(replies)
    return ServiceAnswerer(_endpoint(args))


# --- subcommands ----------------------------------------------------------------


def cmd_gen_template(args) -> int:
    specs = _load_specs(args.specs)
    templates = _load_templates(args.templates)
    records = pipeline.generate_template_records(
        specs, templates, seed=args.seed, per_image_budget=args.budget
    )
    pipeline.write_records(args.out, records)
    report = pipeline.StatsReport.from_records(records)
    print(report.render_text())
    return EX_OK


def cmd_gen_llm(args) -> int:
    specs = _load_specs(args.specs)
    endpoint = _endpoint(args)
    prompts = _select_prompts(args.prompts)
    sampling = SamplingConfig(
        temperature=args.temperature, max_tokens=args.max_tokens, candidates=args.candidates
    )
    done_images: set[str] = set()
    open_mode = "w"
    if args.resume and Path(args.out).exists():
        done_images = {r.image_id for r in pipeline.read_records(args.out)}
        open_mode = "a"
        log.info("resuming: %d image(s) already in %s", len(done_images), args.out)
    todo = [s for s in specs if s.image_id not in done_images]

    written = 0
    images_done = 0
    checkpoint = Path(args.out + ".progress")
    with open(args.out, open_mode, encoding="utf-8") as fh:
        try:
            for image_records in pipeline.generate_llm_records(
                todo,
                endpoint,
                args.mode,
                prompts=prompts,
                sampling=sampling,
                passes=args.passes,
                concurrency=args.concurrency,
            ):
                for record in image_records:
                    fh.write(record.to_json() + "\n")
                    written += 1
                images_done += 1
                if images_done % args.checkpoint_every == 0:
                    fh.flush()
                    checkpoint.write_text(
                        json.dumps({"images_done": images_done, "records": written}) + "\n"
                    )
        except TransportError:
            fh.flush()
            checkpoint.write_text(
                json.dumps({"images_done": images_done, "records": written}) + "\n"
            )
            raise
    checkpoint.write_text(json.dumps({"images_done": images_done, "records": written}) + "\n")
    print(f"generated {written} candidate(s) over {images_done} image(s)")
    return EX_OK


def cmd_execute(args) -> int:
    answerer = _build_answerer(args)
    records = pipeline.execute_records(pipeline.read_records(args.infile), answerer)
    pipeline.write_records(args.out, records)
    report = pipeline.StatsReport.from_records(records)
    print(report.render_text())
    return EX_OK


def cmd_filter(args) -> int:
    records = pipeline.filter_records(pipeline.read_records(args.infile), args.threshold)
    pipeline.write_records(args.out, records)
    report = pipeline.StatsReport.from_records(records)
    print(report.render_text())
    return EX_OK


def cmd_stats(args) -> int:
    if args.counts:
        counts = json.loads(Path(args.counts).read_text("utf-8"))
        reports = {
            name: pipeline.StatsReport.from_counts(row) for name, row in counts.items()
        }
        for name, report in reports.items():
            print(f"[{name}]")
            print(report.render_text())
            if args.json:
                print(report.to_json())
        return EX_OK
    report = pipeline.compute_stats(args.infile)
    print(report.render_text())
    if args.json:
        print(report.to_json())
    return EX_OK


def cmd_eval(args) -> int:
    pairs = evaluation.load_pairs(args.pred, args.gold)
    report = evaluation.evaluate(pairs)
    print(report.render_text())
    if args.json:
        print(report.to_json())
    return EX_OK


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartsynth",
        description="Generate, execute, filter, and score reasoning QA for charts.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-template", help="instantiate the template catalog over chart specs")
    p.add_argument("--specs", required=True, help="chart-spec file or directory")
    p.add_argument("--templates", help="catalog file (default: shipped catalog)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=20, help="QA budget per image")
    p.set_defaults(func=cmd_gen_template)

    p = sub.add_parser("gen-llm", help="request question candidates from a generation service")
    p.add_argument("--specs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--endpoint", help=f"service address (or ${ENDPOINT_ENV}); mock:<fixture> runs offline")
    p.add_argument("--mode", choices=("straightforward", "step_by_step"), default="step_by_step")
    p.add_argument("--prompts", help="prompt subset: ids (3,8-12) and/or type names (colors,count)")
    p.add_argument("--candidates", type=int, default=1, help="candidates per prompt")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=256)
    p.add_argument("--passes", type=int, default=1, help="prompt passes per image")
    p.add_argument("--seed", type=int, default=0, help="reserved for samplers; recorded only")
    p.add_argument("--concurrency", type=int, default=1, help="in-flight request cap")
    p.add_argument("--checkpoint-every", type=int, default=pipeline.DEFAULT_CHECKPOINT_EVERY)
    p.add_argument("--resume", action="store_true", help="skip images already in --out")
    p.set_defaults(func=cmd_gen_llm)

    p = sub.add_parser("execute", help="derive answers for step-by-step records")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--answerer", choices=("groundtruth", "service", "scripted"), default="groundtruth")
    p.add_argument("--specs", help="chart specs (groundtruth answerer)")
    p.add_argument("--answers", help="question->answer JSON file (scripted answerer)")
    p.add_argument("--endpoint", help="answer service address (service answerer)")
    p.set_defaults(func=cmd_execute)

    p = sub.add_parser("filter", help="drop records scoring below the threshold")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=pipeline.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("stats", help="stage bookkeeping for a dataset file")
    p.add_argument("--in", dest="infile", help="dataset file")
    p.add_argument("--counts", help="stage-count JSON file instead of a dataset")
    p.add_argument("--json", action="store_true", help="also print the machine-readable record")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", help="score predictions against gold answers")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "stats" and not (args.infile or args.counts):
        print("stats: one of --in / --counts is required", file=sys.stderr)
        return EX_USAGE
    try:
        return args.func(args)
    except (TransportError, ProtocolError) as err:
        print(f"transport error: {err}", file=sys.stderr)
        return EX_TRANSPORT
    except FileNotFoundError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EX_INPUT
    except PermissionError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EX_OUTPUT
    except (ChartError, CatalogError, QueryError, RationaleError, pipeline.DatasetError,
            evaluation.EvalError, json.JSONDecodeError, ValueError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EX_DATA
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return EX_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
