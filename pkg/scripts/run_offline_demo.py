#!/usr/bin/env python3
"""Run the full offline pipeline over a demo workspace and time each stage.

    python scripts/make_demo_data.py --out demo
    python scripts/run_offline_demo.py --workspace demo

Stages: gen-llm against the bundled mock service, execute with the
ground-truth answerer, filter at the default threshold, stats, plus a
template-corpus run and an eval of the bundled fixture.
"""

import argparse
import time
from pathlib import Path

from chartsynth.cli import main as cli


def stage(name, argv):
    started = time.perf_counter()
    status = cli(argv)
    elapsed = time.perf_counter() - started
    print(f"--- {name}: exit {status} in {elapsed:.2f}s\n")
    if status != 0:
        raise SystemExit(status)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workspace", default="demo")
    ap.add_argument("--threshold", type=float, default=-10.0)
    args = ap.parse_args()

    ws = Path(args.workspace)
    specs = str(ws / "specs")
    fixture = str(ws / "mock_fixture.jsonl")

    stage("gen-template", [
        "gen-template", "--specs", specs, "--seed", "7",
        "--out", str(ws / "template_corpus.jsonl"),
    ])
    stage("gen-llm (mock)", [
        "gen-llm", "--specs", specs, "--endpoint", f"mock:{fixture}",
        "--mode", "step_by_step", "--out", str(ws / "raw.jsonl"),
    ])
    stage("execute", [
        "execute", "--in", str(ws / "raw.jsonl"), "--answerer", "groundtruth",
        "--specs", specs, "--out", str(ws / "executed.jsonl"),
    ])
    stage("filter", [
        "filter", "--in", str(ws / "executed.jsonl"),
        "--threshold", str(args.threshold), "--out", str(ws / "dataset.jsonl"),
    ])
    stage("stats", ["stats", "--in", str(ws / "dataset.jsonl"), "--json"])
    stage("eval", ["eval", "--pred", str(ws / "pred.jsonl"), "--gold", str(ws / "gold.jsonl")])


if __name__ == "__main__":
    main()
