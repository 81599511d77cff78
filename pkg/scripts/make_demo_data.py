#!/usr/bin/env python3
"""Build a self-contained demo workspace: chart specs, a mock generation
fixture, and a small evaluation fixture.

    python scripts/make_demo_data.py --out demo --images 50 --seed 7
"""

import argparse
import json
import random
from pathlib import Path

from chartsynth.charts import serialize_chart_spec
from chartsynth.synth import build_mock_fixture, random_specs
from chartsynth.templates import load_default_templates


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="demo")
    ap.add_argument("--images", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out)
    (out / "specs").mkdir(parents=True, exist_ok=True)

    specs = random_specs(args.seed, args.images)
    for spec in specs:
        (out / "specs" / f"{spec.image_id}.chart").write_text(
            serialize_chart_spec(spec), encoding="utf-8"
        )
    print(f"wrote {len(specs)} chart specs to {out/'specs'}")

    templates = load_default_templates()
    rows = build_mock_fixture(specs, templates, out / "mock_fixture.jsonl", seed=args.seed)
    print(f"wrote {rows} mock candidate rows to {out/'mock_fixture.jsonl'}")

    # small eval fixture with a known strict/relaxed gap
    rng = random.Random(args.seed)
    gold_lines, pred_lines = [], []
    for i in range(40):
        value = rng.randint(50, 900)
        qid = f"q{i:03d}"
        kind = i % 4
        if kind == 0:  # exact hit
            pred = str(value)
        elif kind == 1:  # inside the 5% window only
            pred = str(round(value * 1.03, 1))
        elif kind == 2:  # miss
            pred = str(round(value * 1.4, 1))
        else:  # text answer
            value = None
            pred = "yes" if i % 8 == 3 else "no"
        gold_lines.append(
            json.dumps(
                {
                    "id": qid,
                    "gold": str(value) if value is not None else "Yes",
                    "split": "human" if i % 2 else "augment",
                    "question_type": ["calculation", "average", "minmax", "compare"][kind],
                }
            )
        )
        pred_lines.append(json.dumps({"id": qid, "prediction": pred}))
    (out / "gold.jsonl").write_text("\n".join(gold_lines) + "\n", encoding="utf-8")
    (out / "pred.jsonl").write_text("\n".join(pred_lines) + "\n", encoding="utf-8")
    print(f"wrote eval fixture to {out/'gold.jsonl'} / {out/'pred.jsonl'}")


if __name__ == "__main__":
    main()
