#!/usr/bin/env python3
"""End-to-end walkthrough on mock endpoints.

Generates a small fixture manifest, runs the three-stage synthesis with
auto-approved review, exports the approved knowledge, scores a toy eval
set with the lexical metrics and the judge, and renders the combined
report. Everything lands under the chosen working directory.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from make_fixture_manifest import make_rows

from agrisynth.cli import main as agrisynth


def run(*args: str) -> None:
    print(f"$ agrisynth {' '.join(args)}", file=sys.stderr)
    code = agrisynth(list(args))
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="demo_workdir", help="artifact directory")
    parser.add_argument("--images", type=int, default=24)
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args()

    root = Path(args.workdir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for row in make_rows(args.images, args.seed):
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    common = ("--workdir", str(root / "run"), "--mock")
    run("ingest", str(manifest))
    run("stats", str(manifest))
    run("split", str(manifest), "--output", str(root / "split.json"))
    run(*common, "synth", "run", "--auto-approve", str(manifest))
    run(*common, "review", "export", "--output", str(root / "approved.jsonl"))

    # score the synthesized answers against themselves with light noise:
    # enough to exercise the metric surface without a second model
    qa_rows = [json.loads(line) for line in (root / "run" / "qa.jsonl").open(encoding="utf-8")]
    eval_path = root / "eval.jsonl"
    with open(eval_path, "w", encoding="utf-8") as fh:
        for i, row in enumerate(qa_rows[:40]):
            prediction = row["answer"] if i % 3 else "The image shows a healthy plant."
            fh.write(json.dumps({
                "id": f"{row['image_id']}-{i}",
                "question": row["question"],
                "reference": row["answer"],
                "prediction": prediction,
            }, ensure_ascii=False) + "\n")

    run(*common, "eval", "metrics", "--input", str(eval_path),
        "--dataset", "fixture", "--model", "echo",
        "--output", str(root / "frag_metrics.json"))
    run(*common, "eval", "judge", "--input", str(eval_path),
        "--dataset", "fixture", "--model", "echo",
        "--output", str(root / "frag_judge.json"))
    run(*common, "report", str(root / "frag_metrics.json"), str(root / "frag_judge.json"),
        "--format", "markdown", "--output", str(root / "report.md"))

    run(*common, "modelmath", "check")
    print(f"\ndemo artifacts under {root}/", file=sys.stderr)
    print((root / "report.md").read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
