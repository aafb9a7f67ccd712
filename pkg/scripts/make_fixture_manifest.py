#!/usr/bin/env python3
"""Generate a synthetic image-record manifest for pipeline runs.

Records carry plausible class labels across the three task components;
Counting rows get non-degenerate annotation boxes so the ingest path can
derive ground-truth counts. Output is JSONL compatible with `agrisynth
ingest`, `split`, and `synth run`.
"""
from __future__ import annotations

import argparse
import json
import random
import sys

COMPONENT_WEIGHTS = {"FineGrained": 0.40, "Disease": 0.41, "Counting": 0.19}

SPECIES = [
    "wheat", "maize", "rice", "barley", "soybean", "chickpea", "apple",
    "grape", "tomato", "potato", "cotton", "sugarcane", "turmeric",
    "cardamom", "teak", "bamboo", "ryegrass", "pigweed", "marigold",
]
DISEASES = [
    "wheat leaf rust", "maize smut", "rice blast", "apple scab",
    "grape downy mildew", "tomato early blight", "potato late blight",
    "citrus canker", "soybean rust", "barley powdery mildew",
]
COUNT_TARGETS = ["wheat head", "maize tassel", "apple fruit", "grape cluster"]

CATEGORIES = {
    "wheat": "Cereals&Grasses", "maize": "Cereals&Grasses", "rice": "Cereals&Grasses",
    "barley": "Cereals&Grasses", "ryegrass": "Cereals&Grasses",
    "soybean": "Legumes/Pulses", "chickpea": "Legumes/Pulses",
    "apple": "Fruits", "grape": "Fruits",
    "tomato": "Vegetables&Tubers", "potato": "Vegetables&Tubers",
    "cotton": "Industrial", "sugarcane": "Industrial",
    "turmeric": "Medicinal&Spices", "cardamom": "Medicinal&Spices",
    "teak": "Forestry&Timber", "bamboo": "Forestry&Timber",
    "pigweed": "Weeds/Wild",
    "marigold": "Ornamental/Other",
}


def category_for(label: str) -> str:
    head = label.split()[0]
    return CATEGORIES.get(head, "Ornamental/Other")


def boxes(rng: random.Random, count: int) -> list[list[int]]:
    out = []
    for k in range(count):
        x0 = (k % 8) * 60 + rng.randint(0, 10)
        y0 = (k // 8) * 60 + rng.randint(0, 10)
        out.append([x0, y0, x0 + rng.randint(20, 48), y0 + rng.randint(20, 48)])
    return out


def make_rows(n: int, seed: int) -> list[dict]:
    rng = random.Random(seed)
    names = list(COMPONENT_WEIGHTS)
    weights = list(COMPONENT_WEIGHTS.values())
    rows = []
    for i in range(n):
        component = rng.choices(names, weights=weights)[0]
        if component == "FineGrained":
            label = rng.choice(SPECIES)
        elif component == "Disease":
            label = rng.choice(DISEASES)
        else:
            label = rng.choice(COUNT_TARGETS)
        row = {
            "id": f"img-{i:06d}",
            "source_dataset": f"fixture-{component.lower()}",
            "image_path": f"images/{component.lower()}/{i:06d}.jpg",
            "class_label": label,
            "component": component,
            "category": category_for(label),
        }
        if component == "Counting":
            row["annotations"] = boxes(rng, rng.randint(1, 60))
        rows.append(row)
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--images", type=int, default=100, help="number of records")
    parser.add_argument("--seed", type=int, default=13, help="content shuffle seed")
    parser.add_argument("--output", default="-", help="output path, - for stdout")
    args = parser.parse_args()

    if args.images < 1:
        parser.error("--images must be positive")

    rows = make_rows(args.images, args.seed)
    out = sys.stdout if args.output == "-" else open(args.output, "w", encoding="utf-8")
    try:
        for row in rows:
            out.write(json.dumps(row, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
            print(f"wrote {len(rows)} records to {args.output}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
