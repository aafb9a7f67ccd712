"""Evaluation report assembly and emission.

Scoring commands write small per-run fragment files; this module merges
them into one report keyed dataset -> model and renders it as canonical
JSON (byte-stable) or markdown tables with best-score bolding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .jsonio import canonical_json


class FragmentError(ValueError):
    pass


class ScoreRangeError(ValueError):
    pass


class IoError(OSError):
    pass


@dataclass
class EvalReport:
    """dataset -> model -> {"metrics": {name: score}, "judge": {...}}."""

    datasets: dict[str, dict[str, dict]]
    metadata: dict[str, str] = field(default_factory=dict)


def merge_fragments(fragments: Sequence[dict], metadata: dict[str, str]) -> EvalReport:
    """Combine scoring fragments, refusing contradictory duplicates."""
    datasets: dict[str, dict[str, dict]] = {}
    for index, fragment in enumerate(fragments):
        if not isinstance(fragment, dict):
            raise FragmentError(f"fragment {index} is not a JSON object")
        dataset = fragment.get("dataset")
        model = fragment.get("model")
        if not isinstance(dataset, str) or not dataset:
            raise FragmentError(f"fragment {index} lacks a dataset name")
        if not isinstance(model, str) or not model:
            raise FragmentError(f"fragment {index} lacks a model name")
        cell = datasets.setdefault(dataset, {}).setdefault(model, {})
        metrics = fragment.get("metrics")
        if metrics is not None:
            if not isinstance(metrics, dict):
                raise FragmentError(f"fragment {index} metrics must be an object")
            for name, value in metrics.items():
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ScoreRangeError(f"{dataset}/{model}/{name} is not numeric")
                if not 0 <= value <= 100:
                    raise ScoreRangeError(
                        f"{dataset}/{model}/{name} = {value!r} outside [0, 100]"
                    )
                existing = cell.setdefault("metrics", {})
                if name in existing and existing[name] != value:
                    raise FragmentError(
                        f"conflicting values for {dataset}/{model}/{name}: "
                        f"{existing[name]!r} vs {value!r}"
                    )
                existing[name] = float(value)
        judge = fragment.get("judge")
        if judge is not None:
            if not isinstance(judge, dict):
                raise FragmentError(f"fragment {index} judge block must be an object")
            if "judge" in cell and cell["judge"] != judge:
                raise FragmentError(
                    f"conflicting judge blocks for {dataset}/{model}"
                )
            cell["judge"] = judge
    return EvalReport(datasets=datasets, metadata=dict(metadata))


def render_json(report: EvalReport) -> str:
    payload = {"datasets": report.datasets, "metadata": report.metadata}
    return canonical_json(payload) + "\n"


def _judge_cell(judge: dict | None) -> tuple[str, float | None]:
    if judge is None:
        return "n/a", None
    pct = judge.get("normalized_pct")
    if pct is None or judge.get("no_valid_verdicts"):
        return "failed", None
    return f"{pct:.2f}", float(pct)


def render_markdown(report: EvalReport) -> str:
    lines = ["# Evaluation report", ""]
    config_hash = report.metadata.get("config_hash")
    if config_hash:
        lines.append(f"- config: `{config_hash}`")
    generated = report.metadata.get("generated_at")
    if generated:
        lines.append(f"- generated: {generated}")
    for dataset in sorted(report.datasets):
        models = report.datasets[dataset]
        metric_names = sorted(
            {name for cell in models.values() for name in cell.get("metrics", {})}
        )
        has_judge = any("judge" in cell for cell in models.values())
        columns = metric_names + (["judge_pct"] if has_judge else [])

        # column-wise best values; ties all get bolded
        best: dict[str, float] = {}
        for name in metric_names:
            values = [
                cell["metrics"][name]
                for cell in models.values()
                if name in cell.get("metrics", {})
            ]
            if values:
                best[name] = max(values)
        if has_judge:
            judge_values = [
                _judge_cell(cell.get("judge"))[1]
                for cell in models.values()
                if cell.get("judge") is not None
            ]
            judge_values = [v for v in judge_values if v is not None]
            if judge_values:
                best["judge_pct"] = max(judge_values)

        lines.extend(["", f"## {dataset}", ""])
        lines.append("| model | " + " | ".join(columns) + " |")
        lines.append("| --- | " + " | ".join("---:" for _ in columns) + " |")
        for model in sorted(models):
            cell = models[model]
            row = [model]
            for name in metric_names:
                value = cell.get("metrics", {}).get(name)
                if value is None:
                    row.append("n/a")
                elif name in best and value == best[name]:
                    row.append(f"**{value:.2f}**")
                else:
                    row.append(f"{value:.2f}")
            if has_judge:
                text, value = _judge_cell(cell.get("judge"))
                if value is not None and value == best.get("judge_pct"):
                    text = f"**{text}**"
                row.append(text)
            lines.append("| " + " | ".join(row) + " |")
        for model in sorted(models):
            judge = models[model].get("judge")
            if judge and judge.get("failure_count"):
                lines.append("")
                lines.append(
                    f"{model}: {judge['failure_count']} item(s) excluded from the judge mean"
                )
    return "\n".join(lines) + "\n"


def emit_report(report: EvalReport, fmt: str, path: Path | str) -> Path:
    if fmt == "json":
        text = render_json(report)
    elif fmt == "markdown":
        text = render_markdown(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc
    return path
