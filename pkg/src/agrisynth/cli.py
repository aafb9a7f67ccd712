"""Unified command line: ingest, split, synthesize, review, score, report.

Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime failure.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import click

from .config import ConfigError, RunConfig, load_config
from .corpus import ImageRecord, corpus_stats, ingest_manifest, split_corpus
from .jsonio import canonical_json, read_jsonl
from .judge import EvalItem, judge_run
from .metrics import bleu4, corpus_aggregate, meteor_lite, rouge2, tokenize
from .modelmath import LoraAdapter, lora_forward, masked_ce_loss, vision_plan
from .pipeline import REVIEW_DIR, RUN_STATE_FILE, build_chat_client, pipeline_clock, run_pipeline
from .report import IoError as ReportIoError
from .report import emit_report, merge_fragments, render_json, render_markdown
from .review import ReviewQueue
from .review_api import AUTH_TOKEN_ENV, serve


@dataclass
class CliState:
    config_path: Path | None
    workdir: Path | None
    dry_run: bool
    mock: bool | None
    force: bool

    def load(self, flags: dict | None = None) -> RunConfig:
        merged: dict = {}
        if self.mock is not None:
            merged["endpoints.mock"] = self.mock
        if flags:
            merged.update({k: v for k, v in flags.items() if v is not None})
        return load_config(
            path=self.config_path,
            env=os.environ,
            flags=merged,
            workdir=self.workdir,
            dry_run=self.dry_run,
            force=self.force,
        )


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="TOML config file.")
@click.option("--workdir", type=click.Path(path_type=Path), default=None,
              help="Artifact directory for runs and review state.")
@click.option("--dry-run", is_flag=True, help="Describe the work without writing artifacts.")
@click.option("--mock/--live", "mock", default=None,
              help="Use deterministic in-process model endpoints.")
@click.option("--force", is_flag=True, help="Override workdir config-mismatch guards.")
@click.pass_context
def cli(ctx, config_path, workdir, dry_run, mock, force):
    """Synthesis, review, and evaluation toolkit for agricultural VQA data."""
    ctx.obj = CliState(
        config_path=config_path,
        workdir=workdir,
        dry_run=dry_run,
        mock=mock,
        force=force,
    )


def _record_dict(record: ImageRecord) -> dict:
    return {
        "id": record.id,
        "source_dataset": record.source_dataset,
        "image_path": record.image_path,
        "class_label": record.class_label,
        "component": record.component.value,
        "category": record.category.value,
        "annotation_count": record.annotation_count,
        "split": record.split.value,
    }


def _echo_json(payload) -> None:
    click.echo(canonical_json(payload))


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


@cli.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", type=click.Path(path_type=Path), default=None,
              help="Write normalized records as JSONL.")
def ingest(manifest_path, output):
    """Parse and validate a corpus manifest."""
    manifest = ingest_manifest([manifest_path])
    for warning in manifest.warnings:
        click.echo(f"warning: {warning}", err=True)
    if output is not None:
        lines = "".join(canonical_json(_record_dict(r)) + "\n" for r in manifest.records)
        _write_text(output, lines)
    click.echo(f"ingested {len(manifest)} records from {manifest_path}")


@cli.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--ratio", type=float, default=None, help="Train fraction, in (0,1).")
@click.option("--seed", type=int, default=None, help="Split shuffle seed.")
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def split(state: CliState, manifest_path, ratio, seed, output):
    """Deterministic stratified train/test split."""
    cfg = state.load({"split.ratio": ratio, "split.seed": seed})
    manifest = ingest_manifest([manifest_path])
    train, test = split_corpus(manifest, cfg.split.ratio, cfg.split.seed)
    payload = {
        "ratio": cfg.split.ratio,
        "seed": cfg.split.seed,
        "train": train,
        "test": test,
    }
    text = canonical_json(payload) + "\n"
    if output is not None:
        _write_text(output, text)
        click.echo(f"split {len(train)}/{len(test)} written to {output}")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def stats(manifest_path):
    """Corpus composition counts."""
    manifest = ingest_manifest([manifest_path])
    _echo_json(asdict(corpus_stats(manifest)))


@cli.group()
def synth():
    """Three-stage caption/knowledge/QA synthesis."""


def _run_synthesis(state: CliState, manifest_path: Path, extra_flags: dict) -> None:
    cfg = state.load(extra_flags)
    manifest = ingest_manifest([manifest_path])
    if cfg.dry_run:
        classes = len(manifest.by_class())
        click.echo(
            f"dry run: would synthesize captions for {len(manifest)} images, "
            f"retrieve knowledge for {classes} classes, and emit "
            f"{5 * len(manifest)} QA pairs under {cfg.workdir}"
        )
        return
    result = run_pipeline(manifest, cfg)
    _echo_json(result.to_dict())


@synth.command("run")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--auto-approve", is_flag=True, default=False,
              help="Skip the human gate; mark retrieved knowledge approved.")
@click.pass_obj
def synth_run(state: CliState, manifest_path, auto_approve):
    """Run the pipeline from the beginning (resumes automatically)."""
    flags = {"synth.auto_approve": True} if auto_approve else {}
    _run_synthesis(state, manifest_path, flags)


@synth.command("resume")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--auto-approve", is_flag=True, default=False,
              help="Skip the human gate; mark retrieved knowledge approved.")
@click.pass_obj
def synth_resume(state: CliState, manifest_path, auto_approve):
    """Continue an interrupted or review-gated run."""
    flags = {"synth.auto_approve": True} if auto_approve else {}
    cfg = state.load(flags)
    if not (Path(cfg.workdir) / RUN_STATE_FILE).exists():
        raise RuntimeError(f"nothing to resume: no run state under {cfg.workdir}")
    _run_synthesis(state, manifest_path, flags)


@cli.group()
def review():
    """Human verdicts over retrieved knowledge."""


@review.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--token", default=None, help="Bearer token; defaults to the env var.")
@click.pass_obj
def review_serve(state: CliState, host, port, token):
    """Serve the review API over the workdir queue."""
    cfg = state.load()
    root = Path(cfg.workdir) / REVIEW_DIR
    serve(root, host=host, port=port, auth_token=token or os.environ.get(AUTH_TOKEN_ENV))


@review.command("export")
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def review_export(state: CliState, output):
    """Write approved/edited knowledge entries as JSONL."""
    cfg = state.load()
    queue = ReviewQueue(Path(cfg.workdir) / REVIEW_DIR)
    rows = [entry.to_dict() for entry in queue.export_approved()]
    text = "".join(canonical_json(row) + "\n" for row in rows)
    if output is not None:
        _write_text(output, text)
        click.echo(f"exported {len(rows)} entries to {output}")
    else:
        click.echo(text, nl=False)


def _load_eval_items(path: Path) -> list[EvalItem]:
    return [EvalItem.from_dict(row) for row in read_jsonl(path)]


def _emit_fragment(fragment: dict, output: Path | None) -> None:
    text = canonical_json(fragment) + "\n"
    if output is not None:
        _write_text(output, text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text, nl=False)


@cli.group("eval")
def eval_group():
    """Score model predictions against references."""


@eval_group.command("metrics")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSONL rows {id, question, reference, prediction}.")
@click.option("--dataset", required=True)
@click.option("--model", required=True)
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def eval_metrics(state: CliState, input_path, dataset, model, output):
    """Lexical metrics: pooled 4-gram precision, bigram F1, aligned Fmean."""
    cfg = state.load()
    items = _load_eval_items(input_path)
    if cfg.dry_run:
        click.echo(f"dry run: would score {len(items)} items from {input_path}")
        return
    candidates = [tokenize(item.prediction) for item in items]
    references = [tokenize(item.reference) for item in items]
    per_item = [bleu4(candidates, references)]
    for cand, ref in zip(candidates, references):
        per_item.append(rouge2(cand, ref))
        per_item.append(meteor_lite(cand, ref))
    fragment = {
        "dataset": dataset,
        "model": model,
        "metrics": corpus_aggregate(per_item),
        "items": len(items),
        "config_hash": cfg.config_hash,
        "generated_at": pipeline_clock(cfg),
    }
    _emit_fragment(fragment, output)


@eval_group.command("judge")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--dataset", required=True)
@click.option("--model", required=True)
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def eval_judge(state: CliState, input_path, dataset, model, output):
    """Grade each prediction on the 1-4 rubric via the judge model."""
    cfg = state.load()
    items = _load_eval_items(input_path)
    if cfg.dry_run:
        click.echo(f"dry run: would judge {len(items)} items from {input_path}")
        return
    chat = build_chat_client(cfg)
    result = judge_run(items, chat, cfg)
    fragment = {
        "dataset": dataset,
        "model": model,
        "judge": result.to_dict(),
        "config_hash": cfg.config_hash,
        "generated_at": pipeline_clock(cfg),
    }
    _emit_fragment(fragment, output)


@cli.command()
@click.argument("fragments", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]), default="markdown",
              show_default=True)
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def report(state: CliState, fragments, fmt, output):
    """Merge scoring fragments into one report."""
    cfg = state.load()
    loaded = [json.loads(Path(p).read_text(encoding="utf-8")) for p in fragments]
    merged = merge_fragments(
        loaded,
        metadata={"config_hash": cfg.config_hash, "generated_at": pipeline_clock(cfg)},
    )
    if cfg.dry_run:
        datasets = sum(len(models) for models in merged.datasets.values())
        click.echo(f"dry run: report covers {datasets} dataset/model cells")
        return
    if output is not None:
        emit_report(merged, fmt, output)
        click.echo(f"wrote {output}")
    else:
        text = render_json(merged) if fmt == "json" else render_markdown(merged)
        click.echo(text, nl=False)


@cli.group()
def modelmath():
    """Architecture arithmetic checks."""


@modelmath.command("check")
def modelmath_check():
    """Verify the tiling budget, adapter init, and loss arithmetic."""
    plan = vision_plan(1344, 1344)
    if plan.grid != (4, 4) or plan.raw_total != 12393:
        raise RuntimeError(f"unexpected tiling plan: {plan}")
    if plan.pooled_hw != (22, 22) or plan.pooled_total != 8473:
        raise RuntimeError(f"unexpected pooled budget: {plan}")
    click.echo(f"1344x1344 at tile {plan.tile}: grid {plan.grid[0]}x{plan.grid[1]}")
    click.echo(
        f"raw visual tokens ({plan.grid[0]}*{plan.grid[1]}+1)*{plan.tokens_per_tile} "
        f"= {plan.raw_total} exceeds budget {plan.budget}"
    )
    click.echo(
        f"pooled tiles to {plan.pooled_hw[0]}x{plan.pooled_hw[1]}: "
        f"{plan.tokens_per_tile} + {plan.grid[0] * plan.grid[1]}*"
        f"{plan.pooled_hw[0] * plan.pooled_hw[1]} = {plan.pooled_total} "
        f"<= {plan.budget}"
    )

    w0 = [[0.5, -0.25], [0.125, 1.0]]
    adapter = LoraAdapter.fresh(w0, r=2, alpha=4.0, seed=0)
    x = [1.5, -2.0]
    base = [
        x[0] * w0[0][0] + x[1] * w0[1][0],
        x[0] * w0[0][1] + x[1] * w0[1][1],
    ]
    if lora_forward(x, adapter) != base:
        raise RuntimeError("zero-initialized adapter changed the base forward")
    click.echo("adapter forward at init equals the frozen base: ok")

    loss = masked_ce_loss([math.log(0.5), math.log(0.5), math.log(0.25)], [0, 1, 1])
    if abs(loss - math.log(8)) > 1e-12:
        raise RuntimeError(f"masked loss example off: {loss!r}")
    click.echo("masked loss on the ln(8) example: ok")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="agrisynth")
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except (ReportIoError, OSError, RuntimeError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0
