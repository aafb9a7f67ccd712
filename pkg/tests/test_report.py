"""Fragment merging and report rendering."""
from __future__ import annotations

import json

import pytest

from agrisynth.report import (
    EvalReport,
    FragmentError,
    IoError,
    ScoreRangeError,
    emit_report,
    merge_fragments,
    render_json,
    render_markdown,
)


def frag(dataset="agri-bench", model="base", metrics=None, judge=None):
    out = {"dataset": dataset, "model": model}
    if metrics is not None:
        out["metrics"] = metrics
    if judge is not None:
        out["judge"] = judge
    return out


def judge_block(pct=55.56, failures=0, no_valid=False):
    return {
        "normalized_pct": None if no_valid else pct,
        "no_valid_verdicts": no_valid,
        "failure_count": failures,
        "failures": [f"q{i}" for i in range(failures)],
        "mean_score": None if no_valid else 2.5,
        "normalization": "offset",
        "model": "judge-model",
    }


class TestMergeFragments:
    def test_single_fragment(self):
        report = merge_fragments([frag(metrics={"bleu4": 49.34})], metadata={"config_hash": "abc"})
        assert report.datasets == {"agri-bench": {"base": {"metrics": {"bleu4": 49.34}}}}
        assert report.metadata == {"config_hash": "abc"}

    def test_metrics_and_judge_merge_into_one_cell(self):
        jb = judge_block()
        report = merge_fragments(
            [frag(metrics={"bleu4": 10.0}), frag(judge=jb)], metadata={}
        )
        cell = report.datasets["agri-bench"]["base"]
        assert cell["metrics"] == {"bleu4": 10.0}
        assert cell["judge"] == jb

    def test_distinct_models_and_datasets_kept_apart(self):
        report = merge_fragments(
            [
                frag(model="base", metrics={"bleu4": 10.0}),
                frag(model="tuned", metrics={"bleu4": 20.0}),
                frag(dataset="other", model="base", metrics={"bleu4": 30.0}),
            ],
            metadata={},
        )
        assert set(report.datasets) == {"agri-bench", "other"}
        assert set(report.datasets["agri-bench"]) == {"base", "tuned"}

    def test_int_scores_stored_as_float(self):
        report = merge_fragments([frag(metrics={"rouge2": 50})], metadata={})
        value = report.datasets["agri-bench"]["base"]["metrics"]["rouge2"]
        assert isinstance(value, float) and value == 50.0

    def test_identical_duplicate_tolerated(self):
        report = merge_fragments(
            [frag(metrics={"bleu4": 10.0}), frag(metrics={"bleu4": 10.0})], metadata={}
        )
        assert report.datasets["agri-bench"]["base"]["metrics"] == {"bleu4": 10.0}

    def test_conflicting_metric_rejected(self):
        with pytest.raises(FragmentError, match="conflicting values"):
            merge_fragments(
                [frag(metrics={"bleu4": 10.0}), frag(metrics={"bleu4": 11.0})], metadata={}
            )

    def test_conflicting_judge_rejected(self):
        with pytest.raises(FragmentError, match="conflicting judge"):
            merge_fragments(
                [frag(judge=judge_block(pct=50.0)), frag(judge=judge_block(pct=60.0))],
                metadata={},
            )

    def test_identical_judge_blocks_tolerated(self):
        report = merge_fragments(
            [frag(judge=judge_block()), frag(judge=judge_block())], metadata={}
        )
        assert report.datasets["agri-bench"]["base"]["judge"] == judge_block()

    @pytest.mark.parametrize(
        "fragment",
        [
            {"model": "base", "metrics": {}},
            {"dataset": "", "model": "base"},
            {"dataset": "d", "metrics": {}},
            {"dataset": "d", "model": ""},
            {"dataset": "d", "model": 3},
            "not an object",
        ],
    )
    def test_malformed_fragment_rejected(self, fragment):
        with pytest.raises(FragmentError):
            merge_fragments([fragment], metadata={})

    def test_metrics_must_be_object(self):
        with pytest.raises(FragmentError, match="metrics"):
            merge_fragments([frag(metrics=[1, 2])], metadata={})

    def test_judge_must_be_object(self):
        with pytest.raises(FragmentError, match="judge"):
            merge_fragments([frag(judge="fine")], metadata={})

    @pytest.mark.parametrize("value", [-0.5, 100.1, 1e9, float("nan"), True, "49"])
    def test_scores_outside_percent_range_rejected(self, value):
        # NaN fails every comparison, so it lands in the range check too
        with pytest.raises(ScoreRangeError):
            merge_fragments([frag(metrics={"bleu4": value})], metadata={})

    @pytest.mark.parametrize("value", [0, 100, 0.0, 49.34])
    def test_boundary_scores_accepted(self, value):
        report = merge_fragments([frag(metrics={"m": value})], metadata={})
        assert report.datasets["agri-bench"]["base"]["metrics"]["m"] == float(value)


class TestRenderJson:
    def test_trailing_newline_and_sorted_keys(self):
        report = merge_fragments(
            [frag(metrics={"bleu4": 10.0})], metadata={"config_hash": "abc"}
        )
        text = render_json(report)
        assert text.endswith("\n")
        assert text.index('"datasets"') < text.index('"metadata"')

    def test_render_parse_render_is_byte_stable(self):
        report = merge_fragments(
            [
                frag(metrics={"rouge2": 64.81, "bleu4": 55.3}),
                frag(model="tuned", judge=judge_block()),
            ],
            metadata={"config_hash": "abc", "generated_at": "1970-01-01T00:00:00+00:00"},
        )
        first = render_json(report)
        parsed = json.loads(first)
        again = render_json(EvalReport(datasets=parsed["datasets"], metadata=parsed["metadata"]))
        assert again == first


class TestRenderMarkdown:
    def test_single_cell_is_best_and_bolded(self):
        report = merge_fragments([frag(metrics={"bleu4": 49.34})], metadata={})
        text = render_markdown(report)
        assert "## agri-bench" in text
        assert "| model | bleu4 |" in text
        assert "| --- | ---: |" in text
        assert "**49.34**" in text

    def test_best_per_column_bolded_others_plain(self):
        report = merge_fragments(
            [
                frag(model="base", metrics={"bleu4": 10.0, "rouge2": 90.0}),
                frag(model="tuned", metrics={"bleu4": 20.0, "rouge2": 80.0}),
            ],
            metadata={},
        )
        text = render_markdown(report)
        assert "| base | 10.00 | **90.00** |" in text
        assert "| tuned | **20.00** | 80.00 |" in text

    def test_tied_best_bolds_every_holder(self):
        report = merge_fragments(
            [
                frag(model="base", metrics={"bleu4": 20.0}),
                frag(model="tuned", metrics={"bleu4": 20.0}),
            ],
            metadata={},
        )
        text = render_markdown(report)
        assert "| base | **20.00** |" in text
        assert "| tuned | **20.00** |" in text

    def test_missing_metric_renders_na(self):
        report = merge_fragments(
            [
                frag(model="base", metrics={"bleu4": 10.0}),
                frag(model="tuned", metrics={"rouge2": 30.0}),
            ],
            metadata={},
        )
        text = render_markdown(report)
        assert "| base | **10.00** | n/a |" in text
        assert "| tuned | n/a | **30.00** |" in text

    def test_judge_column_appended_and_best_bolded(self):
        report = merge_fragments(
            [
                frag(model="base", metrics={"bleu4": 10.0}, judge=judge_block(pct=40.0)),
                frag(model="tuned", metrics={"bleu4": 20.0}, judge=judge_block(pct=70.0)),
            ],
            metadata={},
        )
        text = render_markdown(report)
        assert "| model | bleu4 | judge_pct |" in text
        assert "| base | 10.00 | 40.00 |" in text
        assert "| tuned | **20.00** | **70.00** |" in text

    def test_failed_judge_cell(self):
        report = merge_fragments(
            [
                frag(model="base", judge=judge_block(no_valid=True, failures=3)),
                frag(model="tuned", judge=judge_block(pct=70.0)),
            ],
            metadata={},
        )
        text = render_markdown(report)
        assert "| base | failed |" in text
        assert "| tuned | **70.00** |" in text
        assert "base: 3 item(s) excluded from the judge mean" in text

    def test_partial_failures_noted_under_table(self):
        report = merge_fragments(
            [frag(model="base", judge=judge_block(pct=62.5, failures=2))], metadata={}
        )
        text = render_markdown(report)
        assert "| base | **62.50** |" in text
        assert "base: 2 item(s) excluded from the judge mean" in text

    def test_datasets_and_models_sorted(self):
        report = merge_fragments(
            [
                frag(dataset="zeta", model="m", metrics={"x": 1.0}),
                frag(dataset="alpha", model="z-model", metrics={"x": 1.0}),
                frag(dataset="alpha", model="a-model", metrics={"x": 2.0}),
            ],
            metadata={},
        )
        text = render_markdown(report)
        assert text.index("## alpha") < text.index("## zeta")
        alpha_rows = text.index("| a-model"), text.index("| z-model")
        assert alpha_rows[0] < alpha_rows[1]

    def test_metadata_header_lines(self):
        report = merge_fragments(
            [frag(metrics={"x": 1.0})],
            metadata={"config_hash": "deadbeef", "generated_at": "1970-01-01T00:00:00+00:00"},
        )
        text = render_markdown(report)
        assert text.startswith("# Evaluation report\n")
        assert "- config: `deadbeef`" in text
        assert "- generated: 1970-01-01T00:00:00+00:00" in text


class TestEmitReport:
    def test_json_file_round_trip_byte_stable(self, tmp_path):
        report = merge_fragments(
            [frag(metrics={"bleu4": 55.3}), frag(model="tuned", judge=judge_block())],
            metadata={"config_hash": "abc"},
        )
        first = tmp_path / "report.json"
        second = tmp_path / "again.json"
        emit_report(report, "json", first)
        parsed = json.loads(first.read_text(encoding="utf-8"))
        emit_report(
            EvalReport(datasets=parsed["datasets"], metadata=parsed["metadata"]),
            "json",
            second,
        )
        assert first.read_bytes() == second.read_bytes()

    def test_markdown_file_written(self, tmp_path):
        report = merge_fragments([frag(metrics={"bleu4": 55.3})], metadata={})
        path = emit_report(report, "markdown", tmp_path / "nested" / "report.md")
        assert path.read_text(encoding="utf-8").startswith("# Evaluation report")

    def test_unknown_format_rejected(self, tmp_path):
        report = EvalReport(datasets={})
        with pytest.raises(ValueError, match="format"):
            emit_report(report, "html", tmp_path / "r.html")

    def test_write_failure_wrapped(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("file, not a directory", encoding="utf-8")
        report = EvalReport(datasets={})
        with pytest.raises(IoError, match="cannot write report"):
            emit_report(report, "json", blocker / "r.json")
