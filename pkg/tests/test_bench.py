"""
Tests for the inference benchmark harness
"""

import math

import pandas as pd
import pytest

from bgn.bench import (
    BENCH_COLUMNS,
    bench_inference,
    format_seconds,
    summarize,
    time_call,
    write_reports,
)
from bgn.bgat import BgnConfig, BgnModel
from bgn.errors import BadParamError
from bgn.graph import synth_citation_graph
from bgn.rng import RngStream


def level_model(level, in_dim=100, d_head=8, **overrides):
    return BgnModel(BgnConfig(in_dim=in_dim, n_classes=4, heads=2, d_head=d_head, level=level, **overrides), seed=3)


class TestTimeCall:
    """Test the timing helper"""

    def test_counts_calls(self):
        """Warmup calls are untimed but still run"""
        calls = []
        timing = time_call(lambda: calls.append(1), trials=4, warmup=2)
        assert len(calls) == 6
        assert len(timing.samples) == 4
        assert timing.p25 <= timing.median <= timing.p75

    def test_needs_a_trial(self):
        """Zero trials is refused"""
        with pytest.raises(BadParamError):
            time_call(lambda: None, trials=0)

    def test_format_seconds(self):
        """Units follow the magnitude"""
        assert format_seconds(0.25) == "250.0 ms"
        assert format_seconds(42e-6) == "42.0 us"
        assert format_seconds(5e-9) == "5 ns"


class TestBenchInference:
    """Test per-level reports"""

    def test_space_ratios(self, fixture_graph, fixture_split):
        """Binary weights and embeddings save exactly 64x"""
        reports = bench_inference(
            [level_model("none"), level_model("we")], fixture_graph, trials=2, warmup=0, ids=fixture_split.test_ids
        )
        none, we = reports
        assert none.speedup > 0
        assert none.weight_space_ratio == 1.0
        assert we.weight_space_ratio == 64.0
        assert we.embedding_space_ratio == 64.0
        assert not we.random_init
        assert 0.0 <= we.accuracy <= 1.0

    def test_random_reference(self, fixture_graph):
        """Without a level=none model a random reference is timed and flagged"""
        (report,) = bench_inference([level_model("wec", estimator="reinforce")], fixture_graph, trials=1, warmup=0)
        assert report.random_init
        assert report.weight_space_ratio == 64.0
        assert math.isnan(report.accuracy)

    def test_low_confidence(self, fixture_graph):
        """Fewer than three trials are flagged"""
        low = bench_inference([level_model("none")], fixture_graph, trials=2, warmup=0)
        high = bench_inference([level_model("none")], fixture_graph, trials=3, warmup=0)
        assert low[0].low_confidence
        assert not high[0].low_confidence

    def test_needs_models(self, fixture_graph):
        """An empty model list is refused"""
        with pytest.raises(BadParamError):
            bench_inference([], fixture_graph)

    def test_csv_and_summary(self, tmp_path, fixture_graph):
        """CSV has the report columns; the summary has a line per level"""
        reports = bench_inference([level_model("none"), level_model("wec")], fixture_graph, trials=1, warmup=0)
        write_reports(reports, tmp_path / "bench.csv")
        frame = pd.read_csv(tmp_path / "bench.csv")
        assert list(frame.columns) == BENCH_COLUMNS
        assert frame["level"].tolist() == ["none", "wec"]
        text = summarize(reports)
        assert len(text.splitlines()) == 2
        assert "[low confidence]" in text


@pytest.mark.slow
class TestSpeedup:
    """Wall-clock gate on a citation-sized graph"""

    def test_binary_inference_is_faster(self):
        """Fully binarized inference is at least three times faster than the float path"""
        # 2708 nodes, 1433 bag-of-words features, about 18 words per node
        graph = synth_citation_graph(2708, 1433, 7, 0.8, RngStream(1), density=0.01, noise=0.003)
        models = [
            BgnModel(BgnConfig(in_dim=1433, n_classes=7, heads=1, d_head=64, level=level), seed=3) for level in ("none", "wec")
        ]
        _, wec = bench_inference(models, graph, trials=9, warmup=3)
        assert wec.speedup >= 3.0, f"median {wec.median_seconds:.4f} s, speedup {wec.speedup:.2f}x"
