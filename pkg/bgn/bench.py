"""Inference time and space benchmark across binarization levels"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .bgat import BgnModel, Estimator, Level, loss_and_accuracy
from .errors import BadParamError
from .graph import Graph

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 9
DEFAULT_WARMUP = 3
LOW_CONFIDENCE_TRIALS = 3
BENCH_COLUMNS = [
    "level",
    "estimator",
    "trials",
    "median_seconds",
    "p25_seconds",
    "p75_seconds",
    "parameter_bits",
    "weight_bits",
    "embedding_bits",
    "accuracy",
    "speedup",
    "param_space_ratio",
    "weight_space_ratio",
    "embedding_space_ratio",
    "low_confidence",
    "random_init",
]


@dataclass
class BenchReport:
    """One benchmarked level; ratios are reference value over this level's value"""

    level: str
    estimator: str
    trials: int
    median_seconds: float
    p25_seconds: float
    p75_seconds: float
    parameter_bits: int
    weight_bits: int
    embedding_bits: int
    accuracy: float
    speedup: float
    param_space_ratio: float
    weight_space_ratio: float
    embedding_space_ratio: float
    low_confidence: bool
    random_init: bool


@dataclass
class Timing:
    median: float
    p25: float
    p75: float
    samples: list[float]


def time_call(fn: Callable[[], object], trials: int = DEFAULT_TRIALS, warmup: int = DEFAULT_WARMUP) -> Timing:
    """Median wall-clock seconds of ``fn`` after ``warmup`` untimed calls"""
    if trials < 1:
        raise BadParamError(f"trials must be at least 1, got {trials}")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(trials):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    p25, median, p75 = np.percentile(samples, [25, 50, 75])
    return Timing(float(median), float(p25), float(p75), samples)


def _ratio(reference: float, value: float) -> float:
    return reference / value if value else math.inf


def _measure(
    model: BgnModel, graph: Graph, ids: np.ndarray | None, trials: int, warmup: int, workers: int
) -> tuple[Timing, float]:
    # level none has no binary tensors, so fast=True runs the plain float path for it
    timing = time_call(lambda: model.predict(graph, fast=True, workers=workers), trials, warmup)
    accuracy = math.nan
    if ids is not None and ids.size:
        accuracy = loss_and_accuracy(model.predict(graph, fast=True), graph.labels, ids)[1]
    return timing, accuracy


def bench_inference(
    models: list[BgnModel],
    graph: Graph,
    *,
    trials: int = DEFAULT_TRIALS,
    warmup: int = DEFAULT_WARMUP,
    ids=None,
    random_init: bool = False,
    workers: int = 1,
) -> list[BenchReport]:
    """Time full-graph inference per model and account bits against the level=none reference

    When no model in ``models`` has level none, a randomly initialized
    reference of the same shape is built and flagged in the report.
    """
    if not models:
        raise BadParamError("bench_inference needs at least one model")
    ids = None if ids is None else np.asarray(ids, dtype=np.int64)
    reference = next((m for m in models if m.config.level is Level.NONE), None)
    reference_is_random = random_init
    if reference is None:
        base = models[0]
        reference = BgnModel(replace(base.config, level=Level.NONE, estimator=Estimator.STE), seed=base.seed)
        reference_is_random = True
        logger.info("No level=none model given; timing a randomly initialized reference")

    ref_timing, _ = _measure(reference, graph, None, trials, warmup, workers)
    ref_embedding = reference.embedding_bits_per_node() * graph.n_nodes
    reports = []
    for model in models:
        timing, accuracy = _measure(model, graph, ids, trials, warmup, workers)
        embedding_bits = model.embedding_bits_per_node() * graph.n_nodes
        report = BenchReport(
            level=model.config.level.value,
            estimator=model.config.estimator.value,
            trials=trials,
            median_seconds=timing.median,
            p25_seconds=timing.p25,
            p75_seconds=timing.p75,
            parameter_bits=model.parameter_bits(),
            weight_bits=model.weight_bits(),
            embedding_bits=embedding_bits,
            accuracy=accuracy,
            speedup=_ratio(ref_timing.median, timing.median),
            param_space_ratio=_ratio(reference.parameter_bits(), model.parameter_bits()),
            weight_space_ratio=_ratio(reference.weight_bits(), model.weight_bits()),
            embedding_space_ratio=_ratio(ref_embedding, embedding_bits),
            low_confidence=trials < LOW_CONFIDENCE_TRIALS,
            random_init=reference_is_random,
        )
        logger.info(
            f"level={report.level}: median {report.median_seconds * 1e3:.2f} ms "
            f"(p25 {report.p25_seconds * 1e3:.2f}, p75 {report.p75_seconds * 1e3:.2f}), speedup {report.speedup:.2f}x"
        )
        reports.append(report)
    if trials < LOW_CONFIDENCE_TRIALS:
        logger.warning(f"Only {trials} timed trial(s); medians are low confidence")
    return reports


def reports_frame(reports: list[BenchReport]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in reports], columns=BENCH_COLUMNS)


def write_reports(reports: list[BenchReport], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(reports).to_csv(path, index=False)


def format_seconds(dt: float) -> str:
    if dt >= 10e-3:
        return f"{dt * 1e3:.1f} ms"
    if dt >= 10e-6:
        return f"{dt * 1e6:.1f} us"
    return f"{dt * 1e9:.0f} ns"


def summarize(reports: list[BenchReport]) -> str:
    """Human-readable table for stdout"""
    lines = []
    for r in reports:
        flags = " [low confidence]" if r.low_confidence else ""
        flags += " [random reference]" if r.random_init else ""
        lines.append(
            f"{r.level:>5}  {format_seconds(r.median_seconds):>10}  speedup {r.speedup:6.2f}x  "
            f"params {r.param_space_ratio:6.2f}x  embeddings {r.embedding_space_ratio:6.2f}x  "
            f"acc {r.accuracy:.4f}{flags}"
        )
    return "\n".join(lines)
