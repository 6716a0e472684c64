"""Bench subcommand: inference time and space per binarization level"""

import argparse
from dataclasses import replace
from pathlib import Path

from bgn.bench import bench_inference, summarize, write_reports
from bgn.bgat import BgnModel, Estimator, Level
from bgn.checkpoint import load_checkpoint
from bgn.errors import BgnError
from config.settings import RunConfig

from .base import BgnCommand, CommandResult, add_data_arguments, add_model_arguments, require_path
from .train import build_model_config, checkpoint_path, load_data

BENCH_FILE = "bench.csv"


class BenchCommand(BgnCommand):
    """Time full-graph inference and account bits for each level"""

    def __init__(self):
        super().__init__("bench", "Benchmark inference time and space across binarization levels")

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        add_data_arguments(parser)
        add_model_arguments(parser)
        group = parser.add_argument_group("benchmark")
        group.add_argument("--levels", type=str, help="comma-separated levels to compare (default none,wec)")
        group.add_argument(
            "--checkpoints", type=Path, nargs="+", help="checkpoint files to benchmark instead of --out/model-LEVEL.bgnm"
        )
        group.add_argument("--trials", type=int, help="timed trials per level (default 9)")
        group.add_argument("--warmup", type=int, help="untimed warmup runs (default 3)")
        group.add_argument(
            "--random-init",
            action=argparse.BooleanOptionalAction,
            help="use randomly initialized models for levels without a checkpoint",
        )
        group.add_argument("--workers", type=int, help="threads running the heads of a layer (default 1)")

    def _models(self, config: RunConfig, graph) -> list[BgnModel]:
        if config.checkpoints:
            return [load_checkpoint(require_path(path, "--checkpoints")) for path in config.checkpoints]
        base = build_model_config(config, graph)
        models = []
        for level in config.levels:
            path = checkpoint_path(config.out, level.value)
            if path.exists():
                models.append(load_checkpoint(path))
            elif config.random_init:
                self.logger.info(f"No checkpoint for level {level.value}; using a random initialization")
                estimator = Estimator.STE if level is Level.NONE else config.estimator
                models.append(BgnModel(replace(base, level=level, estimator=estimator), seed=config.seed))
            else:
                raise BgnError(f"missing checkpoint for level {level.value}: {path} (train it first or pass --random-init)")
        return models

    def run(self, config: RunConfig) -> CommandResult:
        graph, split = load_data(config, self.logger)
        models = self._models(config, graph)
        reports = bench_inference(
            models,
            graph,
            trials=config.trials,
            warmup=config.warmup,
            ids=split.test_ids,
            random_init=config.random_init and not config.checkpoints,
            workers=config.workers,
        )
        path = Path(config.out) / BENCH_FILE
        write_reports(reports, path)
        print(summarize(reports))
        print(f"wrote {path}")
        return self._create_success_result(
            data={"csv": str(path), "levels": [r.level for r in reports]},
            metadata={"trials": config.trials},
        )
