"""Train subcommand: fit a model on a TSV graph and write checkpoint + history"""

import argparse
from pathlib import Path

from bgn.bgat import BgnConfig, BgnModel
from bgn.checkpoint import save_checkpoint
from bgn.graph import Graph, Split, load_graph, load_split, make_split
from bgn.rng import RngStream
from bgn.train import train_runs
from config.settings import RunConfig

from .base import BgnCommand, CommandResult, add_data_arguments, add_model_arguments, require_path

SPLIT_STREAM = 5


def build_model_config(config: RunConfig, graph: Graph) -> BgnConfig:
    """Model settings from the run configuration and the graph's dimensions"""
    return BgnConfig(
        in_dim=graph.n_features,
        n_classes=graph.n_classes,
        n_layers=config.layers,
        heads=config.heads,
        d_head=config.d_head,
        level=config.level,
        estimator=config.estimator,
        scoring=config.scoring,
        center_coefficients=config.center_coefficients,
        logit_scale=config.logit_scale,
        balance=config.balance,
        output_heads=config.output_heads,
        real_output_layer=config.real_output_layer,
        weight_clip=config.weight_clip,
        activation_clip=config.activation_clip,
    )


def split_for(graph: Graph, config: RunConfig, logger) -> Split:
    """Split sized from the config, shrinking test then validation sets to what the graph holds"""
    available = graph.n_nodes - config.per_class * graph.n_classes
    n_test = min(config.n_test, max(available, 0))
    n_val = min(config.n_val, max(available - n_test, 0))
    if (n_test, n_val) != (config.n_test, config.n_val):
        logger.warning(f"Graph too small for the requested split; using {n_test} test and {n_val} validation nodes")
    return make_split(graph, config.per_class, n_test, RngStream(config.seed).child(SPLIT_STREAM), n_val=n_val)


def load_data(config: RunConfig, logger) -> tuple[Graph, Split]:
    data = require_path(config.data, "--data")
    graph = load_graph(data, normalize=config.row_normalize)
    split = load_split(data, graph)
    if split is None:
        split = split_for(graph, config, logger)
    else:
        logger.info(f"Using split from {data}")
    return graph, split


def checkpoint_path(out: Path, level: str, suffix: str = "") -> Path:
    return Path(out) / f"model-{level}{suffix}.bgnm"


class TrainCommand(BgnCommand):
    """Train a binarized graph attention network"""

    def __init__(self):
        super().__init__("train", "Train a binarized graph attention network on a TSV graph")

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        add_data_arguments(parser)
        add_model_arguments(parser)
        group = parser.add_argument_group("training")
        group.add_argument("--epochs", type=int, help="maximum epochs (default 300)")
        group.add_argument("--lr", type=float, help="Adam learning rate (default 0.005)")
        group.add_argument("--patience", type=int, help="early-stop patience in epochs, 0 disables (default 30)")
        group.add_argument("--log-every", type=int, help="log progress every N epochs, 0 silences (default 20)")
        group.add_argument("--runs", type=int, help="train this many models on seeds seed, seed+1, ... (default 1)")

    def run(self, config: RunConfig) -> CommandResult:
        graph, split = load_data(config, self.logger)
        model_config = build_model_config(config, graph)
        seeds = [config.seed + i for i in range(config.runs)]
        results, summary = train_runs(
            lambda seed: BgnModel(model_config, seed=seed),
            graph,
            split,
            seeds,
            epochs=config.epochs,
            lr=config.lr,
            patience=config.patience or None,
            log_every=config.log_every,
        )

        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        level = config.level.value
        written = []
        for seed, result in zip(seeds, results, strict=True):
            suffix = "" if config.runs == 1 else f"-seed{seed}"
            path = checkpoint_path(out, level, suffix)
            save_checkpoint(result.model, path)
            result.write_history(out / f"history-{level}{suffix}.csv")
            written.append(str(path))
        (out / f"train-{level}.env").write_text(config.to_config_text(), encoding="utf-8")

        if config.runs == 1:
            print(f"test accuracy ({level}): {summary.mean:.4f}")
        else:
            print(f"test accuracy ({level}, {config.runs} runs): {summary.mean:.4f} +- {summary.std:.4f}")
        return self._create_success_result(
            data={"test_accuracy": summary.mean, "test_accuracy_std": summary.std, "checkpoints": written},
            metadata={"level": level, "estimator": config.estimator.value, "seeds": seeds},
        )
