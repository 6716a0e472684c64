"""Synth subcommand: write a synthetic citation-style fixture"""

import argparse
from pathlib import Path

from bgn.graph import save_graph, synth_citation_graph
from bgn.rng import RngStream
from config.settings import RunConfig

from .base import BgnCommand, CommandResult
from .train import split_for

SYNTH_STREAM = 7


class SynthCommand(BgnCommand):
    def __init__(self):
        super().__init__("synth", "Write a planted-partition graph with bag-of-words features and a split")

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--nodes", dest="synth_nodes", type=int, help="node count (default 200)")
        parser.add_argument("--features", dest="synth_features", type=int, help="feature width (default 100)")
        parser.add_argument("--classes", dest="synth_classes", type=int, help="class count (default 4)")
        parser.add_argument("--homophily", type=float, help="share of intra-class edges (default 0.9)")
        parser.add_argument("--per-class", type=int, help="training nodes per class (default 20)")
        parser.add_argument("--n-val", type=int, help="validation nodes (default 500, capped to the graph)")
        parser.add_argument("--n-test", type=int, help="test nodes (default 1000, capped to the graph)")

    def run(self, config: RunConfig) -> CommandResult:
        graph = synth_citation_graph(
            config.synth_nodes,
            config.synth_features,
            config.synth_classes,
            config.homophily,
            RngStream(config.seed).child(SYNTH_STREAM),
            normalize=False,
        )
        split = split_for(graph, config, self.logger)
        out = Path(config.out)
        save_graph(graph, out, split)
        print(f"wrote {graph.n_nodes} nodes, {graph.n_edges} edges to {out}")
        return self._create_success_result(
            data={"nodes": graph.n_nodes, "edges": graph.n_edges},
            metadata={"train": int(split.train_ids.size), "val": int(split.val_ids.size), "test": int(split.test_ids.size)},
        )
