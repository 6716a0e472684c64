"""Gmn subcommand: graph matching study on synthetic edit triplets"""

import argparse
from pathlib import Path

from bgn.gmn import TripletConfig, sweep
from config.settings import RunConfig

from .base import BgnCommand, CommandResult

GMN_FILE = "gmn.csv"


class GmnCommand(BgnCommand):
    """Train and evaluate binary and reference matchers"""

    def __init__(self):
        super().__init__("gmn", "Graph matching on synthetic edit triplets (binary vs reference codes)")

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        group = parser.add_argument_group("triplets")
        group.add_argument("--nodes", type=int, help="nodes per graph (default 20)")
        group.add_argument("--p", type=float, help="edge probability of the binomial graphs (default 0.2)")
        group.add_argument("--kp", type=int, help="edges substituted for positive pairs (default 1)")
        group.add_argument("--kn", type=int, help="edges substituted for negative pairs, must exceed kp (default 2)")
        group.add_argument("--pairs", type=int, help="labeled pairs for the AUC (default 1000)")
        group.add_argument("--triplets", type=int, help="triplets for the accuracy (default 1000)")
        group = parser.add_argument_group("matcher")
        group.add_argument("--steps", type=int, help="training steps (default 500)")
        group.add_argument("--batch", type=int, help="triplets per step (default 8)")
        group.add_argument("--margin", type=float, help="hinge margin on similarity (default 0.1)")
        group.add_argument("--match-lr", type=float, help="Adam learning rate (default 0.003)")
        group.add_argument("--node-dim", type=int, help="node state width (default 32)")
        group.add_argument("--graph-dim", type=int, help="graph code width (default 128)")
        group.add_argument("--modes", type=str, help="comma-separated modes: binary,reference (default both)")
        group.add_argument("--sweep-nodes", type=str, help="comma-separated node counts to sweep")
        group.add_argument("--sweep-graph-dims", type=str, help="comma-separated code widths to sweep")

    def run(self, config: RunConfig) -> CommandResult:
        cfg = TripletConfig(
            n=config.nodes, p=config.p, kp=config.kp, kn=config.kn, n_pairs=config.pairs, n_triplets=config.triplets
        )
        graph_dims = config.sweep_graph_dims or [config.graph_dim]
        frame = sweep(
            cfg,
            node_counts=config.sweep_nodes or [config.nodes],
            dims=[(config.node_dim, graph_dim) for graph_dim in graph_dims],
            modes=tuple(config.modes),
            steps=config.steps,
            seed=config.seed,
            margin=config.margin,
            batch=config.batch,
            lr=config.match_lr,
        )
        path = Path(config.out) / GMN_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        print(frame.to_string(index=False))
        print(f"wrote {path}")
        return self._create_success_result(data={"csv": str(path), "rows": len(frame)})
