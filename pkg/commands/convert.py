"""Convert subcommand: LINQS citation dump to TSV graph files"""

import argparse
from pathlib import Path

from bgn.graph import convert_linqs
from config.settings import RunConfig

from .base import BgnCommand, CommandResult, require_path


class ConvertCommand(BgnCommand):
    def __init__(self):
        super().__init__("convert", "Convert a LINQS .content/.cites dump into nodes.tsv and edges.tsv")

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--content", type=Path, help="the .content file (id, features, class label)")
        parser.add_argument("--cites", type=Path, help="the .cites file (cited id, citing id)")

    def run(self, config: RunConfig) -> CommandResult:
        content = require_path(config.content, "--content")
        cites = require_path(config.cites, "--cites")
        graph = convert_linqs(content, cites, Path(config.out))
        print(f"wrote {graph.n_nodes} nodes, {graph.n_edges} edges, {graph.n_classes} classes to {config.out}")
        return self._create_success_result(
            data={"nodes": graph.n_nodes, "edges": graph.n_edges, "classes": graph.n_classes}
        )
