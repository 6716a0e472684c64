"""Base classes and registry for command-line subcommands"""

import argparse
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from bgn.errors import BgnError
from config.settings import RunConfig, Settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def require_path(path: Path | None, flag: str) -> Path:
    """Return ``path`` if it exists; raise naming the flag or the missing path"""
    if path is None:
        raise BgnError(f"{flag} is required")
    path = Path(path)
    if not path.exists():
        raise BgnError(f"{flag}: path does not exist: {path}")
    return path


@dataclass
class CommandResult:
    """Standardized command execution result"""

    success: bool
    data: Any = None
    error: str | None = None
    metadata: dict[str, Any] | None = None
    exit_code: int = EXIT_OK

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary for logging and tests"""
        result: dict[str, Any] = {"success": self.success, "exit_code": self.exit_code}

        if self.data is not None:
            result["data"] = self.data

        if self.error:
            result["error"] = self.error

        if self.metadata:
            result["metadata"] = self.metadata

        return result


class BgnCommand(ABC):
    """Abstract base class for all subcommands"""

    def __init__(self, name: str, description: str):
        self.name = name
        self.description = description
        self.logger = logging.getLogger(f"commands.{name}")

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Declare the subcommand's flags; every default must be None so the config file can fill it"""

    @abstractmethod
    def run(self, config: RunConfig) -> CommandResult:
        """Execute the subcommand"""

    def _create_success_result(self, data: Any = None, metadata: dict[str, Any] | None = None) -> CommandResult:
        """Helper to create success result"""
        return CommandResult(success=True, data=data, metadata=metadata)

    def _create_error_result(self, error: str, exit_code: int = EXIT_FAILURE) -> CommandResult:
        """Helper to create error result"""
        return CommandResult(success=False, error=error, exit_code=exit_code)


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    """Model shape and binarization flags shared by train and bench"""
    group = parser.add_argument_group("model")
    group.add_argument("--level", choices=["none", "w", "e", "we", "wec"], help="binarized tensors (default none)")
    group.add_argument("--estimator", choices=["ste", "reinforce"], help="gradient estimator (default ste)")
    group.add_argument("--scoring", choices=["additive", "dot"], help="attention score function (default additive)")
    group.add_argument(
        "--center-coefficients",
        action=argparse.BooleanOptionalAction,
        help="subtract the neighborhood mean before ternary binarization (default on)",
    )
    group.add_argument("--logit-scale", choices=["unit", "inv_sqrt_dim"], help="output logit scaling (default inv_sqrt_dim)")
    group.add_argument("--balance", action=argparse.BooleanOptionalAction, help="mean-center embeddings before binarizing")
    group.add_argument(
        "--real-output-layer", action=argparse.BooleanOptionalAction, help="keep output layer weights real-valued"
    )
    group.add_argument("--layers", type=int, help="attention layers including the output layer (default 2)")
    group.add_argument("--heads", type=int, help="heads per hidden layer (default 8)")
    group.add_argument("--d-head", type=int, help="width of each hidden head (default 8)")
    group.add_argument("--output-heads", type=int, help="heads averaged in the output layer (default 1)")
    group.add_argument("--weight-clip", type=str, help="STE clip radius for weights, or none (default 1.0)")
    group.add_argument("--activation-clip", type=str, help="STE clip radius for embeddings, or none (default none)")


def add_data_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("--data", type=Path, help="directory holding nodes.tsv, edges.tsv and optionally split.tsv")
    group.add_argument(
        "--row-normalize", action=argparse.BooleanOptionalAction, help="scale feature rows to unit sum (default on)"
    )
    group.add_argument("--per-class", type=int, help="training nodes per class when no split.tsv exists (default 20)")
    group.add_argument("--n-val", type=int, help="validation nodes when no split.tsv exists (default 500)")
    group.add_argument("--n-test", type=int, help="test nodes when no split.tsv exists (default 1000)")


class CommandRegistry:
    """Registry and dispatcher for all subcommands"""

    def __init__(self):
        self.commands: dict[str, BgnCommand] = {}
        self.logger = logging.getLogger("commands.registry")

    def register(self, command: BgnCommand) -> None:
        self.commands[command.name] = command

    def get_command(self, name: str) -> BgnCommand | None:
        """Get a command by name"""
        return self.commands.get(name)

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="bgn", description="Binarized graph attention networks")
        subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
        for command in self.commands.values():
            sub = subparsers.add_parser(command.name, help=command.description, description=command.description)
            sub.add_argument("--config", type=Path, help="key=value config file supplying any flag")
            sub.add_argument("--seed", type=int, help="random seed (default 0)")
            sub.add_argument("--out", type=Path, help="output directory (default runs)")
            command.add_arguments(sub)
        return parser

    def execute(self, argv: list[str] | None = None) -> CommandResult:
        """Parse ``argv`` and run the chosen command; usage errors exit with status 2"""
        args = self.build_parser().parse_args(argv)
        command = self.commands[args.command]
        values = vars(args)
        config_file = values.pop("config")
        try:
            config = Settings(config_file).resolve(values)
            return command.run(config)
        except BgnError as e:
            self.logger.error(f"{command.name} failed: {e}")
            return CommandResult(success=False, error=str(e), exit_code=EXIT_FAILURE)
        except OSError as e:
            self.logger.error(f"{command.name} failed: {e}")
            return CommandResult(success=False, error=str(e), exit_code=EXIT_FAILURE)


def default_registry() -> CommandRegistry:
    """Registry holding every built-in subcommand"""
    from .bench import BenchCommand
    from .convert import ConvertCommand
    from .gmn import GmnCommand
    from .synth import SynthCommand
    from .train import TrainCommand

    registry = CommandRegistry()
    for command_class in (TrainCommand, BenchCommand, GmnCommand, ConvertCommand, SynthCommand):
        registry.register(command_class())
    return registry
