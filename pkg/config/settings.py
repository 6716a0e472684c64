"""Configuration management for the BGN command line
Config file loading, run configuration and validation
"""

import logging
import os
from pathlib import Path
from typing import Any

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from bgn.bgat import Estimator, Level, LogitScale, Scoring
from bgn.errors import BadParamError
from bgn.gmn import MatchMode

logger = logging.getLogger(__name__)

CONFIG_FILE_ENV = "BGN_CONFIG_FILE"
LOG_LEVEL_ENV = "BGN_LOG_LEVEL"
_NONE_WORDS = {"", "none", "null", "off"}


class RunConfig(BaseModel):
    """Every setting a subcommand can take, validated together"""

    model_config = ConfigDict(extra="forbid", validate_assignment=False)

    command: str | None = None

    # data and outputs
    data: Path | None = None
    out: Path = Path("runs")
    checkpoints: list[Path] = Field(default_factory=list)
    row_normalize: bool = True
    per_class: int = 20
    n_val: int = 500
    n_test: int = 1000

    # model
    level: Level = Level.NONE
    estimator: Estimator | None = None
    scoring: Scoring = Scoring.ADDITIVE
    center_coefficients: bool = True
    logit_scale: LogitScale = LogitScale.INV_SQRT_DIM
    balance: bool = False
    real_output_layer: bool = False
    layers: int = 2
    heads: int = 8
    d_head: int = 8
    output_heads: int = 1
    weight_clip: float | None = 1.0
    activation_clip: float | None = None

    # training
    epochs: int = 300
    lr: float = 5e-3
    patience: int = 30
    log_every: int = 20
    seed: int = 0
    runs: int = 1

    # benchmark
    levels: list[Level] = Field(default_factory=lambda: [Level.NONE, Level.WEC])
    trials: int = 9
    warmup: int = 3
    random_init: bool = False
    workers: int = 1

    # graph matching
    nodes: int = 20
    p: float = 0.2
    kp: int = 1
    kn: int = 2
    pairs: int = 1000
    triplets: int = 1000
    steps: int = 500
    batch: int = 8
    margin: float = 0.1
    match_lr: float = 3e-3
    node_dim: int = 32
    graph_dim: int = 128
    modes: list[MatchMode] = Field(default_factory=lambda: [MatchMode.BINARY, MatchMode.REFERENCE])
    sweep_nodes: list[int] = Field(default_factory=list)
    sweep_graph_dims: list[int] = Field(default_factory=list)

    # dataset conversion and synthesis
    content: Path | None = None
    cites: Path | None = None
    synth_nodes: int = 200
    synth_features: int = 100
    synth_classes: int = 4
    homophily: float = 0.9

    @field_validator("checkpoints", "levels", "modes", "sweep_nodes", "sweep_graph_dims", mode="before")
    @classmethod
    def _split_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("weight_clip", "activation_clip", "estimator", "data", "content", "cites", mode="before")
    @classmethod
    def _none_words(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in _NONE_WORDS:
            return None
        return value

    @model_validator(mode="after")
    def _check_combinations(self) -> "RunConfig":
        if self.estimator is Estimator.REINFORCE and self.level is Level.NONE:
            raise ValueError("estimator reinforce needs a binarized level (w, e, we or wec)")
        if self.estimator is None:
            if self.level is not Level.NONE:
                logger.info(f"No estimator given for level {self.level.value}; using the default ste")
            self.estimator = Estimator.STE
        if self.kp >= self.kn:
            raise ValueError(f"kp must be smaller than kn, got kp={self.kp} kn={self.kn}")
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0.0 <= self.homophily <= 1.0:
            raise ValueError(f"homophily must lie in [0, 1], got {self.homophily}")
        positive = (
            "layers", "heads", "d_head", "output_heads", "epochs", "runs", "trials", "nodes", "kp",
            "pairs", "triplets", "batch", "node_dim", "graph_dim", "synth_nodes", "synth_features",
            "synth_classes", "per_class", "workers",
        )  # fmt: skip
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("n_val", "n_test", "steps", "warmup", "patience", "seed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if any(n < 2 for n in self.sweep_nodes) or any(d < 1 for d in self.sweep_graph_dims):
            raise ValueError("sweep node counts must be at least 2 and code widths positive")
        return self

    def to_config_text(self) -> str:
        """key=value lines that :class:`Settings` reads back into an equal config"""
        lines = []
        for name, value in self.model_dump().items():
            if name == "command":
                continue
            lines.append(f"{name}={_format_value(value)}")
        return "\n".join(lines) + "\n"


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(_format_value(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


class Settings:
    """Layered configuration: command-line values, then a config file, then defaults"""

    def __init__(self, config_file: str | Path | None = None):
        # Load environment variables
        load_dotenv()

        config_file = config_file or os.getenv(CONFIG_FILE_ENV)
        self.config_file = Path(config_file) if config_file else None
        self.log_level = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
        self._load_settings()

    def _load_settings(self):
        """Load key=value settings from the config file if one was named"""
        self.file_settings: dict[str, str] = {}
        if self.config_file is None:
            return
        if not self.config_file.is_file():
            raise BadParamError(f"config file not found: {self.config_file}")
        for key, value in dotenv_values(self.config_file).items():
            if value is not None:
                self.file_settings[key.strip().lower().replace("-", "_")] = value
        logger.info(f"Loaded {len(self.file_settings)} settings from {self.config_file}")

    def get(self, key: str, default: Any = None) -> Any:
        """Get a config file value, or ``default`` when the file does not set it"""
        return self.file_settings.get(key, default)

    def resolve(self, cli_values: dict[str, Any] | None = None) -> RunConfig:
        """Build the run configuration; ``None`` CLI values fall through to the file"""
        merged: dict[str, Any] = dict(self.file_settings)
        merged.update({k: v for k, v in (cli_values or {}).items() if v is not None})
        try:
            return RunConfig.model_validate(merged)
        except ValidationError as e:
            problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())
            raise BadParamError(f"invalid configuration: {problems}") from e
