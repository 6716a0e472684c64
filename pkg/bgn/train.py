"""Optimizer, full-graph training loop and evaluation"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .bgat import BgnModel, loss_and_accuracy
from .errors import BadParamError, DivergedLossError
from .graph import Graph, Split

logger = logging.getLogger(__name__)

DEFAULT_LR = 5e-3
DEFAULT_EPOCHS = 300
DEFAULT_PATIENCE = 30
LATENT_CLIP = 1.0
HISTORY_COLUMNS = ["epoch", "loss", "train_acc", "val_acc", "test_acc"]


@dataclass
class OptState:
    """Adam moments per parameter name"""

    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class AdamOptimizer:
    """Adaptive-moment optimizer updating parameter arrays in place"""

    def __init__(self, lr: float = DEFAULT_LR, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise BadParamError(f"learning rate must be nonnegative, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise BadParamError("moment decays must lie in [0, 1)")
        self.state = OptState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        st = self.state
        st.step += 1
        for name, grad in grads.items():
            param = params[name]
            if grad.shape != param.shape:
                raise BadParamError(f"{name}: gradient shape {grad.shape} != parameter shape {param.shape}")
            m = st.m.setdefault(name, np.zeros_like(param))
            v = st.v.setdefault(name, np.zeros_like(param))
            m *= st.beta1
            m += (1.0 - st.beta1) * grad
            v *= st.beta2
            v += (1.0 - st.beta2) * grad**2
            m_hat = m / (1.0 - st.beta1**st.step)
            v_hat = v / (1.0 - st.beta2**st.step)
            param -= st.lr * m_hat / (np.sqrt(v_hat) + st.eps)


def clip_latent_weights(model: BgnModel, bound: float = LATENT_CLIP) -> None:
    """Keep latent weight matrices inside [-bound, bound]; scoring vectors are left free"""
    for layer in model.all_layers:
        for head in layer.heads:
            np.clip(head.W, -bound, bound, out=head.W)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    test_acc: float


@dataclass
class TrainResult:
    model: BgnModel
    history: list[EpochRecord]
    best_epoch: int
    test_acc: float
    stopped_early: bool = False

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.history], columns=HISTORY_COLUMNS)

    def write_history(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.history_frame().to_csv(path, index=False)


def evaluate(model: BgnModel, graph: Graph, ids, *, fast: bool = False) -> float:
    """Accuracy over ``ids`` with deterministic binarization"""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        logger.warning("Evaluating on an empty id set; accuracy is vacuously 1.0")
        return 1.0
    probs = model.predict(graph, fast=fast)
    return loss_and_accuracy(probs, graph.labels, ids)[1]


def _accuracy(probs: np.ndarray, graph: Graph, ids: np.ndarray) -> float:
    return loss_and_accuracy(probs, graph.labels, ids)[1] if ids.size else math.nan


def train(
    model: BgnModel,
    graph: Graph,
    split: Split,
    *,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    seed: int = 0,
    patience: int | None = DEFAULT_PATIENCE,
    log_every: int = 20,
) -> TrainResult:
    """Full-graph training with Adam and latent clipping

    Early stopping on validation accuracy applies only when the split has
    validation ids; the best-validation parameters are restored at the end.
    """
    if epochs < 0:
        raise BadParamError(f"epochs must be nonnegative, got {epochs}")
    model.reseed(seed)
    optimizer = AdamOptimizer(lr=lr)
    params = model.parameters()
    has_val = split.val_ids.size > 0
    history: list[EpochRecord] = []
    best_val, best_epoch, best_params = -1.0, 0, None
    since_best = 0
    stopped_early = False

    for epoch in range(1, epochs + 1):
        model.forward(graph, fast=False, training=True)
        loss, grads = model.backward(graph, split.train_ids)
        if not math.isfinite(loss):
            raise DivergedLossError(f"training loss became {loss} at epoch {epoch}")
        optimizer.step(params, grads)
        clip_latent_weights(model)

        probs = model.predict(graph, fast=False)
        record = EpochRecord(
            epoch=epoch,
            loss=loss,
            train_acc=_accuracy(probs, graph, split.train_ids),
            val_acc=_accuracy(probs, graph, split.val_ids),
            test_acc=_accuracy(probs, graph, split.test_ids),
        )
        history.append(record)
        if log_every and (epoch % log_every == 0 or epoch == epochs):
            logger.info(
                f"epoch {epoch}: loss={loss:.4f} train_acc={record.train_acc:.3f} "
                f"val_acc={record.val_acc:.3f} test_acc={record.test_acc:.3f}"
            )

        if has_val:
            if record.val_acc > best_val:
                best_val, best_epoch, since_best = record.val_acc, epoch, 0
                best_params = {name: value.copy() for name, value in params.items()}
            else:
                since_best += 1
                if patience is not None and since_best >= patience:
                    logger.info(f"Early stop at epoch {epoch}; best validation accuracy {best_val:.3f} at epoch {best_epoch}")
                    stopped_early = True
                    break

    if best_params is not None:
        model.set_parameters(best_params)
    else:
        best_epoch = len(history)
    test_acc = _accuracy(model.predict(graph, fast=False), graph, split.test_ids)
    return TrainResult(model, history, best_epoch, test_acc, stopped_early)


@dataclass
class RunSummary:
    """Test accuracy over repeated seeded runs"""

    seeds: list[int]
    test_accs: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.test_accs)) if self.test_accs else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.test_accs)) if self.test_accs else math.nan


def train_runs(
    build: Callable[[int], BgnModel],
    graph: Graph,
    split: Split,
    seeds: list[int],
    **train_kwargs,
) -> tuple[list[TrainResult], RunSummary]:
    """Train a fresh model per seed; ``build(seed)`` creates the model"""
    results = [train(build(seed), graph, split, seed=seed, **train_kwargs) for seed in seeds]
    summary = RunSummary(list(seeds), [r.test_acc for r in results])
    logger.info(f"{len(seeds)} runs: test accuracy {summary.mean:.4f} +- {summary.std:.4f}")
    return results, summary
