"""Binarization functions, balance, and gradient estimators

The packed forms (``binarize_*``) produce :class:`BitMatrix` /
:class:`TernaryMatrix` values for storage and the fast kernels; the ``sign_*``
helpers return the same values as dense +-1 arrays for the training path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bitlinalg import BitMatrix, DenseMatrix, TernaryMatrix, as_dense, unpack
from .errors import NonFiniteError, ShapeMismatchError, UninitializedStateError
from .rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_REINFORCE_DECAY = 0.99


def sigmoid(h: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * h))


def sign_det(h: np.ndarray) -> np.ndarray:
    """+1 where h >= 0, -1 elsewhere"""
    return np.where(h >= 0, 1.0, -1.0)


def sign_stoch(h: np.ndarray, rng: RngStream) -> np.ndarray:
    """+1 with probability sigmoid(h), independently per entry"""
    return np.where(rng.uniform(h.shape) < sigmoid(h), 1.0, -1.0)


def sign_ternary(s: np.ndarray) -> np.ndarray:
    """Sign that keeps exact zeros at zero"""
    return np.sign(s) + 0.0


def binarize_det(h) -> BitMatrix:
    h = as_dense(h, "pre-activation")
    return BitMatrix.from_bool(h >= 0)


def binarize_stoch(h, rng: RngStream) -> BitMatrix:
    h = as_dense(h, "pre-activation")
    return BitMatrix.from_bool(rng.uniform(h.shape) < sigmoid(h))


def binarize_ternary(s) -> TernaryMatrix:
    s = as_dense(s, "coefficients")
    rows, cols = s.shape
    return TernaryMatrix(rows, cols, BitMatrix.from_bool(s > 0), BitMatrix.from_bool(s < 0))


def balance(h) -> DenseMatrix:
    """Subtract each row's mean so signs split roughly evenly"""
    h = as_dense(h, "pre-activation")
    if h.shape[1] < 1:
        raise ShapeMismatchError("balance needs at least one column")
    return h - h.mean(axis=1, keepdims=True)


def balance_backward(g: np.ndarray) -> np.ndarray:
    # mean subtraction is a symmetric projection, so it is its own transpose
    return g - g.mean(axis=1, keepdims=True)


def ste_backward(g_out, h, clip: float | None = None) -> DenseMatrix:
    """Straight-through gradient: identity, zeroed where |h| > clip when clipping"""
    g_out = np.asarray(g_out, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g_out.shape != h.shape:
        raise ShapeMismatchError(f"gradient shape {g_out.shape} != pre-activation shape {h.shape}")
    if clip is None:
        return g_out.copy()
    return np.where(np.abs(h) > clip, 0.0, g_out)


@dataclass
class ReinforceState:
    """Running numerator and denominator of the variance-minimizing baseline"""

    num_ema: float = 0.0
    den_ema: float = 0.0
    decay: float = DEFAULT_REINFORCE_DECAY
    updates: int = 0

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")

    @property
    def baseline(self) -> float:
        """c = E[s^2 L] / E[s^2]; zero before the first update"""
        if self.updates == 0:
            return 0.0
        if self.den_ema <= 0.0:
            raise UninitializedStateError("REINFORCE denominator is still zero after updates")
        c = self.num_ema / self.den_ema
        if not np.isfinite(c):
            raise NonFiniteError("REINFORCE baseline is not finite")
        return c

    def update(self, s2: float, loss: float) -> None:
        self.num_ema = self.decay * self.num_ema + (1.0 - self.decay) * s2 * loss
        self.den_ema = self.decay * self.den_ema + (1.0 - self.decay) * s2
        self.updates += 1


def reinforce_update_and_estimate(h, b, loss: float, state: ReinforceState) -> DenseMatrix:
    """Score-function gradient (b - sigmoid(h)) * (loss - c)

    ``c`` is read from ``state`` before this step's statistics are folded in,
    so the first call uses c = 0.
    """
    h = as_dense(h, "pre-activation")
    signs = unpack(b) if isinstance(b, BitMatrix) else np.asarray(b, dtype=np.float64)
    if signs.shape != h.shape:
        raise ShapeMismatchError(f"binary sample shape {signs.shape} != pre-activation shape {h.shape}")
    if not np.isfinite(loss):
        raise NonFiniteError(f"loss is not finite: {loss}")
    residual = signs - sigmoid(h)
    c = state.baseline
    state.update(float(np.mean(residual**2)), float(loss))
    return residual * (loss - c)
