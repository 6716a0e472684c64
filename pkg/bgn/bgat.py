"""Binarized graph attention network

Forward pass per head ``k`` of a layer, over the edges (i, j) of the
self-looped graph:

    z     = h_in @ W_k                    (W_k binarized when the level has ``w``)
    e_ij  = a_k . [z_i || z_j]            (or z_i . z_j / sqrt(d) for dot scoring)
    s_ij  = softmax over j in N(i) of e_ij
    alpha = s, or B'(s - mean_i s) when the level has ``c``
    p_i   = sum_j alpha_ij z_j
    h_k   = B(balance(p)) if the level has ``e``, else elu(p)

Hidden layers concatenate their heads; the output layer averages its heads
into logits and applies a softmax. Gradients are derived by hand; every
binarization node is crossed with the configured estimator.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .binarize import (
    ReinforceState,
    balance_backward,
    reinforce_update_and_estimate,
    sign_det,
    sign_stoch,
    ste_backward,
)
from .bitlinalg import (
    BitMatrix,
    DenseMatrix,
    RowGroups,
    TernaryMatrix,
    bit_matmul,
    grouped_masked_matmul,
    grouped_matmul,
    pack,
    ternary_segment_sum,
)
from .errors import BadParamError, IndexOutOfRangeError, ShapeMismatchError, StaleCacheError
from .graph import Graph
from .rng import RngStream

logger = logging.getLogger(__name__)

FLOAT_BITS = 64


class Level(str, Enum):
    """Which tensors are binarized: weights, embeddings, attention coefficients"""

    NONE = "none"
    W = "w"
    E = "e"
    WE = "we"
    WEC = "wec"

    @property
    def weights(self) -> bool:
        return self in (Level.W, Level.WE, Level.WEC)

    @property
    def embeddings(self) -> bool:
        return self in (Level.E, Level.WE, Level.WEC)

    @property
    def coefficients(self) -> bool:
        return self is Level.WEC


class Estimator(str, Enum):
    STE = "ste"
    REINFORCE = "reinforce"


class Scoring(str, Enum):
    ADDITIVE = "additive"
    DOT = "dot"


class LogitScale(str, Enum):
    UNIT = "unit"
    INV_SQRT_DIM = "inv_sqrt_dim"


@dataclass(frozen=True)
class BgnConfig:
    """Model shape and binarization settings"""

    in_dim: int
    n_classes: int
    n_layers: int = 2
    heads: int = 8
    d_head: int = 8
    level: Level = Level.NONE
    estimator: Estimator = Estimator.STE
    scoring: Scoring = Scoring.ADDITIVE
    center_coefficients: bool = True
    logit_scale: LogitScale = LogitScale.INV_SQRT_DIM
    balance: bool = False
    output_heads: int = 1
    real_output_layer: bool = False
    weight_clip: float | None = 1.0
    activation_clip: float | None = None
    reinforce_decay: float = 0.99

    def __post_init__(self):
        for name, enum in (("level", Level), ("estimator", Estimator), ("scoring", Scoring), ("logit_scale", LogitScale)):
            object.__setattr__(self, name, enum(getattr(self, name)))
        for name in ("in_dim", "n_classes", "n_layers", "heads", "d_head", "output_heads"):
            if getattr(self, name) < 1:
                raise BadParamError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.estimator is Estimator.REINFORCE and self.level is Level.NONE:
            raise BadParamError("the REINFORCE estimator needs a binarized level")
        for name in ("weight_clip", "activation_clip"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise BadParamError(f"{name} must be positive or None, got {value}")

    @property
    def hidden_width(self) -> int:
        return self.heads * self.d_head


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _segment_sum(values: np.ndarray, graph: Graph) -> np.ndarray:
    return np.add.reduceat(values, graph.csr_offsets[:-1], axis=0)


def glorot(rng: RngStream, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return np.clip((2.0 * rng.uniform(shape) - 1.0) * limit, -1.0, 1.0)


@dataclass
class AttentionHead:
    """Latent weights of one head; ``a`` is empty for dot scoring"""

    W: np.ndarray
    a: np.ndarray

    @property
    def d_out(self) -> int:
        return self.W.shape[1]


@dataclass
class _HeadCache:
    h_in: np.ndarray
    w_used: np.ndarray
    z: np.ndarray
    s: np.ndarray
    alpha: np.ndarray
    pre: np.ndarray
    out: np.ndarray


@dataclass
class ForwardCache:
    graph: Graph
    hidden: list[list[_HeadCache]]
    output: list[_HeadCache]
    logits: np.ndarray
    log_probs: np.ndarray


@dataclass
class _Mode:
    """Per-call switches threaded through the layers"""

    fast: bool = False
    training: bool = False
    rng: RngStream | None = None


def _sample_stream(mode: _Mode, key: str) -> RngStream:
    if mode.rng is None:
        raise BadParamError("stochastic binarization needs a sampling stream")
    return mode.rng.child(zlib.crc32(key.encode()))


class BgatLayer:
    """One multi-head attention layer (hidden, or the output layer)"""

    def __init__(self, config: BgnConfig, in_dim: int, n_heads: int, d_out: int, *, is_output: bool, index: int, rng: RngStream):
        self.config = config
        self.in_dim = in_dim
        self.is_output = is_output
        self.index = index
        # only the first layer reads real node features
        self.input_binary = config.level.embeddings and index > 0
        self.binarize_weights = config.level.weights and not (is_output and config.real_output_layer)
        a_len = 2 * d_out if config.scoring is Scoring.ADDITIVE else 0
        self.heads = [
            AttentionHead(glorot(rng, in_dim, d_out, (in_dim, d_out)), glorot(rng, a_len, 1, (a_len,)) if a_len else np.zeros(0))
            for _ in range(n_heads)
        ]

    @property
    def prefix(self) -> str:
        return "output" if self.is_output else f"layers.{self.index}"

    @property
    def out_width(self) -> int:
        return self.heads[0].d_out if self.is_output else sum(h.d_out for h in self.heads)

    def weight_views(self) -> list[BitMatrix]:
        """Binary views of the latent weights, re-derived on every call"""
        return [pack(sign_det(head.W)) for head in self.heads]

    def _effective_weights(self, head: AttentionHead, key: str, mode: _Mode) -> np.ndarray:
        if not self.binarize_weights:
            return head.W
        if mode.training and self.config.estimator is Estimator.REINFORCE:
            return sign_stoch(head.W, _sample_stream(mode, key))
        return sign_det(head.W)

    def _transform(self, h_in: np.ndarray, w_used: np.ndarray, graph: Graph, mode: _Mode) -> np.ndarray:
        if not self.binarize_weights:
            return h_in @ w_used
        if self.input_binary:
            return bit_matmul(pack(h_in), pack(w_used)) if mode.fast else h_in @ w_used
        # both paths sum the same groups in the same order
        groups = graph.feature_groups if h_in is graph.features else RowGroups.from_dense(h_in)
        if mode.fast:
            return grouped_masked_matmul(groups, pack(w_used))
        return grouped_matmul(groups, w_used)

    def _scores(self, head: AttentionHead, z: np.ndarray, graph: Graph) -> np.ndarray:
        rows, cols = graph.edge_rows, graph.csr_targets
        if self.config.scoring is Scoring.DOT:
            return np.einsum("ed,ed->e", z[rows], z[cols]) / math.sqrt(z.shape[1])
        d = z.shape[1]
        return (z @ head.a[:d])[rows] + (z @ head.a[d:])[cols]

    def _coefficients(self, e: np.ndarray, graph: Graph) -> tuple[np.ndarray, np.ndarray]:
        """Softmax over each neighborhood, and the coefficients actually used"""
        rows, starts = graph.edge_rows, graph.csr_offsets[:-1]
        u = np.exp(e - np.maximum.reduceat(e, starts)[rows])
        total = np.add.reduceat(u, starts)
        s = u / total[rows]
        if not self.config.level.coefficients:
            return s, s
        if self.config.center_coefficients:
            # sign(s_ij - 1/deg_i) evaluated without dividing, so ties stay exact
            alpha = np.sign(u * graph.degrees[rows] - total[rows]) + 0.0
        else:
            alpha = np.sign(s) + 0.0
        empty = np.add.reduceat(np.abs(alpha), starts) == 0
        alpha[empty[rows]] = 1.0
        return s, alpha

    def _aggregate(self, alpha: np.ndarray, z: np.ndarray, graph: Graph, mode: _Mode) -> np.ndarray:
        if mode.fast and self.config.level.coefficients:
            return ternary_segment_sum(graph.csr_offsets, graph.csr_targets, alpha, z)
        return _segment_sum(alpha[:, None] * z[graph.csr_targets], graph)

    def _activate(self, p: np.ndarray, key: str, mode: _Mode) -> tuple[np.ndarray, np.ndarray]:
        if self.is_output:
            return p, p
        if not self.config.level.embeddings:
            return p, elu(p)
        pre = p - p.mean(axis=1, keepdims=True) if self.config.balance else p
        if mode.training and self.config.estimator is Estimator.REINFORCE:
            return pre, sign_stoch(pre, _sample_stream(mode, key))
        return pre, sign_det(pre)

    def head_forward(self, k: int, h_in: np.ndarray, graph: Graph, mode: _Mode | None = None) -> _HeadCache:
        mode = mode or _Mode()
        head = self.heads[k]
        key = f"{self.prefix}.heads.{k}"
        w_used = self._effective_weights(head, f"{key}.W", mode)
        z = self._transform(h_in, w_used, graph, mode)
        s, alpha = self._coefficients(self._scores(head, z, graph), graph)
        p = self._aggregate(alpha, z, graph, mode)
        pre, out = self._activate(p, f"{key}.h", mode)
        return _HeadCache(h_in, w_used, z, s, alpha, pre, out)

    def forward(self, h_in: np.ndarray, graph: Graph, mode: _Mode, workers: int = 1) -> list[_HeadCache]:
        if h_in.shape != (graph.n_nodes, self.in_dim):
            raise ShapeMismatchError(f"layer expects input of shape {(graph.n_nodes, self.in_dim)}, got {h_in.shape}")
        if workers > 1 and len(self.heads) > 1:
            # heads read the shared input and write disjoint outputs
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda k: self.head_forward(k, h_in, graph, mode), range(len(self.heads))))
        return [self.head_forward(k, h_in, graph, mode) for k in range(len(self.heads))]

    def attention_coefficients(self, h_in: np.ndarray, graph: Graph) -> list[np.ndarray | TernaryMatrix]:
        """Per head: real coefficients per stored edge, or a TernaryMatrix at level wec"""
        coefficients: list[np.ndarray | TernaryMatrix] = []
        for k in range(len(self.heads)):
            cache = self.head_forward(k, h_in, graph, _Mode())
            if self.config.level.coefficients:
                n = graph.n_nodes
                coefficients.append(TernaryMatrix.from_edges(graph.edge_rows, graph.csr_targets, cache.alpha, (n, n)))
            else:
                coefficients.append(cache.alpha)
        return coefficients

    def head_backward(
        self,
        k: int,
        cache: _HeadCache,
        g_out: np.ndarray,
        graph: Graph,
        loss: float,
        states: dict[str, ReinforceState],
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Gradient w.r.t. the head input plus latent parameter gradients"""
        cfg = self.config
        head = self.heads[k]
        key = f"{self.prefix}.heads.{k}"
        rows, cols, rev = graph.edge_rows, graph.csr_targets, graph.reverse_edges
        reinforce = cfg.estimator is Estimator.REINFORCE

        if self.is_output:
            g_p = g_out
        elif cfg.level.embeddings:
            if reinforce:
                g_pre = reinforce_update_and_estimate(cache.pre, cache.out, loss, states.setdefault(f"{key}.h", ReinforceState(decay=cfg.reinforce_decay)))
            else:
                g_pre = ste_backward(g_out, cache.pre, cfg.activation_clip)
            g_p = balance_backward(g_pre) if cfg.balance else g_pre
        else:
            g_p = g_out * elu_grad(cache.pre)

        z, alpha, s = cache.z, cache.alpha, cache.s
        g_alpha = np.einsum("ed,ed->e", g_p[rows], z[cols])
        g_z = _segment_sum(alpha[rev][:, None] * g_p[cols], graph)

        if cfg.level.coefficients:
            g_s = g_alpha
            if cfg.center_coefficients:
                g_s = g_s - (_segment_sum(g_s, graph) / graph.degrees)[rows]
        else:
            g_s = g_alpha
        g_e = s * (g_s - _segment_sum(s * g_s, graph)[rows])

        grads: dict[str, np.ndarray] = {}
        if cfg.scoring is Scoring.ADDITIVE:
            d = z.shape[1]
            by_row = _segment_sum(g_e, graph)
            by_col = _segment_sum(g_e[rev], graph)
            grads[f"{key}.a"] = np.concatenate([z.T @ by_row, z.T @ by_col])
            g_z += np.outer(by_row, head.a[:d]) + np.outer(by_col, head.a[d:])
        else:
            scale = 1.0 / math.sqrt(z.shape[1])
            g_z += scale * (_segment_sum(g_e[:, None] * z[cols], graph) + _segment_sum(g_e[rev][:, None] * z[cols], graph))

        g_w_used = cache.h_in.T @ g_z
        g_h_in = g_z @ cache.w_used.T
        if not self.binarize_weights:
            grads[f"{key}.W"] = g_w_used
        elif reinforce:
            grads[f"{key}.W"] = reinforce_update_and_estimate(
                head.W, cache.w_used, loss, states.setdefault(f"{key}.W", ReinforceState(decay=cfg.reinforce_decay))
            )
        else:
            grads[f"{key}.W"] = ste_backward(g_w_used, head.W, cfg.weight_clip)
        return g_h_in, grads


class BgnModel:
    """Stack of binarized attention layers ending in a softmax classifier"""

    def __init__(self, config: BgnConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        init_rng = RngStream(seed).child(0)
        self.layers: list[BgatLayer] = []
        in_dim = config.in_dim
        for index in range(config.n_layers - 1):
            layer = BgatLayer(config, in_dim, config.heads, config.d_head, is_output=False, index=index, rng=init_rng.child(index))
            self.layers.append(layer)
            in_dim = layer.out_width
        self.output = BgatLayer(
            config, in_dim, config.output_heads, config.n_classes, is_output=True, index=config.n_layers - 1, rng=init_rng.child(config.n_layers)
        )
        self.reinforce_states: dict[str, ReinforceState] = {}
        self._sample_rng = RngStream(seed).child(1)
        self._step = 0
        self._cache: ForwardCache | None = None

    def reseed(self, seed: int) -> None:
        """Restart the stream that drives stochastic binarization"""
        self._sample_rng = RngStream(seed).child(1)
        self._step = 0

    @property
    def all_layers(self) -> list[BgatLayer]:
        return [*self.layers, self.output]

    def parameters(self) -> dict[str, np.ndarray]:
        """Latent parameters by dotted name; arrays are live references"""
        params: dict[str, np.ndarray] = {}
        for layer in self.all_layers:
            for k, head in enumerate(layer.heads):
                params[f"{layer.prefix}.heads.{k}.W"] = head.W
                if head.a.size:
                    params[f"{layer.prefix}.heads.{k}.a"] = head.a
        return params

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, value in values.items():
            if name not in params:
                raise KeyError(f"unknown parameter {name}")
            if params[name].shape != np.shape(value):
                raise ShapeMismatchError(f"{name}: shape {np.shape(value)} != {params[name].shape}")
            params[name][...] = value
        self._cache = None

    def invalidate_cache(self) -> None:
        self._cache = None

    @property
    def logit_scale(self) -> float:
        if self.config.logit_scale is LogitScale.UNIT:
            return 1.0
        return 1.0 / math.sqrt(self.output.in_dim)

    def _run(self, graph: Graph, mode: _Mode, workers: int = 1) -> ForwardCache:
        if graph.n_features != self.config.in_dim:
            raise ShapeMismatchError(f"graph has {graph.n_features} features, model expects {self.config.in_dim}")
        h = graph.features
        hidden: list[list[_HeadCache]] = []
        for layer in self.layers:
            heads = layer.forward(h, graph, mode, workers)
            hidden.append(heads)
            h = np.concatenate([c.out for c in heads], axis=1)
        output = self.output.forward(h, graph, mode, workers)
        logits = self.logit_scale * np.mean([c.out for c in output], axis=0)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return ForwardCache(graph, hidden, output, logits, log_probs)

    def forward(self, graph: Graph, *, fast: bool = False, training: bool = True, cache: bool = True) -> np.ndarray:
        """Full-graph forward; with ``cache`` keeps intermediates for :meth:`backward`"""
        rng = None
        if training and self.config.estimator is Estimator.REINFORCE:
            rng = self._sample_rng.child(self._step)
            self._step += 1
        result = self._run(graph, _Mode(fast=fast, training=training, rng=rng))
        self._cache = result if cache else None
        return np.exp(result.log_probs)

    def predict(self, graph: Graph, *, fast: bool = True, workers: int = 1) -> np.ndarray:
        """Class probabilities with deterministic binarization; leaves no cache"""
        return np.exp(self._run(graph, _Mode(fast=fast), workers).log_probs)

    def logits(self, graph: Graph, *, fast: bool = False) -> np.ndarray:
        return self._run(graph, _Mode(fast=fast)).logits

    def embeddings(self, graph: Graph, *, fast: bool = True) -> np.ndarray:
        """Output of the last hidden layer (the node representations)"""
        cache = self._run(graph, _Mode(fast=fast))
        if not cache.hidden:
            return graph.features
        return np.concatenate([c.out for c in cache.hidden[-1]], axis=1)

    def loss(self, graph: Graph, ids: np.ndarray) -> float:
        log_probs = self._run(graph, _Mode()).log_probs
        return float(-log_probs[ids, graph.labels[ids]].sum())

    def backward(self, graph: Graph, ids: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Training loss over ``ids`` and gradients for every latent parameter

        Consumes the cache of the preceding :meth:`forward`.
        """
        cache = self._cache
        if cache is None or cache.graph is not graph:
            raise StaleCacheError("backward needs a forward pass on the same graph first")
        self._cache = None
        ids = np.asarray(ids, dtype=np.int64)
        labels = graph.labels[ids]
        loss = float(-cache.log_probs[ids, labels].sum())

        g_logits = np.zeros_like(cache.logits)
        g_logits[ids] = np.exp(cache.log_probs[ids])
        g_logits[ids, labels] -= 1.0
        g_head = g_logits * (self.logit_scale / len(cache.output))

        grads: dict[str, np.ndarray] = {}
        g_h = np.zeros((graph.n_nodes, self.output.in_dim))
        for k, head_cache in enumerate(cache.output):
            g_in, head_grads = self.output.head_backward(k, head_cache, g_head, graph, loss, self.reinforce_states)
            g_h += g_in
            grads.update(head_grads)
        for layer, head_caches in zip(reversed(self.layers), reversed(cache.hidden), strict=True):
            g_prev = np.zeros((graph.n_nodes, layer.in_dim))
            offset = 0
            for k, head_cache in enumerate(head_caches):
                width = head_cache.out.shape[1]
                g_in, head_grads = layer.head_backward(k, head_cache, g_h[:, offset : offset + width], graph, loss, self.reinforce_states)
                g_prev += g_in
                grads.update(head_grads)
                offset += width
            g_h = g_prev
        return loss, grads

    def weight_bits(self) -> int:
        return sum(
            head.W.size * (1 if layer.binarize_weights else FLOAT_BITS) for layer in self.all_layers for head in layer.heads
        )

    def scoring_bits(self) -> int:
        return sum(head.a.size * FLOAT_BITS for layer in self.all_layers for head in layer.heads)

    def parameter_bits(self) -> int:
        return self.weight_bits() + self.scoring_bits()

    def embedding_bits_per_node(self) -> int:
        if not self.layers:
            return self.config.in_dim * FLOAT_BITS
        return self.layers[-1].out_width * (1 if self.config.level.embeddings else FLOAT_BITS)


def attention_coefficients(layer: BgatLayer, h_in: np.ndarray, graph: Graph) -> list[np.ndarray | TernaryMatrix]:
    return layer.attention_coefficients(h_in, graph)


def layer_forward(layer: BgatLayer, h_in: np.ndarray, graph: Graph, *, fast: bool = False) -> np.ndarray:
    """Concatenated head outputs of a hidden layer"""
    return np.concatenate([c.out for c in layer.forward(h_in, graph, _Mode(fast=fast))], axis=1)


def output_forward(model: BgnModel, h_last: np.ndarray, graph: Graph, *, fast: bool = False) -> np.ndarray:
    """Class probabilities from the last hidden representations"""
    heads = model.output.forward(h_last, graph, _Mode(fast=fast))
    logits = model.logit_scale * np.mean([c.out for c in heads], axis=0)
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    return probs / probs.sum(axis=1, keepdims=True)


def loss_and_accuracy(probs: np.ndarray, labels: np.ndarray, ids) -> tuple[float, float]:
    """Summed cross-entropy and argmax accuracy over ``ids``"""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= probs.shape[0]):
        raise IndexOutOfRangeError(f"node ids must lie in [0, {probs.shape[0]})")
    if ids.size == 0:
        return 0.0, 1.0
    picked = probs[ids, labels[ids]]
    loss = float(-np.log(np.maximum(picked, np.finfo(np.float64).tiny)).sum())
    acc = float(np.mean(np.argmax(probs[ids], axis=1) == labels[ids]))
    return loss, acc


def backward(model: BgnModel, graph: Graph, ids) -> dict[str, np.ndarray]:
    return model.backward(graph, ids)[1]


@dataclass
class MemoryReport:
    weight_bits: int
    scoring_bits: int
    embedding_bits_per_node: int
    parameter_bits: int = field(init=False)

    def __post_init__(self):
        self.parameter_bits = self.weight_bits + self.scoring_bits


def memory_report(model: BgnModel) -> MemoryReport:
    return MemoryReport(model.weight_bits(), model.scoring_bits(), model.embedding_bits_per_node())
