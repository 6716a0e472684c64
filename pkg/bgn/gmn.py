"""Graph matching on synthetic edit triplets

A triplet is (G1, G2, G3): G1 is a binomial random graph, G2 and G3 are G1
with ``kp`` and ``kn`` edges substituted (``kp < kn``), so G2 should score
as more similar to G1 than G3 does.

The matcher encodes both graphs of a pair jointly. Node ``i`` starts from a
fixed random feature row shared by every graph of the same size (the edits
keep node labels) passed through a learned tanh encoder. Each propagation
round updates the real node states from ``[h, sum of neighbor states, h -
cross-graph attention readout]``; a gated mean over nodes gives the graph
vector, which is balanced and binarized into a code (binary mode) or
squashed with tanh (reference mode). Similarity is
``(c_a . c_b + D) / (2D)``, the Hamming similarity for +-1 codes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from .bench import time_call
from .bgat import glorot
from .binarize import balance_backward, sigmoid, sign_det, ste_backward
from .bitlinalg import BitMatrix, bit_matmul_rows, hamming_similarity, pack
from .errors import BadParamError, DivergedLossError, InfeasibleSubstitutionError, ShapeMismatchError
from .rng import RngStream
from .train import AdamOptimizer

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.1
DEFAULT_NODE_DIM = 32
DEFAULT_GRAPH_DIM = 128
DEFAULT_ROUNDS = 3
DEFAULT_BATCH = 8
DEFAULT_MATCH_LR = 3e-3
DEFAULT_VAL_TRIPLETS = 200
GMN_COLUMNS = ["n", "node_dim", "graph_dim", "mode", "pair_auc", "triplet_acc", "median_inference_seconds"]


@dataclass(frozen=True)
class TripletConfig:
    """Edit-triplet generator settings"""

    n: int = 20
    p: float = 0.2
    kp: int = 1
    kn: int = 2
    n_pairs: int = 1000
    n_triplets: int = 1000
    max_retries: int = 100

    def __post_init__(self):
        if self.n < 2:
            raise BadParamError(f"graphs need at least 2 nodes, got {self.n}")
        if not 0.0 < self.p < 1.0:
            raise BadParamError(f"edge probability must lie in (0, 1), got {self.p}")
        if self.kp < 1:
            raise BadParamError(f"kp must be at least 1, got {self.kp}")
        if self.kp >= self.kn:
            raise BadParamError(f"kp must be smaller than kn, got kp={self.kp} kn={self.kn}")
        for name in ("n_pairs", "n_triplets", "max_retries"):
            if getattr(self, name) < 1:
                raise BadParamError(f"{name} must be at least 1")


@dataclass(frozen=True, eq=False)
class EditGraph:
    """Simple undirected graph as sorted unique (u, v) pairs with u < v"""

    n_nodes: int
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (np.any(edges[:, 0] >= edges[:, 1]) or edges.min() < 0 or edges.max() >= self.n_nodes):
            raise BadParamError("edges must be (u, v) pairs with 0 <= u < v < n_nodes")
        keys = edges[:, 0] * self.n_nodes + edges[:, 1]
        if np.unique(keys).size != keys.size:
            raise BadParamError("duplicate edge")
        object.__setattr__(self, "edges", edges[np.argsort(keys)])

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def keys(self) -> np.ndarray:
        return self.edges[:, 0] * self.n_nodes + self.edges[:, 1]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n_nodes, self.n_nodes))
        adj[self.edges[:, 0], self.edges[:, 1]] = 1.0
        adj[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return adj

    def absent_keys(self) -> np.ndarray:
        iu, ju = np.triu_indices(self.n_nodes, 1)
        return np.setdiff1d(iu * self.n_nodes + ju, self.keys())

    def same_as(self, other: EditGraph) -> bool:
        return self.n_nodes == other.n_nodes and np.array_equal(self.edges, other.edges)


def _from_keys(n: int, keys: np.ndarray) -> EditGraph:
    u, v = np.divmod(np.sort(keys), n)
    return EditGraph(n, np.stack([u, v], axis=1))


def binomial_graph(n: int, p: float, rng: RngStream) -> EditGraph:
    """Each of the n(n-1)/2 possible edges present independently with probability p"""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.uniform(iu.size) < p
    return EditGraph(n, np.stack([iu[keep], ju[keep]], axis=1))


def substitute_edges(graph: EditGraph, k: int, rng: RngStream) -> EditGraph:
    """Remove ``k`` existing edges and add ``k`` edges that were absent"""
    present, absent = graph.keys(), graph.absent_keys()
    if present.size < k or absent.size < k:
        raise InfeasibleSubstitutionError(
            f"cannot substitute {k} edges: graph has {present.size} edges and {absent.size} free pairs"
        )
    removed = rng.choice(present, k)
    added = rng.choice(absent, k)
    return _from_keys(graph.n_nodes, np.concatenate([np.setdiff1d(present, removed), added]))


def gen_triplet(cfg: TripletConfig, rng: RngStream) -> tuple[EditGraph, EditGraph, EditGraph]:
    """Sample (G1, G2, G3), resampling G1 until it can take ``kn`` substitutions"""
    for _ in range(cfg.max_retries):
        g1 = binomial_graph(cfg.n, cfg.p, rng)
        if g1.n_edges >= cfg.kn and g1.absent_keys().size >= cfg.kn:
            return g1, substitute_edges(g1, cfg.kp, rng), substitute_edges(g1, cfg.kn, rng)
    raise InfeasibleSubstitutionError(
        f"no binomial graph with n={cfg.n}, p={cfg.p} admitted {cfg.kn} substitutions in {cfg.max_retries} draws"
    )


class MatchMode(str, Enum):
    BINARY = "binary"
    REFERENCE = "reference"


@dataclass(frozen=True)
class MatchConfig:
    node_dim: int = DEFAULT_NODE_DIM
    graph_dim: int = DEFAULT_GRAPH_DIM
    rounds: int = DEFAULT_ROUNDS
    mode: MatchMode = MatchMode.BINARY
    balance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", MatchMode(self.mode))
        for name in ("node_dim", "graph_dim", "rounds"):
            if getattr(self, name) < 1:
                raise BadParamError(f"{name} must be at least 1, got {getattr(self, name)}")


def softmax_rows(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _softmax_rows_backward(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    return p * (g - (p * g).sum(axis=1, keepdims=True))


def cross_attention(h_a: np.ndarray, h_b: np.ndarray, *, fast: bool = False) -> np.ndarray:
    """Row-softmax of the scaled pairwise dots between the node states of two graphs

    With ``fast`` the dots of +-1 states go through the xnor/popcount kernel.
    """
    if h_a.shape[1] != h_b.shape[1]:
        raise ShapeMismatchError(f"node state widths differ: {h_a.shape[1]} vs {h_b.shape[1]}")
    return softmax_rows(_pair_scores(h_a, h_b, fast))


def _pair_scores(h_a: np.ndarray, h_b: np.ndarray, fast: bool) -> np.ndarray:
    scale = 1.0 / math.sqrt(h_a.shape[1])
    if fast:
        return bit_matmul_rows(pack(h_a), pack(h_b)) * scale
    return (h_a @ h_b.T) * scale


@dataclass
class _Act:
    pre: np.ndarray
    out: np.ndarray


@dataclass
class _RoundCache:
    h_a: np.ndarray
    h_b: np.ndarray
    c_a: np.ndarray
    c_b: np.ndarray
    p_ab: np.ndarray
    p_ba: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray
    out_a: np.ndarray
    out_b: np.ndarray


@dataclass
class _ReadoutCache:
    h: np.ndarray
    gate: np.ndarray
    value: np.ndarray
    act: _Act


@dataclass
class PairCache:
    """Forward intermediates of one pair; codes are dense +-1 (binary) or tanh values"""

    adj_a: np.ndarray
    adj_b: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray
    h0_a: np.ndarray
    h0_b: np.ndarray
    rounds: list[_RoundCache]
    read_a: _ReadoutCache
    read_b: _ReadoutCache
    code_a: np.ndarray
    code_b: np.ndarray
    similarity: float


class MatchModel:
    """Cross-graph attention matcher producing binary or real graph codes

    Node states stay real through every round in both modes. Binary mode
    scores cross-graph attention on the signs of the states (xnor/popcount
    on the fast path) and emits balanced +-1 graph codes.
    """

    def __init__(self, config: MatchConfig | None = None, seed: int = 0):
        self.config = config or MatchConfig()
        self.seed = seed
        d, dg = self.config.node_dim, self.config.graph_dim
        rng = RngStream(seed).child(2)
        self.params: dict[str, np.ndarray] = {
            "encoder.W": glorot(rng.child(0), d, d, (d, d)),
            "encoder.b": np.zeros(d),
            "propagate.W": glorot(rng.child(1), 3 * d, d, (3 * d, d)),
            "propagate.b": np.zeros(d),
            "gate.W": glorot(rng.child(2), d, dg, (d, dg)),
            "gate.b": np.zeros(dg),
            "value.W": glorot(rng.child(3), d, dg, (d, dg)),
            "value.b": np.zeros(dg),
        }
        self._inputs: dict[int, np.ndarray] = {}

    @property
    def binary(self) -> bool:
        return self.config.mode is MatchMode.BINARY

    def node_inputs(self, n: int) -> np.ndarray:
        """Fixed input features of nodes 0..n-1, shared by every graph of that size"""
        if n not in self._inputs:
            self._inputs[n] = RngStream(self.seed).child(4).child(n).normal((n, self.config.node_dim))
        return self._inputs[n]

    def _node_codes(self, h: np.ndarray) -> np.ndarray:
        return sign_det(h) if self.binary else h

    def _node_codes_backward(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        return ste_backward(g, h) if self.binary else g

    def _graph_code(self, u: np.ndarray) -> _Act:
        if not self.binary:
            return _Act(u, np.tanh(u))
        pre = u - u.mean(axis=-1, keepdims=True) if self.config.balance else u
        return _Act(pre, sign_det(pre))

    def _graph_code_backward(self, g: np.ndarray, act: _Act) -> np.ndarray:
        if not self.binary:
            return g * (1.0 - act.out**2)
        g_pre = ste_backward(g, act.pre)
        return balance_backward(g_pre) if self.config.balance else g_pre

    def _round(self, h_a, h_b, adj_a, adj_b, fast: bool) -> _RoundCache:
        c_a, c_b = self._node_codes(h_a), self._node_codes(h_b)
        s = _pair_scores(c_a, c_b, fast and self.binary)
        p_ab, p_ba = softmax_rows(s), softmax_rows(s.T)
        x_a = np.concatenate([h_a, adj_a @ h_a, h_a - p_ab @ h_b], axis=1)
        x_b = np.concatenate([h_b, adj_b @ h_b, h_b - p_ba @ h_a], axis=1)
        w, b = self.params["propagate.W"], self.params["propagate.b"]
        return _RoundCache(h_a, h_b, c_a, c_b, p_ab, p_ba, x_a, x_b, np.tanh(x_a @ w + b), np.tanh(x_b @ w + b))

    def _readout(self, h: np.ndarray) -> _ReadoutCache:
        gate = sigmoid(h @ self.params["gate.W"] + self.params["gate.b"])
        value = h @ self.params["value.W"] + self.params["value.b"]
        pooled = (gate * value).mean(axis=0)
        return _ReadoutCache(h, gate, value, self._graph_code(pooled[None, :]))

    def _encode(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.params["encoder.W"] + self.params["encoder.b"])

    def forward_pair(self, g_a: EditGraph, g_b: EditGraph, *, fast: bool = False) -> PairCache:
        if g_a.n_nodes < 1 or g_b.n_nodes < 1:
            raise ShapeMismatchError("both graphs need at least one node")
        adj_a, adj_b = g_a.adjacency(), g_b.adjacency()
        x_a, x_b = self.node_inputs(g_a.n_nodes), self.node_inputs(g_b.n_nodes)
        h0_a, h0_b = self._encode(x_a), self._encode(x_b)
        h_a, h_b = h0_a, h0_b
        rounds = []
        for _ in range(self.config.rounds):
            rc = self._round(h_a, h_b, adj_a, adj_b, fast)
            rounds.append(rc)
            h_a, h_b = rc.out_a, rc.out_b
        read_a, read_b = self._readout(h_a), self._readout(h_b)
        code_a, code_b = read_a.act.out[0], read_b.act.out[0]
        dg = self.config.graph_dim
        sim = float((code_a @ code_b + dg) / (2 * dg))
        return PairCache(adj_a, adj_b, x_a, x_b, h0_a, h0_b, rounds, read_a, read_b, code_a, code_b, sim)

    def similarity(self, g_a: EditGraph, g_b: EditGraph, *, fast: bool = True) -> float:
        return self.forward_pair(g_a, g_b, fast=fast).similarity

    def _readout_backward(self, rc: _ReadoutCache, g_code: np.ndarray, grads: dict[str, np.ndarray]) -> np.ndarray:
        g_pooled = self._graph_code_backward(g_code[None, :], rc.act)
        g_prod = np.broadcast_to(g_pooled / rc.h.shape[0], rc.value.shape)
        g_value = rc.gate * g_prod
        g_gate_pre = rc.value * g_prod * rc.gate * (1.0 - rc.gate)
        grads["value.W"] += rc.h.T @ g_value
        grads["value.b"] += g_value.sum(axis=0)
        grads["gate.W"] += rc.h.T @ g_gate_pre
        grads["gate.b"] += g_gate_pre.sum(axis=0)
        return g_value @ self.params["value.W"].T + g_gate_pre @ self.params["gate.W"].T

    def _round_backward(self, rc: _RoundCache, adj_a, adj_b, g_out_a, g_out_b, grads) -> tuple[np.ndarray, np.ndarray]:
        w = self.params["propagate.W"]
        d = rc.h_a.shape[1]
        g_u_a = g_out_a * (1.0 - rc.out_a**2)
        g_u_b = g_out_b * (1.0 - rc.out_b**2)
        grads["propagate.W"] += rc.x_a.T @ g_u_a + rc.x_b.T @ g_u_b
        grads["propagate.b"] += g_u_a.sum(axis=0) + g_u_b.sum(axis=0)
        g_x_a, g_x_b = g_u_a @ w.T, g_u_b @ w.T
        g_self_a, g_msg_a, g_mu_a = g_x_a[:, :d], g_x_a[:, d : 2 * d], g_x_a[:, 2 * d :]
        g_self_b, g_msg_b, g_mu_b = g_x_b[:, :d], g_x_b[:, d : 2 * d], g_x_b[:, 2 * d :]

        g_h_a = g_self_a + adj_a.T @ g_msg_a + g_mu_a - rc.p_ba.T @ g_mu_b
        g_h_b = g_self_b + adj_b.T @ g_msg_b + g_mu_b - rc.p_ab.T @ g_mu_a
        g_s = _softmax_rows_backward(rc.p_ab, -g_mu_a @ rc.h_b.T)
        g_s += _softmax_rows_backward(rc.p_ba, -g_mu_b @ rc.h_a.T).T
        scale = 1.0 / math.sqrt(d)
        g_h_a += self._node_codes_backward(scale * (g_s @ rc.c_b), rc.h_a)
        g_h_b += self._node_codes_backward(scale * (g_s.T @ rc.c_a), rc.h_b)
        return g_h_a, g_h_b

    def backward_pair(self, cache: PairCache, g_sim: float) -> dict[str, np.ndarray]:
        """Gradients of ``g_sim * similarity`` for every parameter"""
        grads = {name: np.zeros_like(value) for name, value in self.params.items()}
        dg = self.config.graph_dim
        g_h_a = self._readout_backward(cache.read_a, g_sim * cache.code_b / (2 * dg), grads)
        g_h_b = self._readout_backward(cache.read_b, g_sim * cache.code_a / (2 * dg), grads)
        for rc in reversed(cache.rounds):
            g_h_a, g_h_b = self._round_backward(rc, cache.adj_a, cache.adj_b, g_h_a, g_h_b, grads)
        g_u_a = g_h_a * (1.0 - cache.h0_a**2)
        g_u_b = g_h_b * (1.0 - cache.h0_b**2)
        grads["encoder.W"] += cache.x_a.T @ g_u_a + cache.x_b.T @ g_u_b
        grads["encoder.b"] += g_u_a.sum(axis=0) + g_u_b.sum(axis=0)
        return grads

    def triplet_loss(self, triplet, margin: float = DEFAULT_MARGIN) -> tuple[float, dict[str, np.ndarray]]:
        """Hinge max(0, margin - sim(G1, G2) + sim(G1, G3)) and its gradients"""
        g1, g2, g3 = triplet
        pos, neg = self.forward_pair(g1, g2), self.forward_pair(g1, g3)
        loss = max(0.0, margin - pos.similarity + neg.similarity)
        if loss <= 0.0:
            return loss, {name: np.zeros_like(value) for name, value in self.params.items()}
        grads = self.backward_pair(pos, -1.0)
        for name, g in self.backward_pair(neg, 1.0).items():
            grads[name] += g
        return loss, grads


def match_forward(model: MatchModel, g_a: EditGraph, g_b: EditGraph):
    """Graph codes and similarity of a pair at inference

    Binary mode returns the codes as 1-row BitMatrix values and the Hamming
    similarity of the packed codes.
    """
    cache = model.forward_pair(g_a, g_b, fast=True)
    if model.binary:
        code_a, code_b = pack(cache.code_a[None, :]), pack(cache.code_b[None, :])
        return code_a, code_b, hamming_similarity(code_a, code_b)
    return cache.code_a, cache.code_b, cache.similarity


def code_similarity(code_a, code_b) -> float:
    if isinstance(code_a, BitMatrix):
        return hamming_similarity(code_a, code_b)
    code_a, code_b = np.asarray(code_a), np.asarray(code_b)
    if code_a.shape != code_b.shape:
        raise ShapeMismatchError(f"code shapes differ: {code_a.shape} vs {code_b.shape}")
    return float((code_a @ code_b + code_a.size) / (2 * code_a.size))


@dataclass
class MatchTrainResult:
    model: MatchModel
    losses: list[float] = field(default_factory=list)
    val_accs: list[tuple[int, float]] = field(default_factory=list)
    best_step: int = 0


def _triplet_accuracy_on(model: MatchModel, triplets) -> float:
    pos = [model.similarity(g1, g2) for g1, g2, _ in triplets]
    neg = [model.similarity(g1, g3) for g1, _, g3 in triplets]
    return triplet_accuracy(pos, neg)


def train_matcher(
    model: MatchModel,
    cfg: TripletConfig,
    steps: int,
    *,
    margin: float = DEFAULT_MARGIN,
    rng: RngStream | None = None,
    batch: int = DEFAULT_BATCH,
    lr: float = DEFAULT_MATCH_LR,
    log_every: int = 100,
    val_triplets: int = DEFAULT_VAL_TRIPLETS,
    eval_every: int = 50,
) -> MatchTrainResult:
    """Minimize the triplet hinge over freshly generated triplets

    A fixed set of ``val_triplets`` triplets is scored before training and
    every ``eval_every`` steps; the parameters with the best validation
    triplet accuracy are restored at the end.
    """
    if steps < 0 or batch < 1 or eval_every < 1 or val_triplets < 0:
        raise BadParamError("steps and val_triplets must be nonnegative, batch and eval_every positive")
    rng = rng or RngStream(model.seed).child(3)
    val_rng = rng.child(0)
    validation = [gen_triplet(cfg, val_rng) for _ in range(val_triplets)] if steps else []
    optimizer = AdamOptimizer(lr=lr)
    result = MatchTrainResult(model)
    best_acc, best_params = -1.0, None
    if validation:
        best_acc = _triplet_accuracy_on(model, validation)
        best_params = {name: value.copy() for name, value in model.params.items()}
        result.val_accs.append((0, best_acc))
    for step in range(1, steps + 1):
        total = 0.0
        acc = {name: np.zeros_like(value) for name, value in model.params.items()}
        for _ in range(batch):
            loss, grads = model.triplet_loss(gen_triplet(cfg, rng), margin)
            total += loss
            for name, g in grads.items():
                acc[name] += g / batch
        mean_loss = total / batch
        if not math.isfinite(mean_loss):
            raise DivergedLossError(f"matcher loss became {mean_loss} at step {step}")
        optimizer.step(model.params, acc)
        result.losses.append(mean_loss)
        if log_every and step % log_every == 0:
            window = result.losses[-log_every:]
            logger.info(f"matcher step {step}: mean hinge {sum(window) / len(window):.4f}")
        if validation and (step % eval_every == 0 or step == steps):
            val_acc = _triplet_accuracy_on(model, validation)
            result.val_accs.append((step, val_acc))
            if val_acc > best_acc:
                best_acc, result.best_step = val_acc, step
                best_params = {name: value.copy() for name, value in model.params.items()}
    if best_params is not None:
        model.params.update(best_params)
        logger.info(f"matcher keeps step {result.best_step}: validation triplet accuracy {best_acc:.3f}")
    return result


def pair_auc(scores, labels) -> float:
    """ROC area for positive (1) vs negative (0) pairs; ties earn half credit"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise BadParamError("pair AUC needs at least one positive and one negative pair")
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    tied = np.searchsorted(neg, pos, side="right") - below
    return float((below + 0.5 * tied).sum() / (pos.size * neg.size))


def triplet_accuracy(pos_scores, neg_scores) -> float:
    """Fraction of triplets whose positive pair scores strictly higher"""
    pos, neg = np.asarray(pos_scores, dtype=np.float64), np.asarray(neg_scores, dtype=np.float64)
    if pos.shape != neg.shape or pos.size == 0:
        raise BadParamError("triplet accuracy needs equally many positive and negative scores")
    return float(np.mean(pos > neg))


@dataclass
class MatchEval:
    pair_auc: float
    triplet_acc: float


def eval_matcher(
    model: MatchModel,
    cfg: TripletConfig,
    rng: RngStream,
    n_pairs: int | None = None,
    n_triplets: int | None = None,
) -> MatchEval:
    """Pair AUC (alternating kp / kn pairs) and triplet accuracy on fresh samples"""
    n_pairs = cfg.n_pairs if n_pairs is None else n_pairs
    n_triplets = cfg.n_triplets if n_triplets is None else n_triplets
    pair_rng, triplet_rng = rng.child(0), rng.child(1)
    scores, labels = [], []
    for i in range(n_pairs):
        g1, g2, g3 = gen_triplet(cfg, pair_rng)
        positive = i % 2 == 0
        scores.append(model.similarity(g1, g2 if positive else g3))
        labels.append(1 if positive else 0)
    pos, neg = [], []
    for _ in range(n_triplets):
        g1, g2, g3 = gen_triplet(cfg, triplet_rng)
        pos.append(model.similarity(g1, g2))
        neg.append(model.similarity(g1, g3))
    return MatchEval(pair_auc(scores, labels), triplet_accuracy(pos, neg))


@dataclass
class PairwiseTiming:
    n: int
    d: int
    binary_seconds: float
    real_seconds: float

    @property
    def speedup(self) -> float:
        return self.real_seconds / self.binary_seconds if self.binary_seconds else math.inf


def bench_pairwise_scoring(n: int, d: int, trials: int = 9, rng: RngStream | None = None) -> PairwiseTiming:
    """Wall-clock of all n x n node-pair dots: packed xnor/popcount vs float matmul"""
    rng = rng or RngStream(0)
    h_a = sign_det(rng.normal((n, d)))
    h_b = sign_det(rng.normal((n, d)))
    packed_a, packed_b = pack(h_a), pack(h_b)
    binary = time_call(lambda: bit_matmul_rows(packed_a, packed_b), trials)
    real = time_call(lambda: h_a @ h_b.T, trials)
    return PairwiseTiming(n, d, binary.median, real.median)


def run_study(
    cfg: TripletConfig,
    match_config: MatchConfig,
    *,
    steps: int,
    seed: int,
    margin: float = DEFAULT_MARGIN,
    batch: int = DEFAULT_BATCH,
    lr: float = DEFAULT_MATCH_LR,
    timing_trials: int = 5,
) -> dict:
    """Train and evaluate one matcher; returns one report row"""
    root = RngStream(seed)
    model = MatchModel(match_config, seed=seed)
    train_matcher(model, cfg, steps, margin=margin, rng=root.child(10), batch=batch, lr=lr)
    scores = eval_matcher(model, cfg, root.child(11))
    g1, g2, _ = gen_triplet(cfg, root.child(12))
    timing = time_call(lambda: model.similarity(g1, g2), timing_trials)
    logger.info(
        f"n={cfg.n} mode={match_config.mode.value}: pair_auc={scores.pair_auc:.4f} triplet_acc={scores.triplet_acc:.4f}"
    )
    return {
        "n": cfg.n,
        "node_dim": match_config.node_dim,
        "graph_dim": match_config.graph_dim,
        "mode": match_config.mode.value,
        "pair_auc": scores.pair_auc,
        "triplet_acc": scores.triplet_acc,
        "median_inference_seconds": timing.median,
    }


def sweep(
    cfg: TripletConfig,
    *,
    node_counts: list[int] | None = None,
    dims: list[tuple[int, int]] | None = None,
    modes: tuple[MatchMode, ...] = (MatchMode.BINARY, MatchMode.REFERENCE),
    steps: int,
    seed: int,
    **study_kwargs,
) -> pd.DataFrame:
    """Rows for every (node count, node/graph width, mode) combination"""
    node_counts = node_counts or [cfg.n]
    dims = dims or [(DEFAULT_NODE_DIM, DEFAULT_GRAPH_DIM)]
    rows = []
    for n in node_counts:
        sized = TripletConfig(n, cfg.p, cfg.kp, cfg.kn, cfg.n_pairs, cfg.n_triplets, cfg.max_retries)
        for node_dim, graph_dim in dims:
            for mode in modes:
                mc = MatchConfig(node_dim=node_dim, graph_dim=graph_dim, mode=mode)
                rows.append(run_study(sized, mc, steps=steps, seed=seed, **study_kwargs))
    return pd.DataFrame(rows, columns=GMN_COLUMNS)
