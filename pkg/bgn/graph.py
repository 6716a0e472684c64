"""Graph data model, TSV ingestion, dataset splits and synthetic fixtures

File formats (tab separated, one record per line, blank lines ignored):

- ``nodes.tsv``: ``node_id<TAB>label<TAB>f_1,f_2,...,f_m``
- ``edges.tsv``: ``src_id<TAB>dst_id``
- ``split.tsv`` (optional): ``node_id<TAB>train|val|test``

Edges are symmetrized and deduplicated at load and every node gets a
self-loop, so each neighborhood contains the node itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .bitlinalg import DenseMatrix, RowGroups
from .errors import (
    BadParamError,
    GraphParseError,
    InconsistentDimsError,
    InsufficientClassMembersError,
    NonFiniteError,
    UnknownNodeError,
)
from .rng import RngStream

logger = logging.getLogger(__name__)

NODES_FILE = "nodes.tsv"
EDGES_FILE = "edges.tsv"
SPLIT_FILE = "split.tsv"
_SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class Split:
    """Disjoint train/validation/test node ids"""

    train_ids: np.ndarray
    val_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        parts = [self.train_ids, self.val_ids, self.test_ids]
        merged = np.concatenate(parts)
        if np.unique(merged).size != merged.size:
            raise BadParamError("train, val and test ids must be pairwise disjoint")

    def same_as(self, other: Split) -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.train_ids, self.val_ids, self.test_ids),
                (other.train_ids, other.val_ids, other.test_ids),
                strict=True,
            )
        )


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in symmetric CSR form with node features and labels"""

    csr_offsets: np.ndarray
    csr_targets: np.ndarray
    features: DenseMatrix
    labels: np.ndarray
    n_classes: int
    node_ids: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.features.shape[0]
        if self.csr_offsets.shape != (n + 1,) or self.labels.shape != (n,):
            raise InconsistentDimsError("CSR offsets, labels and features disagree on the node count")
        if np.any(np.diff(self.csr_offsets) < 0) or self.csr_offsets[-1] != self.csr_targets.size:
            raise InconsistentDimsError("CSR offsets must be nondecreasing and end at the target count")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise BadParamError(f"labels must lie in [0, {self.n_classes})")
        if not np.isfinite(self.features).all():
            raise NonFiniteError("node features contain NaN or infinite values")
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(str(i) for i in range(n)))

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_edges(self) -> int:
        """Undirected edges, self-loops excluded"""
        return (self.csr_targets.size - self.n_nodes) // 2

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Source node of every stored edge, aligned with ``csr_targets``"""
        return np.repeat(np.arange(self.n_nodes), self.degrees)

    @cached_property
    def feature_groups(self) -> RowGroups:
        """Nonzero features grouped by node and value, built once per graph"""
        return RowGroups.from_dense(self.features)

    @cached_property
    def reverse_edges(self) -> np.ndarray:
        """Index of the (j, i) twin of each stored edge (i, j)"""
        n = self.n_nodes
        keys = self.edge_rows * n + self.csr_targets
        return np.searchsorted(keys, self.csr_targets * n + self.edge_rows)

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[v] : self.csr_offsets[v + 1]]

    def undirected_edges(self) -> np.ndarray:
        """Each non-self edge once as (u, v) with u < v"""
        rows, cols = self.edge_rows, self.csr_targets
        keep = rows < cols
        return np.stack([rows[keep], cols[keep]], axis=1)

    def same_as(self, other: Graph) -> bool:
        return (
            self.n_classes == other.n_classes
            and self.node_ids == other.node_ids
            and np.array_equal(self.csr_offsets, other.csr_offsets)
            and np.array_equal(self.csr_targets, other.csr_targets)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )


def build_graph(
    n_nodes: int,
    edges: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int | None = None,
    node_ids: tuple[str, ...] = (),
) -> Graph:
    """Symmetrize, deduplicate and add self-loops, then lay out as CSR"""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
        raise BadParamError("edge endpoint outside the node range")
    loops = np.arange(n_nodes, dtype=np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1], loops])
    dst = np.concatenate([edges[:, 1], edges[:, 0], loops])
    keys = np.unique(src * n_nodes + dst)
    rows, targets = np.divmod(keys, n_nodes) if n_nodes else (keys, keys)
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_nodes), out=offsets[1:])
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    return Graph(offsets, targets.astype(np.int64), np.asarray(features, dtype=np.float64), labels, n_classes, node_ids)


def row_normalize(features: np.ndarray) -> np.ndarray:
    """Scale each row to unit sum; all-zero rows stay zero"""
    sums = features.sum(axis=1, keepdims=True)
    safe = np.where(sums == 0, 1.0, sums)
    return np.where(sums == 0, 0.0, features / safe)


def _data_lines(path: Path):
    with path.open(encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.strip():
                yield line_no, line


def _read_nodes(path: Path) -> tuple[list[str], list[int], list[list[float]]]:
    ids: list[str] = []
    labels: list[int] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    for line_no, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise GraphParseError(path, line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        node_id, label, feats = fields
        if node_id in seen:
            raise GraphParseError(path, line_no, f"duplicate node id {node_id!r}")
        try:
            label_value = int(label)
        except ValueError:
            raise GraphParseError(path, line_no, f"label {label!r} is not an integer") from None
        if label_value < 0:
            raise GraphParseError(path, line_no, f"label {label_value} is negative")
        try:
            values = [float(tok) for tok in feats.split(",")] if feats else []
        except ValueError:
            raise GraphParseError(path, line_no, "feature list contains a non-number") from None
        if rows and len(values) != len(rows[0]):
            raise InconsistentDimsError(
                f"{path}:{line_no}: node {node_id!r} has {len(values)} features, expected {len(rows[0])}"
            )
        seen.add(node_id)
        ids.append(node_id)
        labels.append(label_value)
        rows.append(values)
    return ids, labels, rows


def _read_edges(path: Path, index: dict[str, int]) -> np.ndarray:
    pairs: list[tuple[int, int]] = []
    for line_no, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise GraphParseError(path, line_no, f"expected 2 tab-separated fields, got {len(fields)}")
        for node_id in fields:
            if node_id not in index:
                raise UnknownNodeError(f"{path}:{line_no}: unknown node {node_id!r}")
        pairs.append((index[fields[0]], index[fields[1]]))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_graph(directory: Path, *, normalize: bool = True) -> Graph:
    """Read ``nodes.tsv`` and ``edges.tsv`` from ``directory``"""
    directory = Path(directory)
    ids, labels, rows = _read_nodes(directory / NODES_FILE)
    index = {node_id: i for i, node_id in enumerate(ids)}
    edges = _read_edges(directory / EDGES_FILE, index)
    features = np.array(rows, dtype=np.float64).reshape(len(ids), len(rows[0]) if rows else 0)
    if normalize:
        features = row_normalize(features)
    graph = build_graph(len(ids), edges, features, np.array(labels, dtype=np.int64), node_ids=tuple(ids))
    logger.info(f"Loaded graph from {directory}: {graph.n_nodes} nodes, {graph.n_edges} edges, {graph.n_classes} classes")
    return graph


def load_split(directory: Path, graph: Graph) -> Split | None:
    """Read ``split.tsv`` if present"""
    path = Path(directory) / SPLIT_FILE
    if not path.exists():
        return None
    index = {node_id: i for i, node_id in enumerate(graph.node_ids)}
    buckets: dict[str, list[int]] = {name: [] for name in _SPLIT_NAMES}
    for line_no, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 2 or fields[1] not in buckets:
            raise GraphParseError(path, line_no, "expected node_id<TAB>train|val|test")
        if fields[0] not in index:
            raise UnknownNodeError(f"{path}:{line_no}: unknown node {fields[0]!r}")
        buckets[fields[1]].append(index[fields[0]])
    return Split(*(np.array(sorted(buckets[name]), dtype=np.int64) for name in _SPLIT_NAMES))


def save_graph(graph: Graph, directory: Path, split: Split | None = None) -> None:
    """Write a graph (and optional split) in the TSV layout ``load_graph`` reads"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / NODES_FILE).open("w", encoding="utf-8") as handle:
        for node_id, label, row in zip(graph.node_ids, graph.labels.tolist(), graph.features.tolist(), strict=True):
            handle.write(f"{node_id}\t{label}\t{','.join(map(repr, row))}\n")
    with (directory / EDGES_FILE).open("w", encoding="utf-8") as handle:
        for u, v in graph.undirected_edges().tolist():
            handle.write(f"{graph.node_ids[u]}\t{graph.node_ids[v]}\n")
    if split is not None:
        with (directory / SPLIT_FILE).open("w", encoding="utf-8") as handle:
            for name, ids in zip(_SPLIT_NAMES, (split.train_ids, split.val_ids, split.test_ids), strict=True):
                for v in ids.tolist():
                    handle.write(f"{graph.node_ids[v]}\t{name}\n")


def make_split(graph: Graph, per_class: int, n_test: int, rng: RngStream, n_val: int = 0) -> Split:
    """``per_class`` training nodes per class, then test and validation nodes from the rest"""
    if per_class < 0 or n_test < 0 or n_val < 0:
        raise BadParamError("split sizes must be nonnegative")
    train: list[np.ndarray] = []
    for c in range(graph.n_classes):
        members = np.flatnonzero(graph.labels == c)
        if members.size < per_class:
            raise InsufficientClassMembersError(f"class {c} has {members.size} nodes, {per_class} requested")
        train.append(members[rng.permutation(members.size)[:per_class]])
    train_ids = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(graph.n_nodes), train_ids)
    if n_test + n_val > rest.size:
        raise BadParamError(f"{n_test} test + {n_val} val nodes requested but only {rest.size} remain")
    order = rest[rng.permutation(rest.size)]
    return Split(
        train_ids.astype(np.int64),
        np.sort(order[n_test : n_test + n_val]).astype(np.int64),
        np.sort(order[:n_test]).astype(np.int64),
    )


def synth_citation_graph(
    n: int,
    m_feat: int,
    n_classes: int,
    homophily: float,
    rng: RngStream,
    *,
    avg_degree: float = 6.0,
    noise: float = 0.05,
    density: float = 0.2,
    normalize: bool = True,
) -> Graph:
    """Planted-partition graph with class-prototype bag-of-words features

    Classes are assigned round-robin. Each node pair is linked with a
    probability chosen so that the expected degree is ``avg_degree`` and a
    ``homophily`` share of edges stays inside a class. Features are the class
    prototype bits with each bit flipped with probability ``noise``.
    """
    if n_classes < 1 or n < n_classes:
        raise BadParamError(f"need at least one node per class, got n={n}, classes={n_classes}")
    if not 0.0 <= homophily <= 1.0 or not 0.0 <= noise <= 1.0 or m_feat < 1 or avg_degree < 0:
        raise BadParamError("homophily and noise must lie in [0, 1], m_feat >= 1, avg_degree >= 0")
    labels = np.arange(n, dtype=np.int64) % n_classes
    class_size = n / n_classes
    p_in = min(1.0, homophily * avg_degree / max(class_size - 1, 1.0))
    p_out = min(1.0, (1.0 - homophily) * avg_degree / max(n - class_size, 1.0))
    pairs: list[np.ndarray] = []
    for i in range(n - 1):
        others = np.arange(i + 1, n)
        prob = np.where(labels[others] == labels[i], p_in, p_out)
        hits = others[rng.uniform(others.size) < prob]
        pairs.append(np.stack([np.full(hits.size, i), hits], axis=1))
    edges = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    prototypes = rng.uniform((n_classes, m_feat)) < density
    flips = rng.uniform((n, m_feat)) < noise
    features = (prototypes[labels] ^ flips).astype(np.float64)
    if normalize:
        features = row_normalize(features)
    return build_graph(n, edges, features, labels, n_classes)


def convert_linqs(content_path: Path, cites_path: Path, out_dir: Path) -> Graph:
    """Convert a LINQS ``.content``/``.cites`` dump into the TSV layout

    ``.content`` lines are ``paper_id f_1 ... f_m class_label`` and ``.cites``
    lines are ``cited_id citing_id``, whitespace separated. Class labels are
    mapped to indices in sorted order; citations naming unknown papers are
    dropped.
    """
    ids: list[str] = []
    names: list[str] = []
    rows: list[list[float]] = []
    for line_no, line in _data_lines(Path(content_path)):
        tokens = line.split()
        if len(tokens) < 2:
            raise GraphParseError(content_path, line_no, "expected id, features and a class label")
        try:
            rows.append([float(tok) for tok in tokens[1:-1]])
        except ValueError:
            raise GraphParseError(content_path, line_no, "feature is not a number") from None
        if len(rows[-1]) != len(rows[0]):
            raise InconsistentDimsError(f"{content_path}:{line_no}: feature arity differs")
        ids.append(tokens[0])
        names.append(tokens[-1])
    classes = sorted(set(names))
    class_index = {name: i for i, name in enumerate(classes)}
    index = {node_id: i for i, node_id in enumerate(ids)}
    pairs: list[tuple[int, int]] = []
    dropped = 0
    for line_no, line in _data_lines(Path(cites_path)):
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphParseError(cites_path, line_no, "expected two paper ids")
        if tokens[0] in index and tokens[1] in index:
            pairs.append((index[tokens[0]], index[tokens[1]]))
        else:
            dropped += 1
    if dropped:
        logger.warning(f"Dropped {dropped} citations that reference unknown papers")
    graph = build_graph(
        len(ids),
        np.array(pairs, dtype=np.int64).reshape(-1, 2),
        np.array(rows, dtype=np.float64).reshape(len(ids), len(rows[0]) if rows else 0),
        np.array([class_index[name] for name in names], dtype=np.int64),
        len(classes),
        tuple(ids),
    )
    save_graph(graph, out_dir)
    logger.info(f"Converted {len(ids)} papers in {len(classes)} classes to {out_dir}")
    return graph
