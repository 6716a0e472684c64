"""Bit-packed binary linear algebra

Logical +1 is stored as bit 1 and -1 as bit 0, LSB-first: bit ``k`` of word
``w`` holds column ``64 * w + k``. Padding bits past ``cols`` are always zero.
All kernels are pure functions over their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import (
    CheckpointFormatError,
    DimMismatchError,
    EntryNotBinaryError,
    IndexOutOfRangeError,
    NonFiniteError,
    ShapeMismatchError,
)

DenseMatrix = npt.NDArray[np.float64]

WORD_BITS = 64
BITMATRIX_MAGIC = b"BGNB"
BITMATRIX_VERSION = 1
_HEADER = struct.Struct("<4sBQQ")

# Rows of the left operand processed per block in the xnor kernels.
_BLOCK_ELEMS = 1 << 22


def words_for(cols: int) -> int:
    return (cols + WORD_BITS - 1) // WORD_BITS


def padding_mask(cols: int) -> np.ndarray:
    """Per-word mask with ones on the logical columns of a row"""
    n_words = words_for(cols)
    mask = np.full(n_words, np.iinfo(np.uint64).max, dtype=np.uint64)
    tail = cols % WORD_BITS
    if n_words and tail:
        mask[-1] = np.uint64((1 << tail) - 1)
    return mask


def as_dense(x, name: str = "matrix") -> DenseMatrix:
    """Validate a 2-D finite float64 matrix"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains NaN or infinite entries")
    return arr


@dataclass(frozen=True)
class BitMatrix:
    """Row-major {+1,-1} matrix packed into 64-bit words"""

    rows: int
    cols: int
    data: np.ndarray  # uint64, shape (rows, words_per_row)

    def __post_init__(self):
        if self.data.dtype != np.uint64 or self.data.shape != (self.rows, words_for(self.cols)):
            raise ShapeMismatchError(
                f"packed data of shape {self.data.shape} does not hold a {self.rows}x{self.cols} matrix"
            )

    @property
    def words_per_row(self) -> int:
        return words_for(self.cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @classmethod
    def from_bool(cls, bits: np.ndarray) -> BitMatrix:
        """Pack a boolean matrix (True is +1)"""
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise ShapeMismatchError(f"bit matrix must be 2-D, got shape {bits.shape}")
        rows, cols = bits.shape
        n_words = words_for(cols)
        padded = np.zeros((rows, n_words * WORD_BITS), dtype=bool)
        padded[:, :cols] = bits
        packed = np.packbits(padded, axis=1, bitorder="little")
        data = np.ascontiguousarray(packed).view("<u8").astype(np.uint64).reshape(rows, n_words)
        return cls(rows, cols, data)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> BitMatrix:
        """All entries -1 (every bit clear)"""
        return cls(rows, cols, np.zeros((rows, words_for(cols)), dtype=np.uint64))

    def to_bool(self) -> np.ndarray:
        raw = np.ascontiguousarray(self.data.astype("<u8")).view(np.uint8).reshape(self.rows, -1)
        return np.unpackbits(raw, axis=1, bitorder="little")[:, : self.cols].astype(bool)

    def row(self, i: int) -> BitMatrix:
        return BitMatrix(1, self.cols, self.data[i : i + 1].copy())

    def transpose(self) -> BitMatrix:
        return BitMatrix.from_bool(self.to_bool().T)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(BITMATRIX_MAGIC, BITMATRIX_VERSION, self.rows, self.cols)
        return header + self.data.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> BitMatrix:
        matrix, used = read_bitmatrix(blob, 0)
        if used != len(blob):
            raise CheckpointFormatError(f"{len(blob) - used} trailing bytes after bit matrix")
        return matrix


def read_bitmatrix(blob: bytes, offset: int) -> tuple[BitMatrix, int]:
    """Decode one serialized BitMatrix starting at ``offset``; returns it and the end offset"""
    if len(blob) - offset < _HEADER.size:
        raise CheckpointFormatError("truncated bit matrix header")
    magic, version, rows, cols = _HEADER.unpack_from(blob, offset)
    if magic != BITMATRIX_MAGIC:
        raise CheckpointFormatError(f"bad bit matrix magic {magic!r}")
    if version != BITMATRIX_VERSION:
        raise CheckpointFormatError(f"unsupported bit matrix version {version}")
    start = offset + _HEADER.size
    end = start + rows * words_for(cols) * 8
    if end > len(blob):
        raise CheckpointFormatError("truncated bit matrix payload")
    data = np.frombuffer(blob[start:end], dtype="<u8").astype(np.uint64).reshape(rows, words_for(cols))
    matrix = BitMatrix(rows, cols, data)
    if np.any(matrix.data & ~padding_mask(cols)):
        raise CheckpointFormatError("bit matrix has nonzero padding bits")
    return matrix, end


def save_bitmatrix(matrix: BitMatrix, path: Path) -> None:
    Path(path).write_bytes(matrix.to_bytes())


def load_bitmatrix(path: Path) -> BitMatrix:
    return BitMatrix.from_bytes(Path(path).read_bytes())


def pack(v) -> BitMatrix:
    """Pack a dense matrix whose entries are exactly +1.0 or -1.0"""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"pack expects a 2-D matrix, got shape {arr.shape}")
    plus = arr == 1.0
    if not np.all(plus | (arr == -1.0)):
        bad = np.argwhere(~(plus | (arr == -1.0)))[0]
        raise EntryNotBinaryError(f"entry {tuple(bad)} = {arr[tuple(bad)]!r} is not +1 or -1")
    return BitMatrix.from_bool(plus)


def unpack(b: BitMatrix) -> DenseMatrix:
    return np.where(b.to_bool(), 1.0, -1.0)


def _check_row_pair(a: BitMatrix, b: BitMatrix) -> None:
    if a.rows != 1 or b.rows != 1:
        raise ShapeMismatchError(f"expected single rows, got {a.rows} and {b.rows} rows")
    if a.cols != b.cols:
        raise DimMismatchError(f"row lengths differ: {a.cols} vs {b.cols}")


def xnor_popcount_dot(a: BitMatrix, b: BitMatrix) -> int:
    """Dot product of two {+1,-1} rows as 2 * popcount(xnor) - cols"""
    _check_row_pair(a, b)
    agree = ~(a.data[0] ^ b.data[0]) & padding_mask(a.cols)
    total = int(np.bitwise_count(agree).sum(dtype=np.int64))
    return 2 * total - a.cols


def bit_matmul_rows(a: BitMatrix, bt: BitMatrix) -> DenseMatrix:
    """All pairwise row dots: out[i, j] = xnor_popcount_dot(a[i], bt[j])"""
    if a.cols != bt.cols:
        raise DimMismatchError(f"inner dimensions differ: {a.cols} vs {bt.cols}")
    mask = padding_mask(a.cols)
    out = np.empty((a.rows, bt.rows), dtype=np.int64)
    block = max(1, _BLOCK_ELEMS // max(1, bt.rows * a.words_per_row))
    for start in range(0, a.rows, block):
        stop = min(a.rows, start + block)
        agree = ~(a.data[start:stop, None, :] ^ bt.data[None, :, :]) & mask
        out[start:stop] = np.bitwise_count(agree).sum(axis=2, dtype=np.int64)
    return (2 * out - a.cols).astype(np.float64)


def bit_matmul(a: BitMatrix, b: BitMatrix) -> DenseMatrix:
    """Product of an m x n and an n x d {+1,-1} matrix; B is transposed once"""
    if a.cols != b.rows:
        raise DimMismatchError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return bit_matmul_rows(a, b.transpose())


def masked_sum_matmul(m: BitMatrix, x) -> DenseMatrix:
    """Multiplication-free M @ X for a {+1,-1} mask M and real X

    Each output row is twice the sum of the rows of X selected by +1 bits
    minus the column totals of X, which are computed once.
    """
    x = as_dense(x, "X")
    if m.cols != x.shape[0]:
        raise DimMismatchError(f"cannot multiply {m.rows}x{m.cols} mask by {x.shape[0]}x{x.shape[1]} matrix")
    plus = m.to_bool()
    total = x.sum(axis=0)
    out = np.empty((m.rows, x.shape[1]), dtype=np.float64)
    for i in range(m.rows):
        out[i] = 2.0 * x[plus[i]].sum(axis=0) - total
    return out


def _reduce_rows(terms: np.ndarray, offsets: np.ndarray, dtype=None) -> np.ndarray:
    """Sum ``terms[offsets[i]:offsets[i + 1]]`` for every i; empty ranges give zero"""
    out = np.zeros((offsets.size - 1, terms.shape[1]), dtype=dtype or terms.dtype)
    nonempty = offsets[:-1] < offsets[1:]
    if terms.shape[0]:
        out[nonempty] = np.add.reduceat(terms, offsets[:-1][nonempty], axis=0, dtype=out.dtype)
    return out


@dataclass(frozen=True)
class RowGroups:
    """Nonzero entries of a real matrix, grouped by row and then by equal value

    Group ``g`` lies in row ``rows[g]``, holds ``values[g]`` at every column in
    ``cols[starts[g]:starts[g + 1]]``, and the groups of row ``i`` are
    ``row_offsets[i]:row_offsets[i + 1]``. Row-normalized bag-of-words
    features have one group per row.
    """

    shape: tuple[int, int]
    rows: np.ndarray
    values: np.ndarray
    starts: np.ndarray
    cols: np.ndarray
    row_offsets: np.ndarray

    @classmethod
    def from_dense(cls, x) -> RowGroups:
        x = as_dense(x, "X")
        r, c = np.nonzero(x)
        v = x[r, c]
        order = np.lexsort((c, v, r))
        r, c, v = r[order], c[order], v[order]
        first = np.ones(r.size, dtype=bool)
        first[1:] = (r[1:] != r[:-1]) | (v[1:] != v[:-1])
        heads = np.flatnonzero(first)
        group_rows = r[heads]
        return cls(
            (x.shape[0], x.shape[1]),
            group_rows,
            v[heads],
            np.append(heads, r.size),
            c,
            np.searchsorted(group_rows, np.arange(x.shape[0] + 1)),
        )

    @property
    def n_groups(self) -> int:
        return self.rows.size


def _sum_groups(x: RowGroups, counts: np.ndarray) -> DenseMatrix:
    return _reduce_rows(counts * x.values[:, None], x.row_offsets, dtype=np.float64)


def grouped_masked_matmul(x: RowGroups, m: BitMatrix) -> DenseMatrix:
    """X @ M for sparse real X and a {+1,-1} mask M of shape (X cols, d)

    Mask rows are added or subtracted as small integers within each group of
    equal entries; each count is scaled once by the group value.
    """
    if x.shape[1] != m.rows:
        raise DimMismatchError(f"cannot multiply {x.shape[0]}x{x.shape[1]} matrix by {m.rows}x{m.cols} mask")
    count_type = np.int16 if m.rows <= np.iinfo(np.int16).max else np.int32
    signs = np.where(m.to_bool(), 1, -1).astype(count_type)
    return _sum_groups(x, _reduce_rows(signs[x.cols], x.starts))


def grouped_matmul(x: RowGroups, w) -> DenseMatrix:
    """X @ W over the groups of X, summed in the order ``grouped_masked_matmul`` uses"""
    w = as_dense(w, "W")
    if x.shape[1] != w.shape[0]:
        raise DimMismatchError(f"cannot multiply {x.shape[0]}x{x.shape[1]} by {w.shape[0]}x{w.shape[1]}")
    return _sum_groups(x, _reduce_rows(w[x.cols], x.starts))


@dataclass(frozen=True)
class TernaryMatrix:
    """{+1, 0, -1} matrix held as two disjoint bit masks"""

    rows: int
    cols: int
    plus_mask: BitMatrix
    minus_mask: BitMatrix

    def __post_init__(self):
        for mask in (self.plus_mask, self.minus_mask):
            if mask.shape != (self.rows, self.cols):
                raise ShapeMismatchError(f"mask shape {mask.shape} != {(self.rows, self.cols)}")
        if np.any(self.plus_mask.data & self.minus_mask.data):
            raise ValueError("an entry cannot be both +1 and -1")

    @classmethod
    def from_dense(cls, t) -> TernaryMatrix:
        t = np.asarray(t, dtype=np.float64)
        if not np.all((t == 1.0) | (t == 0.0) | (t == -1.0)):
            raise EntryNotBinaryError("ternary entries must be +1, 0 or -1")
        return cls(t.shape[0], t.shape[1], BitMatrix.from_bool(t > 0), BitMatrix.from_bool(t < 0))

    @classmethod
    def from_edges(cls, rows: np.ndarray, cols: np.ndarray, values: np.ndarray, shape: tuple[int, int]) -> TernaryMatrix:
        """Set coefficient ``values[e]`` (in {+1,0,-1}) at ``(rows[e], cols[e])``"""
        n_rows, n_cols = shape
        masks = []
        for selected in (values > 0, values < 0):
            data = np.zeros((n_rows, words_for(n_cols)), dtype=np.uint64)
            r = rows[selected]
            c = cols[selected].astype(np.uint64)
            bits = np.left_shift(np.uint64(1), c % np.uint64(WORD_BITS))
            np.bitwise_or.at(data, (r, (c // np.uint64(WORD_BITS)).astype(np.intp)), bits)
            masks.append(BitMatrix(n_rows, n_cols, data))
        return cls(n_rows, n_cols, masks[0], masks[1])

    def to_dense(self) -> DenseMatrix:
        return self.plus_mask.to_bool().astype(np.float64) - self.minus_mask.to_bool().astype(np.float64)

    def to_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nonzero entries in row-major order as (row offsets, columns, coefficients)"""
        plus_rows, plus_cols = _set_bits(self.plus_mask)
        minus_rows, minus_cols = _set_bits(self.minus_mask)
        rows = np.concatenate([plus_rows, minus_rows])
        cols = np.concatenate([plus_cols, minus_cols])
        values = np.concatenate([np.ones(plus_rows.size), -np.ones(minus_rows.size)])
        order = np.lexsort((cols, rows))
        offsets = np.searchsorted(rows[order], np.arange(self.rows + 1))
        return offsets, cols[order], values[order]


def _set_bits(mask: BitMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Row and column of every +1 bit, touching only nonzero words"""
    rows, words = np.nonzero(mask.data)
    raw = np.ascontiguousarray(mask.data[rows, words].astype("<u8")).view(np.uint8).reshape(-1, 8)
    hit, bit = np.nonzero(np.unpackbits(raw, axis=1, bitorder="little"))
    return rows[hit], words[hit] * WORD_BITS + bit


def ternary_segment_sum(offsets: np.ndarray, targets: np.ndarray, coefficients: np.ndarray, x) -> DenseMatrix:
    """A @ X for a ternary A stored per edge in CSR order

    Edge ``e`` of row ``i`` (``offsets[i] <= e < offsets[i + 1]``) adds
    ``X[targets[e]]`` for coefficient +1, subtracts it for -1 and contributes
    nothing for 0.
    """
    x = as_dense(x, "X")
    if targets.size and (targets.min() < 0 or targets.max() >= x.shape[0]):
        raise DimMismatchError(f"edge target outside the {x.shape[0]} rows of X")
    terms = x[targets]
    np.negative(terms, out=terms, where=(coefficients < 0)[:, None])
    terms[coefficients == 0] = 0.0
    return _reduce_rows(terms, offsets)


def ternary_weighted_sum(a: TernaryMatrix, i: int, x) -> np.ndarray:
    """Row ``i`` of A @ X: add rows of X under +1, subtract rows under -1"""
    x = as_dense(x, "X")
    if a.cols != x.shape[0]:
        raise DimMismatchError(f"ternary row has {a.cols} columns but X has {x.shape[0]} rows")
    if not 0 <= i < a.rows:
        raise IndexOutOfRangeError(f"row {i} outside a ternary matrix with {a.rows} rows")
    plus = np.flatnonzero(a.plus_mask.row(i).to_bool()[0])
    minus = np.flatnonzero(a.minus_mask.row(i).to_bool()[0])
    return x[plus].sum(axis=0) - x[minus].sum(axis=0)


def ternary_matmul(a: TernaryMatrix, x) -> DenseMatrix:
    """A @ X for every row of a sparse ternary matrix"""
    x = as_dense(x, "X")
    if a.cols != x.shape[0]:
        raise DimMismatchError(f"ternary matrix has {a.cols} columns but X has {x.shape[0]} rows")
    return ternary_segment_sum(*a.to_edges(), x)


def hamming_similarity(a: BitMatrix, b: BitMatrix) -> float:
    """Fraction of positions where two codes agree"""
    _check_row_pair(a, b)
    if a.cols == 0:
        raise DimMismatchError("hamming similarity needs codes of at least one bit")
    return (xnor_popcount_dot(a, b) + a.cols) / (2 * a.cols)
