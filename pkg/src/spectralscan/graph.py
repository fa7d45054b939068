"""kNN affinity graph over patch features and its normalized Laplacian.

The adjacency follows the mutual-OR rule: an edge (i, j) exists when i is
among j's k nearest neighbors or vice versa, weighted by
exp(-||f_i - f_j||^2 / (2 sigma^2)) with sigma the mean Euclidean distance
over all unordered pairs. The Laplacian is I - D^{-1/2} W D^{-1/2}, stored
in CSR with an exactly-1 diagonal and exactly symmetric off-diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import ArgumentError, DegenerateGraphError, ShapeError
from .flops import FlopCounter, count
from .patches import FeatureMap

_BLOCK_ROWS = 256


@dataclass(frozen=True)
class SparseSymMatrix:
    """CSR storage of a structurally symmetric matrix (int64 indices, float64)."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    def matvec(self, x: np.ndarray, counter: FlopCounter | None = None,
               stage: str = "eigensolve") -> np.ndarray:
        count(counter, stage, 2 * self.nnz)
        x = np.ascontiguousarray(x, dtype=np.float64)
        return backends.csr_matvec(self.row_ptr, self.col_idx, self.values, x)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n), dtype=np.float64)
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))
        dense[rows, self.col_idx] = self.values
        return dense

    def byte_size(self) -> int:
        return self.row_ptr.nbytes + self.col_idx.nbytes + self.values.nbytes

    def dump_triplets(self) -> str:
        """One `i j value` line per stored entry, sorted by (i, j)."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))
        lines = [
            f"{int(i)} {int(j)} {v!r}"
            for i, j, v in zip(rows, self.col_idx, self.values)
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_entries(cls, n: int, rows: np.ndarray, cols: np.ndarray,
                     vals: np.ndarray) -> "SparseSymMatrix":
        order = np.lexsort((cols, rows))
        rows = rows[order]
        cols = cols[order]
        vals = vals[order]
        counts = np.bincount(rows, minlength=n)
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        return cls(n=n, row_ptr=row_ptr, col_idx=cols.astype(np.int64),
                   values=vals.astype(np.float64))

    @classmethod
    def from_triplets(cls, text: str) -> "SparseSymMatrix":
        rows, cols, vals = [], [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ArgumentError(f"triplet line {lineno}: expected `i j value`")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
        if not rows:
            raise ArgumentError("empty triplet input")
        n = max(max(rows), max(cols)) + 1
        return cls.from_entries(
            n,
            np.asarray(rows, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=np.float64),
        )


@dataclass(frozen=True)
class GraphConfig:
    k: int
    sigma_mode: str = "all-pairs-mean"
    sigma_floor: float = 1e-12


def flatten_features(fm: FeatureMap) -> np.ndarray:
    """Row-major (n, C) node features; node index i = row * wp + col."""
    return np.ascontiguousarray(fm.tokens, dtype=np.float64)


def _pair_scan(features: np.ndarray, k: int | None,
               counter: FlopCounter | None = None):
    """One blocked pass over all pairs: distance-sum for sigma and, when k is
    given, each row's k nearest neighbors (ties by smaller squared distance,
    then smaller index via stable sort)."""
    n = features.shape[0]
    sq_norms = np.einsum("ij,ij->i", features, features)
    dist_total = 0.0
    nbr = np.empty((n, k), dtype=np.int64) if k is not None else None
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        g = features[start:stop] @ features.T
        d2 = sq_norms[start:stop, None] + sq_norms[None, :] - 2.0 * g
        np.clip(d2, 0.0, None, out=d2)
        idx = np.arange(start, stop)
        d2[idx - start, idx] = np.inf
        finite = np.where(np.isinf(d2), 0.0, d2)
        dist_total += float(np.sqrt(finite).sum())
        if k is not None:
            order = np.argsort(d2, axis=1, kind="stable")
            nbr[start:stop] = order[:, :k]
    pairs = n * (n - 1) // 2
    # d^2 per pair (3C-1), sqrt per pair, pair-sum adds, one divide
    c = features.shape[1]
    count(counter, "adjacency", pairs * (3 * c - 1) + pairs + max(pairs - 1, 0) + 1)
    mean_dist = dist_total / (n * (n - 1)) if n > 1 else 0.0
    return mean_dist, nbr


def sigma_estimate(features: np.ndarray, floor: float = 1e-12,
                   counter: FlopCounter | None = None) -> float:
    """Mean Euclidean distance over all unordered pairs, floored at `floor`."""
    n = features.shape[0]
    if n < 2:
        raise ArgumentError(f"sigma needs at least 2 nodes, got {n}")
    mean_dist, _ = _pair_scan(features, None, counter)
    return max(mean_dist, floor)


def knn_neighbors(features: np.ndarray, k: int,
                  counter: FlopCounter | None = None) -> np.ndarray:
    """(n, k) array of each node's k nearest other nodes, nearest first."""
    n = features.shape[0]
    if not 1 <= k < n:
        raise ArgumentError(f"need 1 <= k < n, got k={k}, n={n}")
    _, nbr = _pair_scan(features, k, counter)
    return nbr


def build_adjacency(features: np.ndarray, neighbors: np.ndarray, sigma: float,
                    counter: FlopCounter | None = None) -> SparseSymMatrix:
    """Gaussian weights on the union of kNN relations (OR-symmetrized).

    Edge squared distances are recomputed by direct subtraction so identical
    features give weight exactly 1.
    """
    if sigma <= 0.0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    n, k = neighbors.shape[0], neighbors.shape[1]
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = neighbors.reshape(-1).astype(np.int64)
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    keys = np.unique(lo * np.int64(n) + hi)
    ei = keys // n
    ej = keys % n
    diff = features[ei] - features[ej]
    d2 = np.einsum("ij,ij->i", diff, diff)
    w = np.exp(d2 * (-1.0 / (2.0 * sigma * sigma)))
    c = features.shape[1]
    count(counter, "adjacency", keys.shape[0] * (3 * c - 1 + 2))
    keep = w > 0.0  # underflowed weights would be stored zeros
    ei, ej, w = ei[keep], ej[keep], w[keep]
    return SparseSymMatrix.from_entries(
        n,
        np.concatenate([ei, ej]),
        np.concatenate([ej, ei]),
        np.concatenate([w, w]),
    )


def normalized_laplacian(w: SparseSymMatrix,
                         counter: FlopCounter | None = None) -> SparseSymMatrix:
    """L = I - D^{-1/2} W D^{-1/2}; unit diagonal stored explicitly."""
    n = w.n
    row_len = np.diff(w.row_ptr)
    rows = np.repeat(np.arange(n, dtype=np.int64), row_len)
    degrees = np.bincount(rows, weights=w.values, minlength=n)
    bad = np.nonzero((row_len == 0) | (degrees <= 0.0))[0]
    if bad.size:
        raise DegenerateGraphError(int(bad[0]))
    isd = 1.0 / np.sqrt(degrees)
    off_vals = -(w.values * (isd[rows] * isd[w.col_idx]))
    diag_idx = np.arange(n, dtype=np.int64)
    # degrees: nnz adds; isd: n sqrt + n div; per off-diag entry 3 ops
    count(counter, "laplacian", w.nnz + 2 * n + 3 * w.nnz)
    return SparseSymMatrix.from_entries(
        n,
        np.concatenate([rows, diag_idx]),
        np.concatenate([w.col_idx, diag_idx]),
        np.concatenate([off_vals, np.ones(n)]),
    )


def build_graph(features: np.ndarray, cfg: GraphConfig,
                counter: FlopCounter | None = None):
    """Full construction: returns (W, L_sym, sigma) with one pair scan."""
    n = features.shape[0]
    if n < 2:
        raise ArgumentError(f"graph needs at least 2 nodes, got {n}")
    if not 1 <= cfg.k < n:
        raise ArgumentError(f"need 1 <= k < n, got k={cfg.k}, n={n}")
    if cfg.sigma_mode != "all-pairs-mean":
        raise ArgumentError(f"unknown sigma mode {cfg.sigma_mode!r}")
    mean_dist, nbr = _pair_scan(features, cfg.k, counter)
    sigma = max(mean_dist, cfg.sigma_floor)
    w = build_adjacency(features, nbr, sigma, counter)
    lap = normalized_laplacian(w, counter)
    return w, lap, sigma
