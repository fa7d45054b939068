"""Named graph fixtures for solver validation and benchmarks."""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .graph import GraphConfig, SparseSymMatrix, build_graph, flatten_features
from .images import synth_two_cluster
from .patches import mean_stem, patchify


def path_graph(n: int) -> SparseSymMatrix:
    """Chain 0-1-...-(n-1) with unit weights."""
    if n < 2:
        raise ArgumentError(f"path needs n >= 2, got {n}")
    i = np.arange(n - 1, dtype=np.int64)
    rows = np.concatenate([i, i + 1])
    cols = np.concatenate([i + 1, i])
    vals = np.ones(2 * (n - 1), dtype=np.float64)
    return SparseSymMatrix.from_entries(n, rows, cols, vals)


def grid_graph(rows: int, cols: int) -> SparseSymMatrix:
    """4-neighbor lattice with unit weights."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ArgumentError(f"grid needs at least 2 nodes, got {rows}x{cols}")
    src, dst = [], []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                src.append(i)
                dst.append(i + 1)
            if r + 1 < rows:
                src.append(i)
                dst.append(i + cols)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    return SparseSymMatrix.from_entries(
        rows * cols,
        np.concatenate([src, dst]),
        np.concatenate([dst, src]),
        np.ones(2 * src.shape[0], dtype=np.float64),
    )


def two_component_graph(size_a: int = 3, size_b: int = 3) -> SparseSymMatrix:
    """Two disjoint cliques; the Laplacian has a two-dimensional kernel."""
    rows, cols = [], []
    for base, size in ((0, size_a), (size_a, size_b)):
        for i in range(size):
            for j in range(i + 1, size):
                rows += [base + i, base + j]
                cols += [base + j, base + i]
    n = size_a + size_b
    return SparseSymMatrix.from_entries(
        n,
        np.asarray(rows, dtype=np.int64),
        np.asarray(cols, dtype=np.int64),
        np.ones(len(rows), dtype=np.float64),
    )


def two_cluster_knn_graph(hp: int, wp: int, k: int = 5, seed: int = 7,
                          patch: int = 4, gap: float = 0.5):
    """kNN graph over mean-intensity patch features of a two-cluster image.

    Returns (W, L, sigma, cluster labels) where label 0 marks the left half.
    """
    img = synth_two_cluster(hp, wp, patch, gap, seed)
    fm = patchify(img, mean_stem(patch, 3))
    features = flatten_features(fm)
    w, lap, sigma = build_graph(features, GraphConfig(k=k))
    cols = np.arange(hp * wp) % wp
    labels = (cols >= wp // 2).astype(np.int64)
    return w, lap, sigma, labels


_NAMED = {
    "p3": lambda: path_graph(3),
    "path8": lambda: path_graph(8),
    "path32": lambda: path_graph(32),
    "grid4": lambda: grid_graph(4, 4),
    "grid6": lambda: grid_graph(6, 6),
    "grid10": lambda: grid_graph(10, 10),
    "disconnected6": lambda: two_component_graph(3, 3),
    "twocluster8": lambda: two_cluster_knn_graph(8, 8, k=4)[0],
    "twocluster14": lambda: two_cluster_knn_graph(14, 14, k=5)[0],
}


def named_adjacency(name: str) -> SparseSymMatrix:
    """Adjacency matrix for a named fixture; see fixture_names()."""
    if name not in _NAMED:
        raise ArgumentError(
            f"unknown fixture {name!r}; choose from {sorted(_NAMED)}"
        )
    return _NAMED[name]()


def fixture_names() -> list[str]:
    return sorted(_NAMED)
