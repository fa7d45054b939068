"""Eigenvector-ordered token traversal: plan construction, scatter/gather,
channel merge, and propagation through max-pool downsampling.

A plan holds 2m permutations: for eigenvector j, order 2j visits tokens by
ascending eigenvector value and order 2j+1 is its exact reverse. Equal values
fall back to the next eigenvectors in the chain and finally to the node
index, with a stable sort throughout, so plans are bit-deterministic.

Before sorting, each eigenvector's direction is canonicalized by the sign of
the sum of its cubed entries. That statistic is invariant under node
relabeling, which keeps the ascending/descending role assignment stable when
the same image arrives rotated or with its patches renumbered; the per-index
sign rule applied to the stored basis cannot provide that, since the leading
nonzero entry moves under relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError
from .eigen import SpectralBasis
from .patches import FeatureMap

_DIRECTION_EPS = 1e-12


@dataclass(frozen=True)
class TraversalPlan:
    """2m token permutations (ascending/descending per eigenvector) plus inverses."""

    n: int
    m: int
    orders: np.ndarray
    inverses: np.ndarray
    source_shape: tuple[int, int]

    def dump(self) -> str:
        """Text form, one `order <t> <dir>: i0 i1 ...` line per order."""
        lines = []
        for t in range(2 * self.m):
            direction = "asc" if t % 2 == 0 else "desc"
            seq = " ".join(str(int(i)) for i in self.orders[t])
            lines.append(f"order {t} {direction}: {seq}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PoolIndexMap:
    """Per output cell, the flat input index chosen by 2x2 max pooling."""

    out_shape: tuple[int, int]
    argmax: np.ndarray


@dataclass(frozen=True)
class MergeWeights:
    """Channel merge after scatter: concat+projection, plain sum, or mean."""

    mode: str
    projection: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("concat_proj", "sum", "mean"):
            raise ArgumentError(f"unknown merge mode {self.mode!r}")
        if self.mode == "concat_proj" and self.projection is None:
            raise ArgumentError("concat_proj merge needs a projection")


def direction_sign(values: np.ndarray) -> float:
    """Relabeling-invariant sign for a traversal direction.

    Returns -1 when the cube-sum of the values is negative, +1 otherwise
    (including the degenerate near-zero case, which is the documented
    invariance caveat for exactly sign-symmetric value multisets).
    """
    stat = float(np.sum(values * values * values))
    if stat < -_DIRECTION_EPS:
        return -1.0
    return 1.0


def build_plan(basis: SpectralBasis, shape: tuple[int, int]) -> TraversalPlan:
    """Sort tokens by each direction-canonicalized eigenvector.

    Tie chain for order j: value of eigenvector j, then j+1, ..., then node
    index. The descending order is the exact reverse of the ascending one.
    """
    hp, wp = shape
    if basis.n != hp * wp:
        raise ArgumentError(
            f"basis covers {basis.n} nodes but shape {hp}x{wp} has {hp * wp}"
        )
    n, m = basis.n, basis.m
    signs = np.array([direction_sign(basis.vectors[:, j]) for j in range(m)])
    canon = basis.vectors * signs[None, :]
    index_key = np.arange(n)
    orders = np.empty((2 * m, n), dtype=np.int64)
    inverses = np.empty((2 * m, n), dtype=np.int64)
    for j in range(m):
        keys = (index_key,) + tuple(canon[:, jj] for jj in range(m - 1, j - 1, -1))
        asc = np.lexsort(keys)
        orders[2 * j] = asc
        orders[2 * j + 1] = asc[::-1]
    positions = np.arange(n, dtype=np.int64)
    for t in range(2 * m):
        inverses[t, orders[t]] = positions
    return TraversalPlan(n=n, m=m, orders=orders, inverses=inverses,
                         source_shape=(hp, wp))


def apply_scan(fm: FeatureMap, plan: TraversalPlan) -> np.ndarray:
    """Gather tokens into the 2m planned sequences; returns (2m, n, C) copies."""
    if fm.hp * fm.wp != plan.n:
        raise ShapeError(
            f"feature map has {fm.hp * fm.wp} tokens, plan expects {plan.n}"
        )
    tokens = fm.tokens
    return tokens[plan.orders]


def merge_scan(seqs: np.ndarray, plan: TraversalPlan,
               mix: MergeWeights) -> FeatureMap:
    """Scatter each sequence back to grid order and merge channels.

    concat_proj concatenates the 2m restored C-vectors per token (t-major)
    and applies the (2m*C, C) projection; sum and mean reduce across t.
    """
    seqs = np.asarray(seqs, dtype=np.float64)
    if seqs.ndim != 3 or seqs.shape[0] != 2 * plan.m or seqs.shape[1] != plan.n:
        raise ShapeError(
            f"expected ({2 * plan.m}, {plan.n}, C) sequences, got {seqs.shape}"
        )
    chans = seqs.shape[2]
    restored = np.empty_like(seqs)
    for t in range(2 * plan.m):
        restored[t] = seqs[t][plan.inverses[t]]

    if mix.mode == "mean":
        merged = restored.sum(axis=0) / (2 * plan.m)
    elif mix.mode == "sum":
        merged = restored.sum(axis=0)
    else:
        proj = np.asarray(mix.projection, dtype=np.float64)
        if proj.shape[0] != 2 * plan.m * chans:
            raise ShapeError(
                f"projection rows {proj.shape[0]} != {2 * plan.m * chans}"
            )
        concat = restored.transpose(1, 0, 2).reshape(plan.n, 2 * plan.m * chans)
        merged = concat @ proj
        if mix.bias is not None:
            merged = merged + np.asarray(mix.bias, dtype=np.float64)

    hp, wp = plan.source_shape
    out_c = merged.shape[1]
    return FeatureMap(hp=hp, wp=wp, channels=out_c,
                      data=np.ascontiguousarray(merged.reshape(hp, wp, out_c)))


def pool_indices(fm: FeatureMap) -> tuple[FeatureMap, PoolIndexMap]:
    """2x2 max pooling by feature L2 norm; records each window's winner.

    Ties pick the smallest row-major index inside the window. Output features
    are copies of the winning cells.
    """
    if fm.hp % 2 or fm.wp % 2:
        raise ShapeError(f"pooling needs even dims, got {fm.hp}x{fm.wp}")
    hp2, wp2 = fm.hp // 2, fm.wp // 2
    sq = np.einsum("ijc,ijc->ij", fm.data, fm.data)
    # window cells in row-major window order: (0,0), (0,1), (1,0), (1,1)
    cells = np.stack(
        [sq[0::2, 0::2], sq[0::2, 1::2], sq[1::2, 0::2], sq[1::2, 1::2]], axis=0
    )
    winner = np.argmax(cells, axis=0)  # argmax keeps the first maximum
    oi, oj = np.meshgrid(np.arange(hp2), np.arange(wp2), indexing="ij")
    rows = 2 * oi + (winner // 2)
    cols = 2 * oj + (winner % 2)
    flat = (rows * fm.wp + cols).astype(np.int64)
    pooled = fm.data[rows, cols].copy()
    return (
        FeatureMap(hp=hp2, wp=wp2, channels=fm.channels, data=pooled),
        PoolIndexMap(out_shape=(hp2, wp2), argmax=flat),
    )


def downsample_plan(plan: TraversalPlan, basis: SpectralBasis,
                    pool: PoolIndexMap) -> tuple[TraversalPlan, SpectralBasis]:
    """Carry traversal structure through a pooling step.

    The new eigenvector values are gathered at the pooled winner indices and
    the new plan is built from them; eigenvalues ride along unchanged.
    """
    hp, wp = plan.source_shape
    oh, ow = pool.out_shape
    if (oh, ow) != (hp // 2, wp // 2):
        raise ShapeError(
            f"pool output {oh}x{ow} does not halve plan shape {hp}x{wp}"
        )
    gathered = basis.vectors[pool.argmax.reshape(-1), :]
    new_basis = SpectralBasis(
        n=oh * ow, m=basis.m,
        eigenvalues=basis.eigenvalues.copy(),
        vectors=np.ascontiguousarray(gathered),
    )
    return build_plan(new_basis, (oh, ow)), new_basis


def averaging_merge(m: int, channels: int) -> MergeWeights:
    """Merge whose output channel c is the mean of its 2m restored copies."""
    return MergeWeights(mode="mean")


def selector_merge(m: int, channels: int, t: int) -> MergeWeights:
    """Concat projection that passes sequence t through unchanged."""
    proj = np.zeros((2 * m * channels, channels), dtype=np.float64)
    for c in range(channels):
        proj[t * channels + c, c] = 1.0
    return MergeWeights(mode="concat_proj", projection=proj,
                        bias=np.zeros(channels, dtype=np.float64))
