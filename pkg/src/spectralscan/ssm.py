"""Discretized state-space scans and the full block/network forward pass.

The state matrix is diagonal throughout (stored as an N-vector with strictly
negative entries for stability). Zero-order-hold discretization gives
Abar = exp(delta * a) elementwise; the input coefficient is delta * b by
default, with the exact expm1(delta * a)/a * b form behind zoh_mode="exact".
Scan accumulation is float64 everywhere; weights are float32 storage.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import ArgumentError, NumericError, ShapeError
from .flops import FlopCounter, count
from .graph import GraphConfig
from .eigen import EigConfig
from .images import ImageTensor
from .patches import FeatureMap, rotation_normalized_features
from .pipeline import build_traversal
from .traversal import (
    TraversalPlan,
    apply_scan,
    downsample_plan,
    merge_scan,
    pool_indices,
)
from .weights import BlockWeights, ModelConfig, ModelWeights, S6Weights

_LN_EPS = 1e-6


@dataclass(frozen=True)
class SsmParams:
    """Continuous-time diagonal SSM: state dim N, a<0 for stability."""

    state_dim: int
    a_diag: np.ndarray   # (N,)
    b: np.ndarray        # (N,)
    c: np.ndarray        # (N,)
    delta: float

    def __post_init__(self):
        n = self.state_dim
        for name, arr in (("a_diag", self.a_diag), ("b", self.b), ("c", self.c)):
            if arr.shape != (n,):
                raise ShapeError(f"{name} must have shape ({n},), got {arr.shape}")

    @property
    def stable(self) -> bool:
        return bool(np.all(self.a_diag < 0.0))


@dataclass(frozen=True)
class DiscretizedParams:
    abar: np.ndarray     # (N,)
    bbar: np.ndarray     # (N,)


def discretize_zoh(p: SsmParams, mode: str = "approx") -> DiscretizedParams:
    """Abar = exp(delta*a); bbar = delta*b, or expm1(delta*a)/a * b when exact."""
    if p.delta <= 0.0:
        raise ArgumentError(f"delta must be positive, got {p.delta}")
    if mode not in ("approx", "exact"):
        raise ArgumentError(f"zoh mode must be approx or exact, got {mode!r}")
    a = np.asarray(p.a_diag, dtype=np.float64)
    b = np.asarray(p.b, dtype=np.float64)
    abar = np.exp(p.delta * a)
    if mode == "approx":
        bbar = p.delta * b
    else:
        tiny = np.abs(a) < 1e-12
        safe = np.where(tiny, 1.0, a)
        bbar = np.where(tiny, p.delta, np.expm1(p.delta * a) / safe) * b
    return DiscretizedParams(abar=abar, bbar=bbar)


def recurrent_scan(d: DiscretizedParams, c: np.ndarray, x: np.ndarray,
                   counter: FlopCounter | None = None) -> np.ndarray:
    """h_t = abar h_{t-1} + bbar x_t, y_t = <c, h_t>, from h_0 = 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return np.empty(0, dtype=np.float64)
    n = d.abar.shape[0]
    count(counter, "scan", x.shape[0] * 6 * n)
    return backends.recurrent_scan_diag(
        np.ascontiguousarray(d.abar, dtype=np.float64),
        np.ascontiguousarray(d.bbar, dtype=np.float64),
        np.ascontiguousarray(c, dtype=np.float64),
        np.ascontiguousarray(x),
    )


def conv_kernel(d: DiscretizedParams, c: np.ndarray, length: int) -> np.ndarray:
    """K[s] = <c, abar^s * bbar> for s = 0..length-1."""
    if length < 1:
        raise ArgumentError(f"kernel length must be >= 1, got {length}")
    n = d.abar.shape[0]
    powers = np.ones((length, n), dtype=np.float64)
    if length > 1:
        powers[1:] = np.cumprod(np.broadcast_to(d.abar, (length - 1, n)), axis=0)
    return powers @ (np.asarray(c, dtype=np.float64) * d.bbar)


def conv_scan(kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Causal correlation y_t = sum_s K[s] x_{t-s}; the parallel form of the scan."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return np.empty(0, dtype=np.float64)
    return np.convolve(x, kernel)[: x.shape[0]]


def _softplus(v: np.ndarray) -> np.ndarray:
    out = np.where(v > 30.0, v, np.log1p(np.exp(np.minimum(v, 30.0))))
    return out


def selective_scan(w: S6Weights, x: np.ndarray, zoh_mode: str = "approx",
                   counter: FlopCounter | None = None) -> np.ndarray:
    """Data-dependent scan over a (L, C) sequence.

    Per step: delta = softplus(w_delta . x + b_delta), B = W_b x + b_b,
    C = W_c x + b_c; the projected input W_in x drives a diagonal recurrence
    per channel, read out through C and the output projection.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (L, C) sequence, got shape {x.shape}")
    length, chans = x.shape
    if chans != w.w_in.shape[1]:
        raise ShapeError(f"sequence has {chans} channels, weights expect {w.w_in.shape[1]}")
    if length == 0:
        return np.empty((0, chans), dtype=np.float64)
    w_in = w.w_in.astype(np.float64)
    w_delta = w.w_delta.astype(np.float64)
    w_b = w.w_b.astype(np.float64)
    w_c = w.w_c.astype(np.float64)
    a = -np.exp(w.a_log.astype(np.float64))
    n = a.shape[0]

    delta = _softplus(x @ w_delta + float(w.b_delta))
    bmat = x @ w_b.T + w.b_b.astype(np.float64)
    cmat = x @ w_c.T + w.b_c.astype(np.float64)
    u = x @ w_in.T
    seq = backends.selective_scan_core(
        np.ascontiguousarray(u), np.ascontiguousarray(delta),
        np.ascontiguousarray(bmat), np.ascontiguousarray(cmat),
        np.ascontiguousarray(a), zoh_mode == "exact",
    )
    y = seq @ w.w_out.astype(np.float64).T + w.b_out.astype(np.float64)
    count(counter, "scan",
          length * (2 * chans * (2 * n + 2) + 4 * chans * n + 3 * n)
          + 2 * length * chans * chans * 3)
    if not np.isfinite(y).all():
        bad = int(np.nonzero(~np.isfinite(y).all(axis=1))[0][0])
        raise NumericError(f"non-finite scan output at step {bad}", step=bad)
    return y


def layer_norm(tokens: np.ndarray) -> np.ndarray:
    """Per-token normalization over channels (no learned affine)."""
    mean = tokens.mean(axis=1, keepdims=True)
    centered = tokens - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    return centered / np.sqrt(var + _LN_EPS)


def block_forward(fm: FeatureMap, plan: TraversalPlan, w: BlockWeights,
                  zoh_mode: str = "approx", counter: FlopCounter | None = None,
                  parallel: bool = False) -> FeatureMap:
    """One block: normalize, scan the 2m planned sequences, merge, residual."""
    normed = FeatureMap(
        hp=fm.hp, wp=fm.wp, channels=fm.channels,
        data=layer_norm(fm.tokens).reshape(fm.data.shape),
    )
    seqs = apply_scan(normed, plan)

    def run(t: int) -> np.ndarray:
        return selective_scan(w.s6, seqs[t], zoh_mode, counter)

    if parallel and seqs.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=min(8, seqs.shape[0])) as pool:
            scanned = np.stack(list(pool.map(run, range(seqs.shape[0]))))
    else:
        scanned = np.stack([run(t) for t in range(seqs.shape[0])])
    merged = merge_scan(scanned, plan, w.merge)
    if merged.channels != fm.channels:
        raise ShapeError(
            f"merge produced {merged.channels} channels, expected {fm.channels}"
        )
    return FeatureMap(hp=fm.hp, wp=fm.wp, channels=fm.channels,
                      data=fm.data + merged.data)


def network_forward(img: ImageTensor, weights: ModelWeights, cfg: ModelConfig,
                    counter: FlopCounter | None = None,
                    parallel: bool = False) -> np.ndarray:
    """Full forward pass: rotation-normalized stem, one traversal build, block
    stack with pooled downsampling between layers, mean pool, classifier.

    Downsampling between layers is skipped once the token grid has an odd
    side, so layouts deeper than the grid's halving depth still run.
    """
    if img.height != img.width and any(q % 2 for q in cfg.rfn_turns):
        raise ShapeError(
            f"square image required for odd turns, got {img.height}x{img.width}"
        )
    fm = rotation_normalized_features(img, weights.stem, cfg.rfn_turns,
                                      counter, parallel)
    if fm.hp * fm.wp < 2:
        raise ArgumentError("need at least 2 patches to build a traversal")
    build = build_traversal(
        fm,
        GraphConfig(k=cfg.k),
        EigConfig(m=cfg.m),
        counter,
    )
    plan, basis = build.plan, build.basis
    for li, layer in enumerate(weights.blocks):
        for block in layer:
            fm = block_forward(fm, plan, block, cfg.zoh_mode, counter, parallel)
        last = li == len(weights.blocks) - 1
        if not last and fm.hp % 2 == 0 and fm.wp % 2 == 0:
            fm, pool = pool_indices(fm)
            plan, basis = downsample_plan(plan, basis, pool)
    pooled = fm.tokens.mean(axis=0)
    scores = pooled @ weights.head.astype(np.float64)
    count(counter, "scan", 2 * pooled.shape[0] * scores.shape[0])
    return scores
