"""Smallest eigenpairs of the normalized Laplacian.

Two routes are provided and kept independent so one can check the other:

* ``dense_eig``: cyclic Jacobi rotations on a dense symmetric matrix until
  every off-diagonal magnitude is below 1e-12.
* ``lanczos_smallest``: Lanczos with full reorthogonalization and a fixed
  all-ones start vector. The projected tridiagonal problem is solved by
  Sturm-count bisection plus inverse iteration, so the counted work stays
  proportional to the Krylov dimension rather than its cube. Small problems
  (n <= dense_threshold) fall through to the dense route.

Eigenvector signs are canonicalized so the first entry above ``eps_sign`` in
magnitude is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backends
from .errors import (
    ArgumentError,
    ConvergenceError,
    DegenerateVectorError,
)
from .flops import FlopCounter, count
from .graph import SparseSymMatrix
from .rng import Xorshift64Star

_SAFMIN = 2.2250738585072014e-308
_BREAKDOWN = 1e-14
_RESTART_SEED = 0xC0FFEE


@dataclass(frozen=True)
class SpectralBasis:
    """Ascending eigenvalues with column-stored eigenvectors.

    Solver output has unit-norm columns with small residuals; bases produced
    by pooled downsampling reuse this container without those guarantees.
    """

    n: int
    m: int
    eigenvalues: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class EigConfig:
    m: int
    tol: float = 1e-8
    max_iter: int | None = None
    eps_sign: float = 1e-12
    dense_threshold: int = 64


@dataclass
class EigReport:
    mode: str
    iterations: int
    residuals: np.ndarray
    orthogonality_error: float
    converged: bool
    rotations: int = 0
    breakdown_restarts: int = 0
    flops: int = 0
    warnings: list[str] = field(default_factory=list)


def dense_eig(a: np.ndarray, counter: FlopCounter | None = None,
              tol: float = 1e-12, max_sweeps: int = 100):
    """Full ascending spectrum of a dense symmetric matrix via cyclic Jacobi."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {a.shape}")
    if a.size and np.abs(a - a.T).max() > 1e-12:
        raise ArgumentError("matrix is not symmetric within 1e-12")
    w, v, _sweeps, rotations, ok = backends.jacobi_eigh(a, tol, max_sweeps)
    if not ok:
        raise ConvergenceError(
            f"Jacobi did not reach off-diagonal {tol} in {max_sweeps} sweeps"
        )
    count(counter, "eigensolve", rotations * (12 * a.shape[0] + 12))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def canonicalize_signs(basis: SpectralBasis, eps_sign: float = 1e-12) -> SpectralBasis:
    """Flip each eigenvector so its first entry above eps_sign is positive."""
    vecs = basis.vectors.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        above = np.abs(col) > eps_sign
        if not above.any():
            raise DegenerateVectorError(
                f"eigenvector {j} has no entry above {eps_sign}"
            )
        lead = int(np.argmax(above))
        if col[lead] < 0.0:
            vecs[:, j] = -col
    return SpectralBasis(n=basis.n, m=basis.m, eigenvalues=basis.eigenvalues.copy(),
                         vectors=vecs)


def principal_angle_cosines(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Cosines of the principal angles between two column spans."""
    qu, _ = np.linalg.qr(u)
    qv, _ = np.linalg.qr(v)
    return np.linalg.svd(qu.T @ qv, compute_uv=False)


def _pivmin(off: np.ndarray) -> float:
    worst = float(np.max(off * off)) if off.size else 0.0
    return _SAFMIN * max(1.0, worst)


def _tridiag_solve(off: np.ndarray, diag: np.ndarray, b: np.ndarray,
                   pivmin: float) -> np.ndarray:
    """Solve the symmetric tridiagonal system via LU with partial pivoting.

    Near-zero pivots are replaced by +-pivmin so inverse iteration at an
    exact eigenvalue stays finite.
    """
    k = diag.shape[0]
    dl = off.astype(np.float64).copy()
    d = diag.astype(np.float64).copy()
    du = off.astype(np.float64).copy()
    du2 = np.zeros(max(k - 2, 0), dtype=np.float64)
    swap = np.zeros(max(k - 1, 0), dtype=bool)
    x = b.astype(np.float64).copy()

    for i in range(k - 1):
        if abs(d[i]) >= abs(dl[i]):
            if abs(d[i]) < pivmin:
                d[i] = pivmin if d[i] >= 0.0 else -pivmin
            fact = dl[i] / d[i]
            dl[i] = fact
            d[i + 1] -= fact * du[i]
            if i < k - 2:
                du2[i] = 0.0
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            tmp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = tmp - fact * d[i + 1]
            if i < k - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            swap[i] = True
    if abs(d[k - 1]) < pivmin:
        d[k - 1] = pivmin if d[k - 1] >= 0.0 else -pivmin

    for i in range(k - 1):
        if swap[i]:
            x[i], x[i + 1] = x[i + 1], x[i]
        x[i + 1] -= dl[i] * x[i]

    # back substitution with growth rescaling; only the direction matters
    x[k - 1] /= d[k - 1]
    if abs(x[k - 1]) > 1e250:
        x *= 1e-150
    if k > 1:
        x[k - 2] = (x[k - 2] - du[k - 2] * x[k - 1]) / d[k - 2]
        if abs(x[k - 2]) > 1e250:
            x *= 1e-150
    for i in range(k - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
        if abs(x[i]) > 1e250:
            x *= 1e-150
    return x


def _tridiag_smallest(diag: np.ndarray, off: np.ndarray, m: int,
                      counter: FlopCounter | None = None):
    """m smallest eigenpairs of a symmetric tridiagonal matrix.

    Eigenvalues by Sturm-count bisection, eigenvectors by inverse iteration
    with orthogonalization inside near-degenerate clusters.
    """
    k = diag.shape[0]
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    off = np.ascontiguousarray(off, dtype=np.float64)
    if m > k:
        raise ArgumentError(f"m={m} exceeds matrix dimension {k}")
    if k == 1:
        return diag.copy(), np.ones((1, 1), dtype=np.float64)

    pivmin = _pivmin(off)
    radius = np.zeros(k, dtype=np.float64)
    absoff = np.abs(off)
    radius[:-1] += absoff
    radius[1:] += absoff
    lo = float(np.min(diag - radius))
    hi = float(np.max(diag + radius))
    span = max(hi - lo, 1.0)
    lo -= 1e-12 * span
    hi += 1e-12 * span
    tnorm = max(abs(lo), abs(hi), 1e-30)

    vals = np.empty(m, dtype=np.float64)
    sturm_evals = 0
    for i in range(1, m + 1):
        a, b = lo, hi
        for _ in range(90):
            mid = 0.5 * (a + b)
            if backends.sturm_count(diag, off, mid, pivmin) >= i:
                b = mid
            else:
                a = mid
            sturm_evals += 1
            if b - a <= 2e-16 * max(abs(a), abs(b)) + 2.0 * pivmin:
                break
        vals[i - 1] = 0.5 * (a + b)
    count(counter, "eigensolve", sturm_evals * 4 * k)

    cluster_gap = 1e-8 * max(1.0, tnorm)
    vecs = np.zeros((k, m), dtype=np.float64)
    cluster_start = 0
    solves = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for idx in range(m):
            if idx > 0 and vals[idx] - vals[idx - 1] > cluster_gap:
                cluster_start = idx
            pert = (idx - cluster_start) * 1e-13 * max(1.0, tnorm)
            shifted = diag - (vals[idx] + pert)
            x = np.full(k, 1.0 / np.sqrt(k), dtype=np.float64)
            for sweep in range(3):
                x = _tridiag_solve(off, shifted, x, pivmin)
                solves += 1
                for c in range(cluster_start, idx):
                    x -= (vecs[:, c] @ x) * vecs[:, c]
                mx = float(np.max(np.abs(x))) if np.isfinite(x).all() else 0.0
                if mx == 0.0:
                    x = np.zeros(k)
                    x[(idx + sweep) % k] = 1.0
                else:
                    x /= mx
                x /= np.linalg.norm(x)
            for c in range(cluster_start, idx):
                x -= (vecs[:, c] @ x) * vecs[:, c]
            nrm = np.linalg.norm(x)
            if nrm == 0.0 or not np.isfinite(nrm):
                x = np.zeros(k)
                x[idx % k] = 1.0
                nrm = 1.0
            vecs[:, idx] = x / nrm
    count(counter, "eigensolve", solves * 10 * k + m * 6 * k)
    return vals, vecs


def _dense_path(lap: SparseSymMatrix, cfg: EigConfig,
                counter: FlopCounter | None):
    vals, vecs = dense_eig(lap.to_dense(), counter)
    basis = SpectralBasis(
        n=lap.n, m=cfg.m, eigenvalues=vals[: cfg.m].copy(),
        vectors=np.ascontiguousarray(vecs[:, : cfg.m]),
    )
    basis = canonicalize_signs(basis, cfg.eps_sign)
    residuals = _true_residuals(lap, basis, counter)
    report = EigReport(
        mode="dense",
        iterations=0,
        residuals=residuals,
        orthogonality_error=_orth_error(basis.vectors),
        converged=bool(np.all(residuals <= max(cfg.tol, 1e-10))),
    )
    return basis, report


def _true_residuals(lap: SparseSymMatrix, basis: SpectralBasis,
                    counter: FlopCounter | None) -> np.ndarray:
    res = np.empty(basis.m, dtype=np.float64)
    for j in range(basis.m):
        u = basis.vectors[:, j]
        r = lap.matvec(u, counter) - basis.eigenvalues[j] * u
        res[j] = np.linalg.norm(r)
    count(counter, "eigensolve", basis.m * 4 * lap.n)
    return res


def _orth_error(vectors: np.ndarray) -> float:
    gram = vectors.T @ vectors
    return float(np.abs(gram - np.eye(gram.shape[0])).max())


def _lanczos_round(lap: SparseSymMatrix, v0: np.ndarray, locked: np.ndarray,
                   m_target: int, cfg: EigConfig, budget: int,
                   stream: Xorshift64Star,
                   counter: FlopCounter | None):
    """One clean Lanczos sequence in the orthogonal complement of `locked`.

    Runs until the m_target smallest Ritz pairs of this sequence reach the
    residual target. Returns (values, vectors, iterations, restarts).
    """
    n = lap.n
    complement = n - locked.shape[1]
    m_t = min(m_target, complement)
    capacity = min(complement, 128)
    q_rows = np.empty((capacity, n), dtype=np.float64)
    q_rows[0] = v0
    alphas: list[float] = []
    betas: list[float] = []
    restarts = 0
    best_residuals: np.ndarray | None = None

    def deflate_and_reorth(w: np.ndarray, dim: int) -> np.ndarray:
        if locked.shape[1]:
            w -= locked @ (locked.T @ w)
            count(counter, "eigensolve", 4 * n * locked.shape[1])
        active = q_rows[:dim]
        w -= active.T @ (active @ w)
        count(counter, "eigensolve", 4 * n * dim)
        return w

    def fresh_direction(dim: int) -> np.ndarray | None:
        for _ in range(16):
            cand = stream.floats(n) - 0.5
            for _pass in range(2):
                cand = deflate_and_reorth(cand, dim)
            nrm = float(np.linalg.norm(cand))
            if nrm > 1e-8:
                return cand / nrm
        return None

    j = 0
    while True:
        if j + 1 > budget:
            raise ConvergenceError(
                f"iteration budget exhausted at Krylov dimension {j}",
                residuals=best_residuals, iterations=j,
            )
        q = q_rows[j]
        w = lap.matvec(q, counter)
        alpha = float(q @ w)
        w -= alpha * q
        if j > 0:
            w -= betas[-1] * q_rows[j - 1]
        count(counter, "eigensolve", 8 * n)
        alphas.append(alpha)

        norm_before = float(np.linalg.norm(w))
        w = deflate_and_reorth(w, j + 1)
        norm_after = float(np.linalg.norm(w))
        if norm_after < 0.7071 * norm_before:
            w = deflate_and_reorth(w, j + 1)
            norm_after = float(np.linalg.norm(w))
        beta = norm_after

        dim = j + 1
        final = dim >= complement
        check = final or (dim >= m_t + 1 and dim % 5 == 0) or beta < _BREAKDOWN
        if check and dim >= m_t:
            vals, small = _tridiag_smallest(
                np.asarray(alphas), np.asarray(betas), m_t, counter
            )
            bounds = abs(beta) * np.abs(small[dim - 1, :])
            if final or np.all(bounds <= 0.1 * cfg.tol):
                ritz = q_rows[:dim].T @ small
                count(counter, "eigensolve", 2 * n * dim * m_t)
                basis = SpectralBasis(n=n, m=m_t, eigenvalues=vals, vectors=ritz)
                residuals = _true_residuals(lap, basis, counter)
                best_residuals = residuals
                if np.all(residuals <= cfg.tol):
                    return vals, ritz, dim, restarts
                if final:
                    raise ConvergenceError(
                        f"Lanczos stalled at Krylov dimension {dim} with max "
                        f"residual {float(residuals.max()):.3e} > tol "
                        f"{cfg.tol:.3e}",
                        residuals=best_residuals, iterations=dim,
                    )

        if final:
            raise ConvergenceError(
                f"complement exhausted at dimension {dim} without convergence",
                residuals=best_residuals, iterations=dim,
            )

        if dim + 1 > capacity:
            capacity = min(complement, max(capacity * 2, dim + 1))
            grown = np.empty((capacity, n), dtype=np.float64)
            grown[:dim] = q_rows[:dim]
            q_rows = grown

        if beta < _BREAKDOWN:
            # this Krylov direction is exhausted; restart orthogonally
            nxt = fresh_direction(dim)
            if nxt is None:
                raise ConvergenceError(
                    f"breakdown restart failed at dimension {dim}",
                    residuals=best_residuals, iterations=dim,
                )
            q_rows[dim] = nxt
            betas.append(0.0)
            restarts += 1
        else:
            q_rows[dim] = w / beta
            count(counter, "eigensolve", n)
            betas.append(beta)
        j += 1


def lanczos_smallest(lap: SparseSymMatrix, cfg: EigConfig,
                     counter: FlopCounter | None = None):
    """m smallest eigenpairs of a sparse symmetric matrix.

    Deterministic Lanczos with full reorthogonalization, organized as
    deflated rounds. Round 0 starts from 1/sqrt(n) and converges m pairs.
    Every later round starts from the next vector of a fixed xorshift64*
    stream, deflated against all previously converged pairs, and converges
    the two smallest pairs of that complement; rounds repeat until one of
    them leaves the m smallest collected eigenvalues unchanged. A single
    Krylov sequence reaches one direction per eigenvalue and nothing outside
    its start vector's symmetry class, so without the confirmation rounds a
    symmetric fixture would yield the spectrum of an invariant subspace and
    degenerate eigenvalues would lose their multiplicity.

    Small problems (n <= cfg.dense_threshold) use the dense Jacobi route.
    Raises ConvergenceError when the residual target cannot be met within
    cfg.max_iter total iterations.
    """
    n = lap.n
    m = cfg.m
    if not 1 <= m <= n:
        raise ArgumentError(f"need 1 <= m <= n, got m={m}, n={n}")
    if cfg.tol <= 0.0:
        raise ArgumentError(f"tolerance must be positive, got {cfg.tol}")
    if n <= cfg.dense_threshold:
        return _dense_path(lap, cfg, counter)

    max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * n
    stream = Xorshift64Star(_RESTART_SEED)
    locked_vals = np.empty(0, dtype=np.float64)
    locked_vecs = np.empty((n, 0), dtype=np.float64)
    iterations = 0
    restarts = 0
    prev_bottom: np.ndarray | None = None

    for round_idx in range(4 * n):
        if round_idx == 0:
            v0 = np.full(n, 1.0 / np.sqrt(n))
        else:
            v0 = None
            for _ in range(16):
                cand = stream.floats(n) - 0.5
                if locked_vecs.shape[1]:
                    for _pass in range(2):
                        cand -= locked_vecs @ (locked_vecs.T @ cand)
                nrm = float(np.linalg.norm(cand))
                if nrm > 1e-8:
                    v0 = cand / nrm
                    break
            if v0 is None:
                break  # complement is numerically empty: spectrum complete
        m_target = m if round_idx == 0 else 2
        if locked_vecs.shape[1] >= n:
            break
        vals_r, vecs_r, used, rst = _lanczos_round(
            lap, v0, locked_vecs, m_target, cfg, max_iter - iterations,
            stream, counter,
        )
        iterations += used
        restarts += rst
        locked_vals = np.concatenate([locked_vals, vals_r])
        locked_vecs = np.hstack([locked_vecs, vecs_r])
        order = np.argsort(locked_vals, kind="stable")
        locked_vals = locked_vals[order]
        locked_vecs = locked_vecs[:, order]
        bottom = locked_vals[:m]
        if (
            prev_bottom is not None
            and bottom.shape == prev_bottom.shape
            and float(np.abs(bottom - prev_bottom).max()) <= 10.0 * cfg.tol
        ):
            break
        prev_bottom = bottom.copy()
    else:
        raise ConvergenceError(
            "deflation rounds did not stabilize",
            residuals=None, iterations=iterations,
        )

    vectors = np.ascontiguousarray(locked_vecs[:, :m])
    values = locked_vals[:m].copy()
    orth = _orth_error(vectors)
    if orth > 1e-9:
        vectors = _polish_orthogonality(vectors)
        orth = _orth_error(vectors)
    basis = SpectralBasis(n=n, m=m, eigenvalues=values, vectors=vectors)
    residuals = _true_residuals(lap, basis, counter)
    if not np.all(residuals <= cfg.tol):
        raise ConvergenceError(
            f"final residual {float(residuals.max()):.3e} exceeds tol "
            f"{cfg.tol:.3e}",
            residuals=residuals, iterations=iterations,
        )
    basis = canonicalize_signs(basis, cfg.eps_sign)
    report = EigReport(
        mode="lanczos",
        iterations=iterations,
        residuals=residuals,
        orthogonality_error=orth,
        converged=True,
        breakdown_restarts=restarts,
    )
    return basis, report


def _polish_orthogonality(vectors: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt pass; deterministic."""
    v = vectors.copy()
    for i in range(v.shape[1]):
        for p in range(i):
            v[:, i] -= (v[:, p] @ v[:, i]) * v[:, p]
        nrm = np.linalg.norm(v[:, i])
        if nrm > 0.0:
            v[:, i] /= nrm
    return v
