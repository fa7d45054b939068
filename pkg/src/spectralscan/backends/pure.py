"""Pure NumPy implementations of the hot kernels.

Mirrors the compiled extension's surface. Integer-valued results (RNG draws,
Sturm counts) are bit-identical to the compiled backend; float kernels agree
up to summation reassociation (<= a few ulp).
"""

from __future__ import annotations

import numpy as np

NAME = "pure"

_MASK64 = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D


def xorshift_fill(state: int, count: int):
    """Draw `count` floats in [0,1) from the xorshift64* stream.

    Returns (values, new_state). Each value is top-24-bits / 2^24.
    """
    out = np.empty(count, dtype=np.float64)
    s = state & _MASK64
    for i in range(count):
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        out[i] = float(((s * _MULT) & _MASK64) >> 40)
    out /= 16777216.0
    return out, s


def csr_matvec(row_ptr, col_idx, values, x):
    n = row_ptr.shape[0] - 1
    if values.shape[0] == 0:
        return np.zeros(n, dtype=np.float64)
    prod = values * x[col_idx]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(row_ptr))
    return np.bincount(rows, weights=prod, minlength=n)


def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi on a symmetric matrix; rotations below `tol` are skipped.

    Returns (eigenvalues unsorted, eigenvector columns, sweeps, rotations,
    converged flag). Convergence: every off-diagonal magnitude < tol.
    """
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    n = a.shape[0]
    v = np.eye(n, dtype=np.float64)
    rotations = 0
    if n < 2:
        return np.diag(a).copy(), v, 0, 0, True
    sweeps = 0
    for sweep in range(1, max_sweeps + 1):
        sweeps = sweep
        off = np.abs(a - np.diag(np.diag(a))).max()
        if off < tol:
            return np.diag(a).copy(), v, sweep - 1, rotations, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < tol:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                a[:, p] = new_p
                a[p, :] = new_p
                a[:, q] = new_q
                a[q, :] = new_q
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
                rotations += 1
    off = np.abs(a - np.diag(np.diag(a))).max()
    return np.diag(a).copy(), v, sweeps, rotations, bool(off < tol)


def sturm_count(diag, off, x, pivmin):
    """Number of eigenvalues of the symmetric tridiagonal strictly below x."""
    k = diag.shape[0]
    count = 0
    q = 1.0
    for i in range(k):
        if i == 0:
            q = diag[0] - x
        else:
            q = diag[i] - x - off[i - 1] * off[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


def recurrent_scan_diag(abar, bbar, c, x):
    """h_t = abar*h_{t-1} + bbar*x_t; y_t = <c, h_t>; h_0 = 0."""
    length = x.shape[0]
    n = abar.shape[0]
    h = np.zeros(n, dtype=np.float64)
    y = np.empty(length, dtype=np.float64)
    for t in range(length):
        h = abar * h + bbar * x[t]
        y[t] = h @ c
    return y


def selective_scan_core(u, delta, bmat, cmat, a_diag, exact):
    """Diagonal selective scan over a length-L sequence of C-channel tokens.

    u (L,C) drives the state, delta (L,) scales the discretization, bmat and
    cmat (L,N) are per-step input/readout vectors, a_diag (N,) is the
    continuous-time diagonal. exact selects the full ZOH input coefficient
    expm1(delta*a)/a instead of the delta*b shortcut.
    """
    length, chans = u.shape
    n = a_diag.shape[0]
    h = np.zeros((chans, n), dtype=np.float64)
    out = np.empty((length, chans), dtype=np.float64)
    tiny_a = np.abs(a_diag) < 1e-12
    safe_a = np.where(tiny_a, 1.0, a_diag)
    for t in range(length):
        dt = delta[t]
        acoef = np.exp(dt * a_diag)
        if exact:
            bcoef = np.where(tiny_a, dt, np.expm1(dt * a_diag) / safe_a) * bmat[t]
        else:
            bcoef = dt * bmat[t]
        h *= acoef
        h += np.outer(u[t], bcoef)
        out[t] = h @ cmat[t]
    return out
