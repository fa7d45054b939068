# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: xorshift64* fill, CSR matvec, cyclic Jacobi, Sturm
counts, and the sequential scan recurrences. Semantics match backends.pure."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, sqrt

cnp.import_array()

NAME = "compiled"

cdef unsigned long long _MULT = 0x2545F4914F6CDD1DULL


def xorshift_fill(state, Py_ssize_t count):
    cdef unsigned long long s = <unsigned long long> (state & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            s ^= s >> 12
            s ^= s << 25
            s ^= s >> 27
            o[i] = <double> ((s * _MULT) >> 40) / 16777216.0
    return out, int(s)


def csr_matvec(long long[::1] row_ptr, long long[::1] col_idx,
               double[::1] values, double[::1] x):
    cdef Py_ssize_t n = row_ptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef long long j
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(row_ptr[i], row_ptr[i + 1]):
                acc += values[j] * x[col_idx[j]]
            o[i] = acc
    return out


def jacobi_eigh(a_in, double tol, int max_sweeps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.array(
        a_in, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    # eigenvectors accumulated transposed so rotations touch contiguous rows
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vt = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] am = a
    cdef double[:, ::1] vm = vt
    cdef long long rotations = 0
    cdef int sweep = 0
    cdef bint converged = 0
    cdef Py_ssize_t p, q, i
    cdef double off, apq, app, aqq, tau, t, c, s, rp, rq

    if n < 2:
        return np.diag(a).copy(), vt, 0, 0, True

    with nogil:
        while sweep < max_sweeps:
            off = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    if fabs(am[p, q]) > off:
                        off = fabs(am[p, q])
            if off < tol:
                converged = 1
                break
            sweep += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = am[p, q]
                    if fabs(apq) < tol:
                        continue
                    app = am[p, p]
                    aqq = am[q, q]
                    tau = (aqq - app) / (2.0 * apq)
                    if tau >= 0.0:
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    # by symmetry the column transform equals the row one
                    for i in range(n):
                        rp = am[p, i]
                        rq = am[q, i]
                        am[p, i] = c * rp - s * rq
                        am[q, i] = s * rp + c * rq
                    for i in range(n):
                        am[i, p] = am[p, i]
                        am[i, q] = am[q, i]
                    am[p, p] = app - t * apq
                    am[q, q] = aqq + t * apq
                    am[p, q] = 0.0
                    am[q, p] = 0.0
                    for i in range(n):
                        rp = vm[p, i]
                        rq = vm[q, i]
                        vm[p, i] = c * rp - s * rq
                        vm[q, i] = s * rp + c * rq
                    rotations += 1
        if not converged:
            off = 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    if fabs(am[p, q]) > off:
                        off = fabs(am[p, q])
            if off < tol:
                converged = 1
    return (np.diag(a).copy(), np.ascontiguousarray(vt.T), sweep,
            int(rotations), bool(converged))


def sturm_count(double[::1] diag, double[::1] off, double x, double pivmin):
    cdef Py_ssize_t k = diag.shape[0]
    cdef int count = 0
    cdef double q = 1.0
    cdef Py_ssize_t i
    with nogil:
        for i in range(k):
            if i == 0:
                q = diag[0] - x
            else:
                q = diag[i] - x - off[i - 1] * off[i - 1] / q
            if fabs(q) < pivmin:
                q = -pivmin
            if q < 0.0:
                count += 1
    return count


def recurrent_scan_diag(double[::1] abar, double[::1] bbar, double[::1] c,
                        double[::1] x):
    cdef Py_ssize_t length = x.shape[0]
    cdef Py_ssize_t n = abar.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.empty(length, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h = np.zeros(n, dtype=np.float64)
    cdef double[::1] ym = y
    cdef double[::1] hm = h
    cdef Py_ssize_t t, i
    cdef double acc, xt
    with nogil:
        for t in range(length):
            xt = x[t]
            acc = 0.0
            for i in range(n):
                hm[i] = abar[i] * hm[i] + bbar[i] * xt
                acc += hm[i] * c[i]
            ym[t] = acc
    return y


def selective_scan_core(double[:, ::1] u, double[::1] delta,
                        double[:, ::1] bmat, double[:, ::1] cmat,
                        double[::1] a_diag, bint exact):
    cdef Py_ssize_t length = u.shape[0]
    cdef Py_ssize_t chans = u.shape[1]
    cdef Py_ssize_t n = a_diag.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty(
        (length, chans), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h = np.zeros(
        (chans, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] acoef = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bcoef = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] om = out
    cdef double[:, ::1] hm = h
    cdef double[::1] ac = acoef
    cdef double[::1] bc = bcoef
    cdef Py_ssize_t t, ch, i
    cdef double dt, acc, uc
    with nogil:
        for t in range(length):
            dt = delta[t]
            for i in range(n):
                ac[i] = exp(dt * a_diag[i])
                if exact:
                    if fabs(a_diag[i]) < 1e-12:
                        bc[i] = dt * bmat[t, i]
                    else:
                        bc[i] = expm1(dt * a_diag[i]) / a_diag[i] * bmat[t, i]
                else:
                    bc[i] = dt * bmat[t, i]
            for ch in range(chans):
                uc = u[t, ch]
                acc = 0.0
                for i in range(n):
                    hm[ch, i] = ac[i] * hm[ch, i] + uc * bc[i]
                    acc += hm[ch, i] * cmat[t, i]
                om[t, ch] = acc
    return out
