# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

BACKEND = "cython"


cdef inline void _matvec(double[:, :] A, double[:] x, double[:] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += A[i, j] * x[j]
        out[i] = s


def _snapshot_count(nsteps, stride):
    """Every stride-th step plus the final step."""
    return nsteps // stride + 1 + (1 if nsteps % stride else 0)


def feedback_trace(K, lags, arrival, n_arrival, Py_ssize_t nsteps):
    cdef double[:, :] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[:] lv = np.ascontiguousarray(lags, dtype=np.float64)
    cdef double[:, :] av = np.ascontiguousarray(arrival, dtype=np.float64)
    cdef long long[:] na = np.ascontiguousarray(n_arrival, dtype=np.int64)
    cdef Py_ssize_t n = Kv.shape[0]
    u_arr = np.zeros((nsteps + 1, n))
    cdef double[:, :] u = u_arr
    cdef double[:] v = np.zeros(n)
    cdef Py_ssize_t k, i, j, p
    cdef double s, f, acc
    with nogil:
        for k in range(nsteps + 1):
            for i in range(n):
                if k <= na[i]:
                    v[i] = av[k, i]
                else:
                    s = k - lv[i]
                    j = <Py_ssize_t>floor(s)
                    f = s - j
                    if f == 0.0:
                        v[i] = u[j, i]
                    else:
                        v[i] = (1.0 - f) * u[j, i] + f * u[j + 1, i]
            for i in range(n):
                acc = 0.0
                for p in range(n):
                    acc = acc + Kv[i, p] * v[p]
                u[k, i] = acc
    return u_arr


def delay_trace(stencil, xbar, Py_ssize_t P, y0, double dx, d, double dt, Py_ssize_t nsteps,
                lag_idx, lag_frac, wq, M0, C):
    cdef double[:, :, :] S = np.ascontiguousarray(stencil, dtype=np.float64)
    xbar_arr = np.ascontiguousarray(xbar, dtype=np.float64)
    cdef double[:, :] xb = xbar_arr
    cdef double[:, :] Y0 = np.ascontiguousarray(y0, dtype=np.float64)
    cdef double[:] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef long long[:, :] li = np.ascontiguousarray(lag_idx, dtype=np.int64)
    cdef double[:, :] lf = np.ascontiguousarray(lag_frac, dtype=np.float64)
    cdef double[:] w = np.ascontiguousarray(wq, dtype=np.float64)
    cdef double[:, :] M = np.ascontiguousarray(M0, dtype=np.float64)
    cdef double[:] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t R = S.shape[0] - 1
    cdef Py_ssize_t m1 = Y0.shape[0]
    cdef Py_ssize_t n = Y0.shape[1]
    b_arr = np.zeros((nsteps + 1, n))
    cdef double[:, :] b = b_arr
    cdef double[:] F = np.zeros(n)
    cdef double[:] A = np.zeros(n)
    cdef double[:] rhs = np.zeros(n)
    cdef double[:] bk = np.zeros(n)
    cdef Py_ssize_t k, r, i, p, j, j0, q
    cdef double t, reach, tot, x, f, val, pos, g, acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for r in range(R + 1):
                for p in range(n):
                    acc = acc + S[r, i, p] * xb[P - r, p]
            b[0, i] = acc
        for k in range(1, nsteps + 1):
            t = k * dt
            for i in range(n):
                acc = 0.0
                for r in range(1, R + 1):
                    for p in range(n):
                        acc = acc + S[r, i, p] * xb[P + k - r, p]
                F[i] = acc
            for i in range(n):
                reach = dv[i] * t
                tot = 0.0
                for j in range(m1):
                    x = j * dx
                    if x <= reach + 1e-12:
                        j0 = li[j, i]
                        f = lf[j, i]
                        if j0 == 0:
                            val = f * b[k - 1, i]
                        elif f == 0.0:
                            val = b[k - j0, i]
                        else:
                            val = (1.0 - f) * b[k - j0, i] + f * b[k - j0 - 1, i]
                    else:
                        pos = (x - reach) / dx
                        q = <Py_ssize_t>floor(pos)
                        if q >= m1 - 1:
                            val = Y0[m1 - 1, i]
                        else:
                            g = pos - q
                            val = (1.0 - g) * Y0[q, i] + g * Y0[q + 1, i]
                    tot = tot + w[j] * val
                A[i] = tot
            for i in range(n):
                acc = 0.0
                for p in range(n):
                    acc = acc + S[0, i, p] * A[p]
                rhs[i] = acc + F[i]
            _matvec(M, rhs, bk, n)
            for i in range(n):
                b[k, i] = bk[i]
                xb[P + k, i] = A[i] + Cv[i] * bk[i]
    return b_arr, xbar_arr


def upwind_feedback(cells, courant, K, Py_ssize_t nsteps, Py_ssize_t stride):
    c_arr = np.array(cells, dtype=np.float64, order="C")
    cdef double[:, :] c = c_arr
    cdef double[:] cr = np.ascontiguousarray(courant, dtype=np.float64)
    cdef double[:, :] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0]
    cdef Py_ssize_t n = c.shape[1]
    snaps_arr = np.zeros((_snapshot_count(nsteps, stride), m, n))
    trace_arr = np.zeros((nsteps + 1, n))
    cdef double[:, :, :] snaps = snaps_arr
    cdef double[:, :] tr = trace_arr
    cdef double[:] bnd = np.zeros(n)
    cdef double[:] last = np.zeros(n)
    cdef Py_ssize_t k, i, j
    cdef double keep, cc
    snaps_arr[0] = c_arr
    with nogil:
        for k in range(nsteps):
            for i in range(n):
                last[i] = c[m - 1, i]
            _matvec(Kv, last, bnd, n)
            for i in range(n):
                tr[k, i] = bnd[i]
                cc = cr[i]
                keep = 1.0 - cc
                for j in range(m - 1, 0, -1):
                    c[j, i] = keep * c[j, i] + cc * c[j - 1, i]
                c[0, i] = keep * c[0, i] + cc * bnd[i]
            if (k + 1) % stride == 0:
                snaps[(k + 1) // stride, :, :] = c
        for i in range(n):
            last[i] = c[m - 1, i]
        _matvec(Kv, last, bnd, n)
        for i in range(n):
            tr[nsteps, i] = bnd[i]
    if nsteps % stride:
        snaps_arr[-1] = c_arr
    return snaps_arr, trace_arr


def upwind_delay(cells, courant, stencil, xbar, Py_ssize_t P, double dx, Py_ssize_t nsteps,
                 Py_ssize_t stride):
    c_arr = np.array(cells, dtype=np.float64, order="C")
    cdef double[:, :] c = c_arr
    cdef double[:] cr = np.ascontiguousarray(courant, dtype=np.float64)
    cdef double[:, :, :] S = np.ascontiguousarray(stencil, dtype=np.float64)
    xbar_arr = np.ascontiguousarray(xbar, dtype=np.float64)
    cdef double[:, :] xb = xbar_arr
    cdef Py_ssize_t R = S.shape[0] - 1
    cdef Py_ssize_t m = c.shape[0]
    cdef Py_ssize_t n = c.shape[1]
    snaps_arr = np.zeros((_snapshot_count(nsteps, stride), m, n))
    trace_arr = np.zeros((nsteps + 1, n))
    cdef double[:, :, :] snaps = snaps_arr
    cdef double[:, :] tr = trace_arr
    cdef Py_ssize_t k, i, j, r, p
    cdef double keep, cc, acc
    snaps_arr[0] = c_arr
    with nogil:
        for k in range(nsteps + 1):
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    acc = acc + c[j, i]
                xb[P + k, i] = acc * dx
            for i in range(n):
                acc = 0.0
                for r in range(R + 1):
                    for p in range(n):
                        acc = acc + S[r, i, p] * xb[P + k - r, p]
                tr[k, i] = acc
            if k == nsteps:
                break
            for i in range(n):
                cc = cr[i]
                keep = 1.0 - cc
                for j in range(m - 1, 0, -1):
                    c[j, i] = keep * c[j, i] + cc * c[j - 1, i]
                c[0, i] = keep * c[0, i] + cc * tr[k, i]
            if (k + 1) % stride == 0:
                snaps[(k + 1) // stride, :, :] = c
    if nsteps % stride:
        snaps_arr[-1] = c_arr
    return snaps_arr, trace_arr, xbar_arr
