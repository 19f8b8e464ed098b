"""Pure-Python/numpy time-stepping kernels.

Reference backend; ``_kernels_c`` (Cython) implements the same functions with
identical signatures. ``poshyp.kernels`` picks one at import time.
"""
import math

import numpy as np

BACKEND = "python"


def _snapshot_count(nsteps, stride):
    """Every stride-th step plus the final step."""
    return nsteps // stride + 1 + (1 if nsteps % stride else 0)


def feedback_trace(K, lags, arrival, n_arrival, nsteps):
    """Boundary recursion u_k = K v_k of the undelayed closed loop.

    v_i(t_k) is ``arrival[k, i]`` (initial data reaching x = 1) while
    ``k <= n_arrival[i]``, afterwards u_i at the fractional lag
    ``k - lags[i]``, linearly interpolated.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    u = np.zeros((nsteps + 1, n))
    v = np.zeros(n)
    for k in range(nsteps + 1):
        for i in range(n):
            if k <= n_arrival[i]:
                v[i] = arrival[k, i]
            else:
                s = k - lags[i]
                j = int(math.floor(s))
                f = s - j
                v[i] = u[j, i] if f == 0.0 else (1.0 - f) * u[j, i] + f * u[j + 1, i]
        u[k] = K @ v
    return u


def delay_trace(stencil, xbar, P, y0, dx, d, dt, nsteps, lag_idx, lag_frac, wq, M0, C):
    """Boundary trace b_k and spatial means xbar for the delayed boundary law.

    ``xbar`` has ``P + nsteps + 1`` rows; rows ``0..P`` hold the history
    means up to t = 0 and are read only. Row ``P + k`` is filled with the
    trapezoid mean at t_k. ``stencil[r]`` multiplies xbar at lag r steps.
    ``lag_idx/lag_frac`` give the characteristic lag x_j / (d_i dt) per grid
    point; ``wq`` are trapezoid weights; ``C`` is the weight of b_k in
    xbar_k; ``M0 = (I - stencil[0] diag(C))^{-1}``.
    """
    R = stencil.shape[0] - 1
    m1, n = y0.shape
    x = np.arange(m1) * dx
    b = np.zeros((nsteps + 1, n))
    b[0] = np.einsum("rij,rj->i", stencil, xbar[P - R:P + 1][::-1])
    for k in range(1, nsteps + 1):
        t = k * dt
        # lags 1..R; lag 0 involves b_k itself and is folded into M0
        F = np.einsum("rij,rj->i", stencil[1:], xbar[P + k - R:P + k][::-1])
        A = np.empty(n)
        for i in range(n):
            reach = d[i] * t
            inside = x <= reach + 1e-12
            j0 = lag_idx[:, i]
            f = lag_frac[:, i]
            hi = b[np.clip(k - j0, 0, k), i]
            lo = b[np.clip(k - j0 - 1, 0, k), i]
            traced = np.where(j0 == 0, f * b[k - 1, i], np.where(f == 0.0, hi, (1.0 - f) * hi + f * lo))
            carried = np.interp(x - reach, x, y0[:, i])
            A[i] = float(wq @ np.where(inside, traced, carried))
        bk = M0 @ (stencil[0] @ A + F)
        b[k] = bk
        xbar[P + k] = A + C * bk
    return b, xbar


def upwind_feedback(cells, courant, K, nsteps, stride):
    """First-order upwind with inflow K @ (last cell); returns snapshots and trace."""
    c = np.array(cells, dtype=float)
    m, n = c.shape
    nsnap = _snapshot_count(nsteps, stride)
    snaps = np.zeros((nsnap, m, n))
    trace = np.zeros((nsteps + 1, n))
    snaps[0] = c
    keep = 1.0 - courant
    for k in range(nsteps):
        bnd = K @ c[m - 1]
        trace[k] = bnd
        new = np.empty_like(c)
        new[0] = keep * c[0] + courant * bnd
        new[1:] = keep * c[1:] + courant * c[:-1]
        c = new
        if (k + 1) % stride == 0:
            snaps[(k + 1) // stride] = c
    trace[nsteps] = K @ c[m - 1]
    if nsteps % stride:
        snaps[-1] = c
    return snaps, trace


def upwind_delay(cells, courant, stencil, xbar, P, dx, nsteps, stride):
    """First-order upwind with inflow from the delayed mean functional.

    ``xbar`` rows ``0..P-1`` hold history means at t = -P dt .. -dt; rows
    from ``P`` on are overwritten with cell-average means as the run advances.
    """
    c = np.array(cells, dtype=float)
    m, n = c.shape
    R = stencil.shape[0] - 1
    nsnap = _snapshot_count(nsteps, stride)
    snaps = np.zeros((nsnap, m, n))
    trace = np.zeros((nsteps + 1, n))
    snaps[0] = c
    keep = 1.0 - courant
    for k in range(nsteps + 1):
        xbar[P + k] = c.sum(axis=0) * dx
        bnd = np.zeros(n)
        for r in range(R + 1):
            bnd += stencil[r] @ xbar[P + k - r]
        trace[k] = bnd
        if k == nsteps:
            break
        new = np.empty_like(c)
        new[0] = keep * c[0] + courant * bnd
        new[1:] = keep * c[1:] + courant * c[:-1]
        c = new
        if (k + 1) % stride == 0:
            snaps[(k + 1) // stride] = c
    if nsteps % stride:
        snaps[-1] = c
    return snaps, trace, xbar
