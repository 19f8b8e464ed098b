"""Method-of-characteristics solver for the closed-loop transport system.

Inside [0, 1] the state is a right translation, so only the boundary value
y(0, t) has to be computed: for the undelayed law u(t) = K y(1, t), and for
the delayed law b(t) = mu-weighted history of the spatial mean. Both are
advanced on a uniform dt grid; off-grid lookbacks use linear interpolation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .core import (
    SNAP_TOL,
    DelayMeasure,
    Field,
    HistoryBuffer,
    SystemSpec,
    field_l2_norm,
    field_linf_norm,
    ring_length,
    trapezoid_weights,
)
from .errors import CFLViolation, HistoryGap


class CompatibilityWarning(UserWarning):
    """Initial state and history disagree at theta = 0."""


@dataclass
class BoundaryTrace:
    """Boundary values y(0, t_k) on the uniform time grid t_k = k dt."""

    dt: float
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list
    trace: BoundaryTrace
    history: Optional[HistoryBuffer] = None
    warnings: list = field(default_factory=list)

    def __iter__(self):
        return iter(zip(self.times, self.fields))

    def __len__(self):
        return len(self.fields)

    def norms(self) -> np.ndarray:
        return np.array([field_l2_norm(f) for f in self.fields])

    def linf_norms(self) -> np.ndarray:
        return np.array([field_linf_norm(f) for f in self.fields])

    def norm_series(self):
        return list(zip(self.times.tolist(), self.norms().tolist()))

    @property
    def final(self) -> Field:
        return self.fields[-1]


def _step_count(t_final: float, dt: float) -> int:
    s = t_final / dt
    k = round(s)
    if abs(s - k) > 1e-9 * max(1.0, s):
        raise ValueError(f"dt={dt} does not divide t_final={t_final}")
    return int(k)


def _check_cfl(spec: SystemSpec, dt: float):
    limit = float(np.min(1.0 / spec.velocities)) / 4.0
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt} exceeds min transit time / 4 = {limit}")


def _snap_frac(s: np.ndarray):
    r = np.round(s)
    s = np.where(np.abs(s - r) < SNAP_TOL, r, s)
    idx = np.floor(s).astype(np.int64)
    return idx, s - idx


def evaluate_state(y0: Field, trace: np.ndarray, dt: float, d: np.ndarray, k: int) -> Field:
    """State at t_k on the grid of ``y0`` from the boundary trace b_0..b_k."""
    x = y0.grid
    t = k * dt
    out = np.empty_like(y0.values)
    if k == 0:
        return Field(x, y0.values.copy())
    for i in range(len(d)):
        reach = d[i] * t
        inside = x <= reach + 1e-12
        idx, frac = _snap_frac(x[inside] / (d[i] * dt))
        hi = trace[k - idx, i]
        lo = trace[np.maximum(k - idx - 1, 0), i]
        out[inside, i] = np.where(frac == 0.0, hi, (1.0 - frac) * hi + frac * lo)
        out[~inside, i] = np.interp(x[~inside] - reach, x, y0.values[:, i])
    return Field(x, out)


def _trajectory(y0, trace, dt, d, nsteps, stride):
    ks = list(range(0, nsteps + 1, stride))
    if ks[-1] != nsteps:
        ks.append(nsteps)
    fields = [evaluate_state(y0, trace, dt, d, k) for k in ks]
    return np.array(ks) * dt, fields


def solve_moc(spec: SystemSpec, y0: Field, t_final: float, dt: float, stride: int = 1) -> Trajectory:
    """Exact characteristics solution of y_t + D y_x = 0, y(0, t) = K y(1, t)."""
    if spec.has_delay:
        raise ValueError("use solve_moc_delay for systems with a delay measure")
    _check_cfl(spec, dt)
    nsteps = _step_count(t_final, dt)
    d = spec.velocities
    n = spec.n
    if y0.n != n:
        raise ValueError(f"initial field has {y0.n} components, system has {n}")
    transit = 1.0 / d
    # last step at which initial data still arrives at x = 1
    n_arrival = np.floor(transit / dt + SNAP_TOL).astype(np.int64)
    lags = transit / dt
    lags = np.where(np.abs(lags - np.round(lags)) < SNAP_TOL, np.round(lags), lags)
    ks = np.arange(nsteps + 1)
    arrival = np.zeros((nsteps + 1, n))
    for i in range(n):
        live = ks <= n_arrival[i]
        pts = np.clip(1.0 - d[i] * ks[live] * dt, 0.0, 1.0)
        arrival[live, i] = np.interp(pts, y0.grid, y0.values[:, i])
    u = kernels.feedback_trace(spec.coupling, lags, arrival, n_arrival, nsteps)
    times, fields = _trajectory(y0, u, dt, d, nsteps, stride)
    return Trajectory(times, fields, BoundaryTrace(dt, u))


def delay_stencil(mu: DelayMeasure, n: int, dt: float) -> np.ndarray:
    """Weights S_r with  b(t_k) = sum_r S_r xbar(t_k - r dt)  for piecewise-linear xbar.

    Atoms split between the two neighbouring grid lags; density pieces are
    integrated exactly against the hat basis.
    """
    R = int(math.ceil(1.0 / dt - SNAP_TOL)) + 1
    S = np.zeros((R + 1, n, n))
    for th, w in mu.atoms:
        s = -th / dt
        if abs(s - round(s)) < SNAP_TOL:
            s = float(round(s))
        r0 = int(math.floor(s))
        f = s - r0
        S[r0] += (1.0 - f) * w
        if f > 0.0:
            S[r0 + 1] += f * w
    for a, b, v in mu.pieces():
        sa, sb = -b / dt, -a / dt
        for r in range(max(0, int(math.floor(sa)) - 1), min(R, int(math.ceil(sb)) + 1) + 1):
            c = _hat_antiderivative(sb - r) - _hat_antiderivative(sa - r)
            if c:
                S[r] += dt * c * v
    return S


def _hat_antiderivative(z: float) -> float:
    if z <= -1.0:
        return 0.0
    if z <= 0.0:
        return 0.5 * (z + 1.0) ** 2
    if z <= 1.0:
        return 1.0 - 0.5 * (1.0 - z) ** 2
    return 1.0


def history_means(phi: HistoryBuffer, dt: float, count: int) -> np.ndarray:
    """Spatial means of the history at theta = -count*dt, ..., -dt (oldest first)."""
    if not phi.covers_unit_window():
        raise HistoryGap(f"history covers only {phi.lookback:.6g} < 1 time units")
    out = np.zeros((count, phi.snapshots[-1].n))
    for r in range(1, count + 1):
        theta = max(-r * dt, -phi.lookback)
        out[count - r] = phi.mean_at(theta)
    return out


def solve_moc_delay(
    spec: SystemSpec,
    y0: Field,
    phi: HistoryBuffer,
    t_final: float,
    dt: float,
    stride: int = 1,
) -> Trajectory:
    """Characteristics solution with y(0, t) = int_0^1 int_{-1}^0 dmu(theta) y(x, t + theta) dx."""
    if not spec.has_delay:
        raise ValueError("solve_moc_delay needs a delay measure")
    _check_cfl(spec, dt)
    nsteps = _step_count(t_final, dt)
    d = spec.velocities
    n = spec.n
    if y0.n != n:
        raise ValueError(f"initial field has {y0.n} components, system has {n}")
    if not phi.covers_unit_window():
        raise HistoryGap(f"history covers only {phi.lookback:.6g} < 1 time units")
    notes = []
    gap = float(np.max(np.abs(phi.snapshots[-1].evaluate(y0.grid) - y0.values)))
    if gap > 1e-9:
        msg = f"initial state differs from history at theta=0 by {gap:.3g}"
        warnings.warn(msg, CompatibilityWarning, stacklevel=2)
        notes.append(msg)

    S = delay_stencil(spec.delay, n, dt)
    R = S.shape[0] - 1
    P = R
    xbar = np.zeros((P + nsteps + 1, n))
    xbar[:P] = history_means(phi, dt, P)
    xbar[P] = y0.mean()

    m = y0.m
    if not np.allclose(np.diff(y0.grid), 1.0 / m, rtol=0, atol=1e-12):
        raise ValueError("solve_moc_delay needs a uniform grid")
    dx = 1.0 / m
    lag_idx, lag_frac = _snap_frac(y0.grid[:, None] / (d[None, :] * dt))
    wq = trapezoid_weights(m)
    C = np.array([(wq * np.where(lag_idx[:, i] == 0, 1.0 - lag_frac[:, i], 0.0)).sum() for i in range(n)])
    M0 = np.linalg.inv(np.eye(n) - S[0] * C[None, :])
    b, xbar = kernels.delay_trace(S, xbar, P, y0.values, dx, d, dt, nsteps, lag_idx, lag_frac, wq, M0, C)

    times, fields = _trajectory(y0, b, dt, d, nsteps, stride)
    hist = _history_after(y0, b, dt, d, nsteps, phi)
    return Trajectory(times, fields, BoundaryTrace(dt, b), history=hist, warnings=notes)


def _history_after(y0, b, dt, d, nsteps, phi):
    """History ring at t_final, falling back to phi for times before 0."""
    L = ring_length(dt)
    snaps = []
    for k in range(nsteps - L + 1, nsteps + 1):
        if k >= 0:
            snaps.append(evaluate_state(y0, b, dt, d, k))
        else:
            snaps.append(phi.query(max(k * dt, -phi.lookback)))
    return HistoryBuffer(dt, nsteps * dt + phi.anchor_time, snaps)
