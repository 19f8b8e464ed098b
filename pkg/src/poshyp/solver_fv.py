"""First-order upwind finite-volume discretization of the closed loop.

Serves as an independent check on the characteristics solver and supplies
the discrete operators used by the resolvent check in ``analysis``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import Field, HistoryBuffer, SystemSpec, uniform_grid
from .errors import CFLViolation
from .solver_exact import BoundaryTrace, delay_stencil, history_means

CFL_SLACK = 1e-12


@dataclass(frozen=True)
class FvState:
    cells: np.ndarray  # (m, n) cell averages
    dx: float
    t: float

    @property
    def m(self) -> int:
        return self.cells.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.dx

    def mean(self) -> np.ndarray:
        return self.cells.sum(axis=0) * self.dx

    def l2_norm(self) -> float:
        return float(math.sqrt((self.cells ** 2).sum() * self.dx))

    def linf_norm(self) -> float:
        return float(np.max(np.abs(self.cells)))

    def to_field(self) -> Field:
        """Cell averages placed at the grid edges by averaging neighbours (ends extrapolated)."""
        c = self.cells
        edges = np.empty((self.m + 1, c.shape[1]))
        edges[1:-1] = 0.5 * (c[:-1] + c[1:])
        edges[0] = c[0]
        edges[-1] = c[-1]
        return Field(uniform_grid(self.m), edges)


@dataclass
class FvTrajectory:
    times: np.ndarray
    states: list
    trace: BoundaryTrace

    def norms(self) -> np.ndarray:
        return np.array([s.l2_norm() for s in self.states])

    def linf_norms(self) -> np.ndarray:
        return np.array([s.linf_norm() for s in self.states])

    def norm_series(self):
        return list(zip(self.times.tolist(), self.norms().tolist()))

    @property
    def final(self) -> FvState:
        return self.states[-1]


def cfl_dt(spec: SystemSpec, m: int, cfl: float = 1.0) -> float:
    if m < 4:
        raise ValueError("m must be >= 4")
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    return cfl * (1.0 / m) / float(np.max(spec.velocities))


def _courant(spec: SystemSpec, dt: float, dx: float) -> np.ndarray:
    c = spec.velocities * dt / dx
    if np.any(c > 1.0 + CFL_SLACK):
        raise CFLViolation(f"Courant number {c.max():.6g} > 1")
    return np.minimum(c, 1.0)


def step_upwind(state: FvState, spec: SystemSpec, dt: float, boundary_value) -> FvState:
    """One upwind step with inflow ``boundary_value`` at x = 0."""
    c = _courant(spec, dt, state.dx)
    u = state.cells
    b = np.broadcast_to(np.asarray(boundary_value, dtype=float), (u.shape[1],))
    new = np.empty_like(u)
    new[0] = (1.0 - c) * u[0] + c * b
    new[1:] = (1.0 - c) * u[1:] + c * u[:-1]
    return FvState(new, state.dx, state.t + dt)


def initial_cells(y0: Field, m: int) -> np.ndarray:
    """Midpoint sampling of ``y0`` on m cells."""
    return y0.evaluate((np.arange(m) + 0.5) / m)


def solve_fv(
    spec: SystemSpec,
    y0: Field,
    t_final: float,
    m: int,
    cfl: float = 1.0,
    phi: Optional[HistoryBuffer] = None,
    stride: int = 1,
) -> FvTrajectory:
    """Upwind solution up to ``t_final``.

    The step is the largest dt <= cfl * dx / max(d) that divides t_final.
    Without delay the inflow is K times the last cell; with delay it is the
    mu-weighted history of cell-average means (``phi`` supplies t < 0; a
    constant history equal to ``y0`` is assumed when omitted).
    """
    dt_max = cfl_dt(spec, m, cfl)
    nsteps = max(1, int(math.ceil(t_final / dt_max - 1e-9)))
    dt = t_final / nsteps
    dx = 1.0 / m
    courant = _courant(spec, dt, dx)
    cells = initial_cells(y0, m)
    if spec.has_delay:
        S = delay_stencil(spec.delay, spec.n, dt)
        P = S.shape[0] - 1
        if phi is None:
            phi = HistoryBuffer.constant(y0, dt)
        xbar = np.zeros((P + nsteps + 1, spec.n))
        xbar[:P] = history_means(phi, dt, P)
        snaps, trace, _ = kernels.upwind_delay(cells, courant, S, xbar, P, dx, nsteps, stride)
    else:
        snaps, trace = kernels.upwind_feedback(cells, courant, spec.coupling, nsteps, stride)
    ks = np.arange(0, nsteps + 1, stride)
    if ks[-1] != nsteps:
        ks = np.append(ks, nsteps)
    states = [FvState(snaps[j], dx, k * dt) for j, k in enumerate(ks)]
    return FvTrajectory(ks * dt, states, BoundaryTrace(dt, trace))


def upwind_matrices(spec: SystemSpec, m: int):
    """Discrete open-loop generator, inflow injection and boundary read-out.

    Unknowns are ordered component-major: index i*m + j is cell j of
    component i. Returns ``(A, B, M)`` with A (nm x nm) the zero-inflow
    upwind operator, B (nm x n) the inflow injection and M (n x nm) the map
    y -> K y(1) with y(1) read from the last cell.
    """
    n = spec.n
    dx = 1.0 / m
    N = n * m
    A = np.zeros((N, N))
    B = np.zeros((N, n))
    trace = np.zeros((n, N))
    for i in range(n):
        a = spec.velocities[i] / dx
        base = i * m
        idx = np.arange(base, base + m)
        A[idx, idx] = -a
        A[idx[1:], idx[:-1]] = a
        B[base, i] = a
        trace[i, base + m - 1] = 1.0
    return A, B, spec.coupling @ trace
