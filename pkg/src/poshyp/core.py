"""Domain types shared by the solvers and analyzers.

Everything here lives on the unit interval with a uniform grid and the
componentwise order on R^n.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

TOL_MARGINAL = 1e-10
SNAP_TOL = 1e-9


def _as_matrix(a, n=None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if n is not None and m.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class DelayMeasure:
    """Matrix-valued measure on [-1, 0]: point masses plus a piecewise-constant density.

    ``atoms`` is a sequence of ``(theta, weight)`` pairs. The density takes the
    value ``density_values[p]`` on ``[density_breakpoints[p], density_breakpoints[p+1]]``.
    """

    atoms: tuple = ()
    density_breakpoints: Optional[np.ndarray] = None
    density_values: Optional[np.ndarray] = None

    def __post_init__(self):
        atoms = tuple((float(th), _as_matrix(w)) for th, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if self.density_breakpoints is not None:
            bp = np.asarray(self.density_breakpoints, dtype=float).ravel()
            vals = np.asarray(self.density_values, dtype=float)
            if vals.ndim == 2:
                vals = vals[None, :, :]
            object.__setattr__(self, "density_breakpoints", bp)
            object.__setattr__(self, "density_values", vals)

    @classmethod
    def single_atom(cls, theta, weight):
        return cls(atoms=((theta, weight),))

    @classmethod
    def empty(cls):
        return cls()

    @property
    def has_density(self) -> bool:
        return self.density_breakpoints is not None and len(self.density_breakpoints) > 1

    def pieces(self):
        """Yield ``(a, b, value)`` for every constant piece of the density."""
        if not self.has_density:
            return
        bp = self.density_breakpoints
        for p in range(len(bp) - 1):
            yield bp[p], bp[p + 1], self.density_values[p]

    def dim(self) -> Optional[int]:
        for _, w in self.atoms:
            return w.shape[0]
        if self.has_density:
            return self.density_values.shape[1]
        return None

    def total_mass(self, n: int) -> np.ndarray:
        """Signed mass matrix mu([-1, 0])."""
        out = np.zeros((n, n))
        for _, w in self.atoms:
            out += w
        for a, b, v in self.pieces():
            out += v * (b - a)
        return out

    def total_variation(self, n: Optional[int] = None) -> np.ndarray:
        """Entrywise absolute mass |mu|([-1, 0]) as an n x n matrix."""
        if n is None:
            n = self.dim() or 1
        out = np.zeros((n, n))
        for _, w in self.atoms:
            out += np.abs(w)
        for a, b, v in self.pieces():
            out += np.abs(v) * (b - a)
        return out

    def is_nonnegative(self) -> bool:
        if any((w < 0).any() for _, w in self.atoms):
            return False
        return not any((v < 0).any() for _, _, v in self.pieces())


@dataclass(frozen=True)
class SystemSpec:
    """Transport velocities, boundary coupling and optional delayed boundary law."""

    velocities: np.ndarray
    coupling: np.ndarray
    delay: Optional[DelayMeasure] = None

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.velocities, dtype=float)).ravel()
        object.__setattr__(self, "velocities", d)
        object.__setattr__(self, "coupling", _as_matrix(self.coupling))

    @property
    def n(self) -> int:
        return len(self.velocities)

    @property
    def has_delay(self) -> bool:
        return self.delay is not None

    @property
    def transit_time(self) -> float:
        """Time after which every characteristic has left [0, 1]."""
        return float(np.max(1.0 / self.velocities))


@dataclass
class ValidationResult:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_system(spec: SystemSpec, positivity: bool = False) -> ValidationResult:
    """Collect every invariant violation of ``spec``; never raises."""
    out = []
    d = spec.velocities
    n = len(d)
    if n < 1:
        out.append("n must be >= 1")
    if not np.all(np.isfinite(d)):
        out.append("velocities must be finite")
    if np.any(d <= 0):
        out.append("velocity must be > 0")
    K = spec.coupling
    if K.shape != (n, n):
        out.append(f"coupling must be {n}x{n}, got {K.shape[0]}x{K.shape[1]}")
    elif not np.all(np.isfinite(K)):
        out.append("coupling entries must be finite")
    if positivity and np.any(K < 0):
        out.append("coupling must be entrywise >= 0 in positivity mode")
    if spec.delay is not None:
        out.extend(_delay_violations(spec.delay, n, positivity))
    return ValidationResult(out)


def _delay_violations(mu: DelayMeasure, n: int, positivity: bool) -> list:
    out = []
    thetas = [th for th, _ in mu.atoms]
    for th, w in mu.atoms:
        if th == 0.0 and np.any(w != 0):
            out.append("μ(0)=0 required: atom at theta=0")
        elif not -1.0 <= th < 0.0:
            out.append(f"atom theta={th} outside [-1, 0)")
        if w.shape != (n, n):
            out.append(f"atom weight at theta={th} must be {n}x{n}")
        elif not np.all(np.isfinite(w)):
            out.append(f"atom weight at theta={th} is not finite")
    if any(b <= a for a, b in zip(thetas, thetas[1:])):
        out.append("atom thetas must be strictly increasing")
    if mu.density_breakpoints is not None:
        bp = mu.density_breakpoints
        vals = mu.density_values
        if len(bp) < 2:
            out.append("density needs at least two breakpoints")
        else:
            if bp[0] < -1.0 or bp[-1] > 0.0:
                out.append("density breakpoints must lie in [-1, 0]")
            if np.any(np.diff(bp) <= 0):
                out.append("density breakpoints must be strictly increasing")
            if vals.shape != (len(bp) - 1, n, n):
                out.append(f"density values must have shape ({len(bp) - 1}, {n}, {n})")
            elif not np.all(np.isfinite(vals)):
                out.append("density values must be finite")
    if positivity and not mu.is_nonnegative():
        out.append("delay measure must be entrywise >= 0 in positivity mode")
    return out


def uniform_grid(m: int) -> np.ndarray:
    """m+1 equispaced edge coordinates on [0, 1]."""
    if m < 1:
        raise ValueError("m must be >= 1")
    g = np.linspace(0.0, 1.0, m + 1)
    g[-1] = 1.0
    return g


def trapezoid_weights(m: int) -> np.ndarray:
    w = np.full(m + 1, 1.0 / m)
    w[0] = w[-1] = 0.5 / m
    return w


@dataclass(frozen=True)
class Field:
    """n-component grid function on [0, 1]; ``values[j, i] = y_i(grid[j])``."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != g.shape[0]:
            raise ValueError("values must have one row per grid point")
        if g.shape[0] < 2 or g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must increase strictly from 0 to 1")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values) -> "Field":
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        return cls(uniform_grid(v.shape[0] - 1), v)

    @classmethod
    def from_function(cls, fn: Callable, m: int, n: int = 1) -> "Field":
        """Sample ``fn(x) -> (len(x), n)`` (or ``(len(x),)`` when n == 1) on a uniform grid."""
        g = uniform_grid(m)
        v = np.asarray(fn(g), dtype=float).reshape(m + 1, -1)
        if v.shape[1] == 1 and n > 1:
            v = np.repeat(v, n, axis=1)
        return cls(g, v)

    @classmethod
    def constant(cls, c, m: int) -> "Field":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(uniform_grid(m), np.tile(c, (m + 1, 1)))

    @classmethod
    def zeros(cls, m: int, n: int) -> "Field":
        return cls(uniform_grid(m), np.zeros((m + 1, n)))

    @property
    def m(self) -> int:
        return len(self.grid) - 1

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def evaluate(self, x) -> np.ndarray:
        """Piecewise-linear interpolation at points ``x``; returns (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.column_stack([np.interp(x, self.grid, self.values[:, i]) for i in range(self.n)])

    def mean(self) -> np.ndarray:
        """Trapezoidal spatial mean of every component (the integral over [0, 1])."""
        w = np.diff(self.grid)
        v = self.values
        return 0.5 * (w[:, None] * (v[:-1] + v[1:])).sum(axis=0)

    def scaled(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)


def field_is_nonnegative(f: Field, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return bool(np.all(f.values >= -tol))


def field_l2_norm(f: Field) -> float:
    """Composite trapezoid approximation of the (L^2[0,1])^n norm."""
    scale = field_linf_norm(f)
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    # rescale first so tiny or huge states neither underflow nor overflow
    sq = ((f.values / scale) ** 2).sum(axis=1)
    w = np.diff(f.grid)
    return scale * math.sqrt(0.5 * float((w * (sq[:-1] + sq[1:])).sum()))


def field_linf_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values))) if f.values.size else 0.0


def ring_length(dt: float) -> int:
    return int(math.ceil(1.0 / dt - SNAP_TOL)) + 1


def _snap(s: float) -> float:
    r = round(s)
    return float(r) if abs(s - r) < SNAP_TOL else s


class HistoryBuffer:
    """Ring of Fields sampled every ``dt`` over [anchor_time - 1, anchor_time].

    The newest snapshot sits at ``anchor_time``. Queries between stored
    snapshots interpolate linearly in time. Single writer: only ``push``
    mutates the buffer.
    """

    def __init__(self, dt: float, anchor_time: float = 0.0, snapshots: Sequence[Field] = ()):
        if dt <= 0:
            raise ValueError("dt must be > 0")
        self.dt = float(dt)
        self.capacity = ring_length(self.dt)
        self.snapshots = deque(snapshots, maxlen=self.capacity)
        self.anchor_time = float(anchor_time)

    @classmethod
    def from_function(cls, phi: Callable[[float], Field], dt: float, anchor_time: float = 0.0):
        """Fill the ring with ``phi(theta)`` for theta = -(L-1)dt, ..., -dt, 0."""
        L = ring_length(dt)
        snaps = [phi(-(L - 1 - k) * dt) for k in range(L)]
        return cls(dt, anchor_time, snaps)

    @classmethod
    def constant(cls, f: Field, dt: float, anchor_time: float = 0.0):
        return cls(dt, anchor_time, [f] * ring_length(dt))

    def __len__(self):
        return len(self.snapshots)

    @property
    def lookback(self) -> float:
        return (len(self.snapshots) - 1) * self.dt

    def covers_unit_window(self) -> bool:
        return len(self.snapshots) >= 2 and self.lookback >= 1.0 - SNAP_TOL

    def push(self, f: Field, advance: bool = True):
        self.snapshots.append(f)
        if advance:
            self.anchor_time += self.dt

    def _locate(self, theta: float):
        if theta > SNAP_TOL or theta < -self.lookback - SNAP_TOL:
            raise ValueError(f"theta={theta} outside the stored window [-{self.lookback}, 0]")
        s = _snap(max(0.0, -theta / self.dt))
        j = int(math.floor(s))
        last = len(self.snapshots) - 1
        if j >= last:
            return last, 0.0
        return j, s - j

    def query(self, theta: float) -> Field:
        """Field at time anchor_time + theta, theta in [-1, 0]."""
        j, f = self._locate(theta)
        newer = self.snapshots[-1 - j]
        if f == 0.0:
            return newer
        older = self.snapshots[-2 - j]
        return Field(newer.grid, (1.0 - f) * newer.values + f * older.values)

    def mean_at(self, theta: float) -> np.ndarray:
        j, f = self._locate(theta)
        newer = self.snapshots[-1 - j].mean()
        if f == 0.0:
            return newer
        return (1.0 - f) * newer + f * self.snapshots[-2 - j].mean()


class Verdict(str, Enum):
    STABLE = "UniformlyExponentiallyStable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


def classify(radius: float, tol_marginal: float = TOL_MARGINAL) -> Verdict:
    if radius < 1.0 - tol_marginal:
        return Verdict.STABLE
    if radius > 1.0 + tol_marginal:
        return Verdict.UNSTABLE
    return Verdict.MARGINAL


@dataclass
class StabilityReport:
    spectral_radius_loop: float
    verdict: Verdict
    margin: float
    criterion_used: str
    root_count: Optional[int] = None
    spectral_abscissa_box: Optional[tuple] = None

    @classmethod
    def from_radius(cls, radius: float, criterion: str, tol_marginal: float = TOL_MARGINAL):
        return cls(float(radius), classify(radius, tol_marginal), 1.0 - float(radius), criterion)

    @property
    def stable(self) -> bool:
        return self.verdict is Verdict.STABLE

    def as_dict(self) -> dict:
        out = {
            "spectral_radius_loop": self.spectral_radius_loop,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "criterion_used": self.criterion_used,
        }
        if self.root_count is not None:
            out["root_count"] = self.root_count
        if self.spectral_abscissa_box is not None:
            out["spectral_abscissa_box"] = list(self.spectral_abscissa_box)
        return out
