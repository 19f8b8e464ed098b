"""Stability criteria, characteristic roots, resolvent checks and decay fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TOL_MARGINAL, DelayMeasure, StabilityReport, SystemSpec
from .errors import (
    InsufficientData,
    NonConvergence,
    PositivityViolation,
    RootOnBoundary,
    SingularResolvent,
)
from .operators import dirichlet_heat, loop_gain_batch, loop_gain_delay
from .solver_fv import upwind_matrices

RADIUS_AGREEMENT = 1e-8
SQUARINGS = 64


# ---------------------------------------------------------------- spectral radius

def _radius_by_squaring(a: np.ndarray) -> float:
    """rho(A) = lim ||A^(2^j)||^(2^-j), normalising after every squaring."""
    b = np.abs(a)
    log_scale = 0.0
    for j in range(SQUARINGS):
        nrm = np.abs(b).sum(axis=1).max()
        if nrm == 0.0:
            return 0.0
        b = b / nrm
        log_scale = 2.0 * (log_scale + math.log(nrm))
        b = b @ b
    nrm = np.abs(b).sum(axis=1).max()
    if nrm == 0.0:
        return 0.0
    return math.exp((log_scale + math.log(nrm)) / 2.0 ** SQUARINGS)


def spectral_radius(m, check: bool = True) -> float:
    """Largest eigenvalue modulus.

    Dense eigenvalues are cross-checked, for entrywise nonnegative input, against
    power iteration by repeated squaring; disagreement beyond 1e-8 (relative to
    max(1, r)) raises NonConvergence.
    """
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigensolver failed: {exc}") from exc
    r = float(np.max(np.abs(ev)))
    if check and (np.isrealobj(a) or np.all(np.imag(a) == 0)):
        re = np.real(a)
        if np.all(re >= 0):
            rp = _radius_by_squaring(re)
            if abs(rp - r) > RADIUS_AGREEMENT * max(1.0, r):
                raise NonConvergence(f"eigensolver radius {r!r} disagrees with power iteration {rp!r}")
    return r


# ---------------------------------------------------------------- criteria

def stability_hyperbolic(spec: SystemSpec, tol_marginal: float = TOL_MARGINAL) -> StabilityReport:
    """Closed loop without delay is uniformly exponentially stable iff r(K) < 1."""
    if spec.has_delay:
        raise ValueError("stability_hyperbolic applies to systems without delay")
    if np.any(spec.coupling < 0):
        raise PositivityViolation("coupling K has negative entries")
    return StabilityReport.from_radius(spectral_radius(spec.coupling), "r(K)<1", tol_marginal)


def stability_delay(spec: SystemSpec, tol_marginal: float = TOL_MARGINAL) -> StabilityReport:
    """Delayed boundary law is uniformly exponentially stable iff r(mu([-1, 0])) < 1."""
    if not spec.has_delay:
        raise ValueError("stability_delay needs a delay measure")
    if not spec.delay.is_nonnegative():
        raise PositivityViolation("delay measure has negative entries")
    loop0 = np.real(loop_gain_delay(0.0, spec))
    return StabilityReport.from_radius(spectral_radius(loop0), "r(delay mass)<1", tol_marginal)


def small_delay_sufficient(mu: DelayMeasure, n: Optional[int] = None) -> bool:
    """Sufficient (not necessary) test: r(|mu|([-1, 0])) < 1."""
    tv = mu.total_variation(n)
    return spectral_radius(tv) < 1.0


def stability_heat_robin(k: float, sigma: float = 1.0, tol_marginal: float = TOL_MARGINAL) -> StabilityReport:
    """Heat equation on [0, pi] with u_x(0) + k u(0) = 0: stable iff k * pi < 1."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return StabilityReport.from_radius(k * dirichlet_heat(0.0, sigma, 0.0), "heat k*pi<1", tol_marginal)


def analyze(spec: SystemSpec, tol_marginal: float = TOL_MARGINAL) -> StabilityReport:
    if spec.has_delay:
        return stability_delay(spec, tol_marginal)
    return stability_hyperbolic(spec, tol_marginal)


# ---------------------------------------------------------------- characteristic roots

def characteristic_values(lams, spec: SystemSpec) -> np.ndarray:
    """det(I - loop_gain(lam)) for every lam in ``lams``."""
    lams = np.asarray(lams, dtype=complex)
    H = loop_gain_batch(lams.ravel(), spec)
    eye = np.eye(spec.n)[None]
    return np.linalg.det(eye - H).reshape(lams.shape)


def characteristic_value(lam: complex, spec: SystemSpec) -> complex:
    return complex(characteristic_values(np.array([lam]), spec)[0])


@dataclass(frozen=True)
class RootSearchRegion:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    samples_per_side: int = 64

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("empty rectangle")
        if self.samples_per_side < 16:
            raise ValueError("samples_per_side must be >= 16")

    def boundary(self, s: np.ndarray) -> np.ndarray:
        """Counter-clockwise boundary point for parameter s in [0, 4]."""
        a = complex(self.re_min, self.im_min)
        corners = [a, complex(self.re_max, self.im_min), complex(self.re_max, self.im_max),
                   complex(self.re_min, self.im_max), a]
        s = np.asarray(s, dtype=float)
        side = np.minimum(np.floor(s).astype(int), 3)
        frac = s - side
        c0 = np.array(corners)[side]
        c1 = np.array(corners)[side + 1]
        return c0 + frac * (c1 - c0)


def count_roots(region: RootSearchRegion, spec: SystemSpec, max_depth: int = 60,
                zero_tol: float = 1e-12) -> int:
    """Winding number of the characteristic function around the rectangle.

    Samples are refined by bisection until every phase increment is below
    pi/2.
    """
    N = 4 * region.samples_per_side
    s = np.linspace(0.0, 4.0, N + 1)
    f = characteristic_values(region.boundary(s), spec)
    f[-1] = f[0]
    _check_boundary(f, s, region, zero_tol)
    for depth in range(max_depth + 1):
        bad = np.abs(np.angle(f[1:] / f[:-1])) >= math.pi / 2
        if not bad.any():
            break
        if depth == max_depth:
            raise NonConvergence("phase refinement cap reached; a root may sit on the contour")
        at = np.nonzero(bad)[0] + 1
        mids = 0.5 * (s[:-1][bad] + s[1:][bad])
        fm = characteristic_values(region.boundary(mids), spec)
        _check_boundary(fm, mids, region, zero_tol)
        s = np.insert(s, at, mids)
        f = np.insert(f, at, fm)
    w = np.angle(f[1:] / f[:-1]).sum() / (2 * math.pi)
    k = round(w)
    if abs(w - k) > 1e-6:
        raise NonConvergence(f"winding number {w} is not an integer")
    return int(k)


def _check_boundary(f, s, region, zero_tol):
    hit = np.abs(f) < zero_tol
    if hit.any():
        z = region.boundary(s[hit][:1])[0]
        raise RootOnBoundary(f"characteristic value vanishes on the contour near {z:.6g}", where=z)


def default_re_max(spec: SystemSpec) -> float:
    """Real part beyond which the loop gain norm is < 1, so no roots exist."""
    dmax = float(np.max(spec.velocities))
    if spec.has_delay:
        tv = np.abs(spec.delay.total_variation(spec.n)).sum(axis=1).max()
        return tv * dmax + 1.0
    knorm = np.abs(spec.coupling).sum(axis=1).max()
    return max(0.0, dmax * math.log(knorm)) + 1.0 if knorm > 0 else 1.0


def spectral_abscissa_bound(
    spec: SystemSpec,
    re_max: Optional[float] = None,
    re_min: Optional[float] = None,
    im_cap: Optional[float] = None,
    tol: float = 1e-5,
    samples_per_side: int = 64,
) -> Optional[float]:
    """Largest real part of characteristic roots with |Im| <= im_cap, by bisection.

    Returns None when the search box holds no root.
    """
    dmax = float(np.max(spec.velocities))
    if re_max is None:
        re_max = default_re_max(spec)
    if re_min is None:
        re_min = -10.0 * dmax
    if im_cap is None:
        im_cap = 4 * math.pi * dmax

    def count(lo, cap):
        return count_roots(RootSearchRegion(lo, re_max, -cap, cap, samples_per_side), spec)

    cap = im_cap
    for attempt in range(4):
        try:
            total = count(re_min, cap)
            break
        except (RootOnBoundary, NonConvergence):
            cap *= 1.0 + 1e-3
            re_min -= 1e-3
    else:
        raise NonConvergence("could not place the search box off the characteristic roots")
    if total == 0:
        return None
    lo, hi = re_min, re_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        for attempt in range(5):
            try:
                c = count(mid, cap)
                break
            except (RootOnBoundary, NonConvergence):
                mid += (hi - lo) * 0.0137
        else:
            raise NonConvergence(f"bisection stalled near Re = {mid}")
        if c > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- resolvent identity

@dataclass
class ResolventCheck:
    max_abs_residual: float
    residual_inf_norm: float
    entrywise_order_ok: bool
    positivity_ok: bool
    neumann_residual: float
    loop_radius: float
    lam: float
    m_cells: int

    @property
    def passed(self) -> bool:
        return (self.residual_inf_norm <= 1e-10 and self.entrywise_order_ok and self.positivity_ok
                and self.neumann_residual <= 1e-12)


def verify_resolvent_identity(spec: SystemSpec, lam: float, m_cells: int = 64,
                              neumann_terms: int = 50, order_tol: float = 1e-12) -> ResolventCheck:
    """Check R(lam, A_cl) = (I - D M)^{-1} R(lam, A) on the upwind discretization."""
    if spec.has_delay:
        raise ValueError("resolvent check is defined for systems without delay")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if m_cells > 512:
        raise ValueError("m_cells must be <= 512")
    A, B, M = upwind_matrices(spec, m_cells)
    N = A.shape[0]
    eye = np.eye(N)
    A_cl = A + B @ M
    ev = np.linalg.eigvals(A_cl)
    if np.min(np.abs(ev - lam)) < 1e-8:
        raise SingularResolvent(f"lam={lam} is within 1e-8 of a discrete eigenvalue")
    R_open = np.linalg.solve(lam * eye - A, eye)
    D = R_open @ B
    H = M @ D
    r = spectral_radius(H, check=False)
    if r >= 1:
        raise ValueError(f"discrete loop radius {r} >= 1 at lam={lam}")
    R_cl = np.linalg.solve(lam * eye - A_cl, eye)
    rhs = np.linalg.solve(eye - D @ M, R_open)
    res = R_cl - rhs
    inv_loop = np.linalg.inv(np.eye(spec.n) - H)
    series = np.eye(spec.n)
    term = np.eye(spec.n)
    for _ in range(neumann_terms):
        term = term @ H
        series = series + term
    return ResolventCheck(
        max_abs_residual=float(np.max(np.abs(res))),
        residual_inf_norm=float(np.abs(res).sum(axis=1).max()),
        entrywise_order_ok=bool(np.all(R_cl - R_open >= -order_tol)),
        positivity_ok=bool(np.all(R_open >= -order_tol) and np.all(D >= -order_tol)),
        neumann_residual=float(np.max(np.abs(inv_loop - series))),
        loop_radius=float(r),
        lam=float(lam),
        m_cells=m_cells,
    )


# ---------------------------------------------------------------- decay fits

UNDERFLOW = 1e-300


@dataclass
class DecayFit:
    rate: float
    r_squared: float
    window: tuple
    samples: int = 0
    excluded: int = 0
    nilpotent: bool = False

    @property
    def sign(self) -> int:
        if self.rate < 0:
            return -1
        return 1 if self.rate > 0 else 0


def fit_decay_rate(norms: Sequence, window_fraction: float = 0.5, min_samples: int = 10) -> DecayFit:
    """Least-squares slope of log(norm) against t over the trailing window.

    ``norms`` is a sequence of (t, norm). A window whose norms are all zero
    (the trajectory was annihilated in finite time) gives rate = -inf with
    ``nilpotent`` set.
    """
    if not 0 < window_fraction < 1:
        raise ValueError("window_fraction must lie in (0, 1)")
    arr = np.asarray(norms, dtype=float).reshape(-1, 2)
    take = int(math.ceil(window_fraction * len(arr)))
    win = arr[len(arr) - take:]
    if len(win) < min_samples:
        raise InsufficientData(f"{len(win)} samples in window, need {min_samples}")
    t, y = win[:, 0], win[:, 1]
    window = (float(t[0]), float(t[-1]))
    keep = y > UNDERFLOW
    excluded = int((~keep).sum())
    if not keep.any():
        return DecayFit(-math.inf, 1.0, window, 0, excluded, nilpotent=True)
    if keep.sum() < min_samples:
        raise InsufficientData(f"only {int(keep.sum())} non-underflowed samples in window")
    t, ly = t[keep], np.log(y[keep])
    X = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    pred = X @ coef
    ss_res = float(((ly - pred) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(float(coef[0]), r2, window, int(keep.sum()), excluded)
