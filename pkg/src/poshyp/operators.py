"""Closed-form Dirichlet operators and boundary-loop transfer functions.

All functions accept complex ``lam``; outputs are complex n x n arrays unless
noted. The loop gain of the delayed system is the finite-dimensional
reduction ``mu_hat(lam) @ g_integral(lam)``.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

from .core import DelayMeasure, SystemSpec

# dirichlet_heat switches to its Taylor branch below this value of sqrt(lam/sigma)*pi
HEAT_SERIES_CUTOFF = 1e-4


def dirichlet_E(lam: complex, x: float, spec: SystemSpec) -> np.ndarray:
    """diag(exp(-lam * x / d_i))."""
    return np.diag(np.exp(-complex(lam) * x / spec.velocities))


def transfer_hyperbolic(lam: complex, spec: SystemSpec) -> np.ndarray:
    """H(lam) = K diag(exp(-lam / d_i)); equals K at lam = 0."""
    if spec.has_delay:
        raise ValueError("transfer_hyperbolic is defined for systems without delay")
    return spec.coupling * np.exp(-complex(lam) / spec.velocities)[None, :]


def dirichlet_transport(lam: complex, rho: float, x: float) -> complex:
    if rho <= 0:
        raise ValueError("rho must be > 0")
    return cmath.exp(complex(lam) / rho * (x - 1.0))


def _heat_series(a2: float, x: float) -> float:
    # sinh(a L) / (a cosh(a P)) expanded in a2 = a^2 through a2^3
    L = math.pi - x
    P2 = math.pi ** 2
    c0 = L
    c1 = L ** 3 / 6 - L * P2 / 2
    c2 = L ** 5 / 120 - L ** 3 * P2 / 12 + 5 * L * P2 ** 2 / 24
    c3 = L ** 7 / 5040 - L ** 5 * P2 / 240 + 5 * L ** 3 * P2 ** 2 / 144 - 61 * L * P2 ** 3 / 720
    return c0 + a2 * (c1 + a2 * (c2 + a2 * c3))


def dirichlet_heat(lam: float, sigma: float, x: float) -> float:
    """Dirichlet lift for the heat equation on [0, pi] with u(pi) = 0 and a flux input at 0."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if lam == 0:
        return math.pi - x
    a = math.sqrt(lam / sigma)
    if a * math.pi < HEAT_SERIES_CUTOFF:
        return _heat_series(a * a, x)
    # divide through by exp(a*pi) to keep large lam finite
    num = -math.expm1(-2 * a * (math.pi - x)) * math.exp(-a * x)
    den = a * (1 + math.exp(-2 * a * math.pi))
    return num / den


def _exp_diff_over_batch(lams: np.ndarray, a: float, b: float) -> np.ndarray:
    """(exp(lam b) - exp(lam a)) / lam elementwise, with the lam -> 0 limit b - a."""
    out = np.full(lams.shape, b - a, dtype=complex)
    nz = lams != 0
    z = lams[nz]
    h = b - a
    # anchor at the endpoint with the larger real exponent so expm1 never overflows
    right = z.real >= 0
    val = np.empty(z.shape, dtype=complex)
    val[right] = -np.exp(z[right] * b) * np.expm1(-z[right] * h)
    val[~right] = np.exp(z[~right] * a) * np.expm1(z[~right] * h)
    out[nz] = val / z
    return out


def _exp_diff_over(lam: complex, a: float, b: float) -> complex:
    return complex(_exp_diff_over_batch(np.array([lam], dtype=complex), a, b)[0])


def mu_hat(lam: complex, mu: DelayMeasure, n: int | None = None) -> np.ndarray:
    """Laplace-type transform  sum_j exp(lam theta_j) W_j + int exp(lam theta) rho(theta) dtheta."""
    lam = complex(lam)
    if n is None:
        n = mu.dim() or 1
    out = np.zeros((n, n), dtype=complex)
    for th, w in mu.atoms:
        out += cmath.exp(lam * th) * w
    for a, b, v in mu.pieces():
        out += _exp_diff_over(lam, a, b) * v
    return out


def g_integral(lam: complex, spec: SystemSpec) -> np.ndarray:
    """Exact x-integral of dirichlet_E over [0, 1]: diag((d_i/lam)(1 - exp(-lam/d_i)))."""
    lam = complex(lam)
    d = spec.velocities
    if lam == 0:
        return np.eye(spec.n, dtype=complex)
    return np.diag(-d * np.expm1(-lam / d) / lam)


def loop_gain_delay(lam: complex, spec: SystemSpec) -> np.ndarray:
    if not spec.has_delay:
        raise ValueError("loop_gain_delay needs a delay measure")
    return mu_hat(lam, spec.delay, spec.n) @ g_integral(lam, spec)


def loop_gain(lam: complex, spec: SystemSpec) -> np.ndarray:
    """Boundary loop operator whose unit eigenvalues mark closed-loop spectrum."""
    if spec.has_delay:
        return loop_gain_delay(lam, spec)
    return transfer_hyperbolic(lam, spec)


def loop_gain_batch(lams: np.ndarray, spec: SystemSpec) -> np.ndarray:
    """Vectorized ``loop_gain`` over an array of lam; returns (len(lams), n, n)."""
    lams = np.asarray(lams, dtype=complex).ravel()
    d = spec.velocities
    if not spec.has_delay:
        return spec.coupling[None, :, :] * np.exp(-lams[:, None] / d[None, :])[:, None, :]
    mu = spec.delay
    n = spec.n
    mh = np.zeros((len(lams), n, n), dtype=complex)
    for th, w in mu.atoms:
        mh += np.exp(lams * th)[:, None, None] * w[None]
    nz = lams != 0
    for a, b, v in mu.pieces():
        mh += _exp_diff_over_batch(lams, a, b)[:, None, None] * v[None]
    g = np.ones((len(lams), n), dtype=complex)
    g[nz] = -d[None, :] * np.expm1(-lams[nz, None] / d[None, :]) / lams[nz, None]
    return mh * g[:, None, :]
