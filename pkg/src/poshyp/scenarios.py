"""Random positivity-mode systems and data used by the verification batteries."""
from __future__ import annotations

import numpy as np

from .analysis import spectral_radius
from .core import DelayMeasure, Field, HistoryBuffer, SystemSpec

COMMENSURATE_VELOCITIES = (1.0, 2.0, 4.0)


def random_nonnegative(rng: np.random.Generator, n: int, radius: float, density: float = 0.7) -> np.ndarray:
    """Nonnegative n x n matrix with spectral radius exactly ``radius`` (when possible)."""
    for _ in range(100):
        a = rng.uniform(0.0, 1.0, (n, n)) * (rng.uniform(size=(n, n)) < density)
        r = spectral_radius(a)
        if r > 1e-3:
            return a * (radius / r)
    return np.eye(n) * radius


def random_velocities(rng: np.random.Generator, n: int, choices=COMMENSURATE_VELOCITIES) -> np.ndarray:
    return rng.choice(np.asarray(choices), size=n)


def random_hyperbolic(rng, n, radius_range, choices=COMMENSURATE_VELOCITIES) -> SystemSpec:
    r = rng.uniform(*radius_range)
    return SystemSpec(random_velocities(rng, n, choices), random_nonnegative(rng, n, r))


def random_delay_measure(rng, n, radius, max_atoms=3, with_density=True) -> DelayMeasure:
    """Nonnegative measure with atoms on (-1, 0) and optionally one density piece,
    scaled so that r(mu([-1, 0])) = radius."""
    k = int(rng.integers(1, max_atoms + 1))
    thetas = np.sort(rng.uniform(-1.0, -0.05, k))
    thetas[0] = -1.0 if rng.uniform() < 0.5 else thetas[0]
    thetas = np.unique(thetas)
    atoms = [(float(th), random_nonnegative(rng, n, 1.0)) for th in thetas]
    bp = vals = None
    if with_density and rng.uniform() < 0.5:
        a = float(rng.uniform(-1.0, -0.3))
        b = float(rng.uniform(a + 0.1, 0.0))
        bp = np.array([a, b])
        vals = random_nonnegative(rng, n, 1.0)[None]
    mu = DelayMeasure(tuple(atoms), bp, vals)
    r = spectral_radius(mu.total_mass(n))
    scale = radius / r
    return DelayMeasure(
        tuple((th, w * scale) for th, w in atoms),
        bp,
        None if vals is None else vals * scale,
    )


def random_delay_system(rng, n, radius_range, choices=COMMENSURATE_VELOCITIES, **kw) -> SystemSpec:
    r = rng.uniform(*radius_range)
    d = random_velocities(rng, n, choices)
    return SystemSpec(d, np.zeros((n, n)), random_delay_measure(rng, n, r, **kw))


def random_field(rng, m: int, n: int, smooth: bool = True) -> Field:
    """Nonnegative random initial field (smooth sum of bumps or raw samples)."""
    x = np.linspace(0.0, 1.0, m + 1)
    if smooth:
        vals = np.zeros((m + 1, n))
        for i in range(n):
            for _ in range(3):
                c, w, h = rng.uniform(0, 1), rng.uniform(0.05, 0.3), rng.uniform(0, 1)
                vals[:, i] += h * np.exp(-((x - c) / w) ** 2)
    else:
        vals = rng.uniform(0.0, 1.0, (m + 1, n))
    return Field.from_values(vals)


def random_history(rng, m: int, n: int, dt: float) -> HistoryBuffer:
    """Nonnegative history whose amplitude varies in theta."""
    base = random_field(rng, m, n)
    amp = rng.uniform(0.2, 1.0, 3)

    def phi(theta):
        return base.scaled(float(amp[0] + amp[1] * np.sin(3 * theta) ** 2 + amp[2] * abs(theta)))

    return HistoryBuffer.from_function(phi, dt)


def compatible_bump(m: int, n: int) -> Field:
    """sin^2(pi x) in every component: vanishes with its slope at both ends, so the
    closed-loop solution is C^1 for any coupling."""
    x = np.linspace(0.0, 1.0, m + 1)
    return Field.from_values(np.repeat((np.sin(np.pi * x) ** 2)[:, None], n, axis=1))


def compatible_quadratic(spec: SystemSpec, m: int) -> Field:
    """Quadratic data y_i = a_i + b_i x + x^2 matching the boundary law in value and slope.

    Solves a = K y(1) and b_i = sum_j K_ij (d_j / d_i) y_j'(1), so the
    undelayed closed-loop solution is C^1. Falls back to ``compatible_bump``
    when 1 is an eigenvalue of the coupling.
    """
    n = spec.n
    K = spec.coupling
    d = spec.velocities
    c = np.ones(n)
    G = K * d[None, :] / d[:, None]
    try:
        b = np.linalg.solve(np.eye(n) - G, 2.0 * G @ c)
        a = np.linalg.solve(np.eye(n) - K, K @ (b + c))
    except np.linalg.LinAlgError:
        return compatible_bump(m, n)
    x = np.linspace(0.0, 1.0, m + 1)[:, None]
    return Field.from_values(a[None, :] + b[None, :] * x + c[None, :] * x ** 2)
