import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poshyp.core import DelayMeasure, Field, HistoryBuffer, SystemSpec
from poshyp.errors import CFLViolation, HistoryGap
from poshyp.scenarios import (
    compatible_quadratic,
    random_delay_system,
    random_field,
    random_hyperbolic,
    random_history,
)
from poshyp.solver_exact import CompatibilityWarning, delay_stencil, solve_moc, solve_moc_delay


def test_trace_halves_each_transit(backend):
    traj = solve_moc(SystemSpec([1.0], [[0.5]]), Field.constant([1.0], 100), 3.0, 0.01)
    b = traj.trace.values[:, 0]
    assert b[50] == 0.5 and b[150] == 0.25 and b[250] == 0.125


def test_piecewise_state(backend):
    traj = solve_moc(SystemSpec([1.0], [[0.5]]), Field.constant([1.0], 100), 1.5, 0.01)
    f = traj.final
    x = f.grid
    np.testing.assert_array_equal(f.values[x < 0.49, 0], 0.25)
    np.testing.assert_array_equal(f.values[x > 0.51, 0], 0.5)


def _scalar_exact(y0_fn, k, x, t):
    j = np.ceil(t - x)
    return k ** j * y0_fn(x - t + j)


@pytest.mark.parametrize("k", [0.5, 1.5])
def test_matches_closed_form(k, backend):
    spec = SystemSpec([1.0], [[k]])
    # grid nodes sit on characteristics (d dt = dx), so no interpolation enters
    y0 = compatible_quadratic(spec, 100)
    coef = np.polyfit(y0.grid, y0.values[:, 0], 2)

    def fn(x):
        return np.polyval(coef, x)

    traj = solve_moc(spec, y0, 2.5, 0.01, stride=25)
    for t, f in zip(traj.times, traj.fields):
        np.testing.assert_allclose(f.values[:, 0], _scalar_exact(fn, k, f.grid, t), rtol=1e-10, atol=1e-12)


def test_two_velocities_exact(backend):
    # component 2 arrives at x=1 after half the time of component 1
    spec = SystemSpec([1.0, 2.0], [[0.0, 0.5], [0.25, 0.0]])
    y0 = Field.constant([1.0, 2.0], 100)
    traj = solve_moc(spec, y0, 0.4, 0.01)
    f = traj.final
    x = f.grid
    np.testing.assert_allclose(f.values[x < 0.39, 0], 0.5 * 2.0)
    np.testing.assert_allclose(f.values[x < 0.79, 1], 0.25 * 1.0)
    np.testing.assert_allclose(f.values[x > 0.81, 1], 2.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_positivity(seed):
    rng = np.random.default_rng(seed)
    spec = random_hyperbolic(rng, int(rng.integers(1, 4)), (0.2, 2.0))
    traj = solve_moc(spec, random_field(rng, 40, spec.n, smooth=False), 2.0, 0.05)
    assert all(np.all(f.values >= -1e-12) for f in traj.fields)
    assert np.all(traj.trace.values >= -1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, c):
    rng = np.random.default_rng(seed)
    spec = random_hyperbolic(rng, 2, (0.2, 1.5))
    y1, y2 = random_field(rng, 40, 2), random_field(rng, 40, 2)
    combo = Field.from_values(a * y1.values + c * y2.values)
    t1 = solve_moc(spec, y1, 2.0, 0.05).final.values
    t2 = solve_moc(spec, y2, 2.0, 0.05).final.values
    got = solve_moc(spec, combo, 2.0, 0.05).final.values
    np.testing.assert_allclose(got, a * t1 + c * t2, atol=1e-12 * (1 + abs(a) + abs(c)))


def test_semigroup_restart(backend):
    # compatible data: incompatible data carries jump fronts, where restart
    # and direct runs may legitimately pick different one-sided values
    spec = SystemSpec([1.0, 2.0], [[0.3, 0.6], [0.5, 0.2]])
    y0 = compatible_quadratic(spec, 100)
    direct = solve_moc(spec, y0, 1.7, 0.01).final.values
    mid = solve_moc(spec, y0, 0.9, 0.01).final
    restart = solve_moc(spec, mid, 0.8, 0.01).final.values
    np.testing.assert_allclose(restart, direct, atol=1e-12)


def test_nilpotent_without_feedback(backend):
    spec = SystemSpec([1.0, 4.0], np.zeros((2, 2)))
    traj = solve_moc(spec, random_field(np.random.default_rng(0), 100, 2), 1.5, 0.01)
    for t, f in zip(traj.times, traj.fields):
        if t >= 1.0 - 1e-12:
            assert not np.any(f.values)


def test_rejects_bad_steps():
    spec = SystemSpec([4.0], [[0.5]])
    y0 = Field.constant([1.0], 10)
    with pytest.raises(CFLViolation):
        solve_moc(spec, y0, 1.0, 0.1)
    with pytest.raises(ValueError):
        solve_moc(spec, y0, 1.0, 0.03)


# ---------------------------------------------------------------- delay

def test_stencil_total_mass():
    mu = DelayMeasure(((-0.33, [[0.2]]), (-1.0, [[0.1]])), [-0.9, -0.25, 0.0], [[[0.4]], [[0.7]]])
    S = delay_stencil(mu, 1, 0.02)
    assert S.sum() == pytest.approx(mu.total_mass(1)[0, 0], rel=1e-13)
    assert np.all(S >= 0)


def test_stencil_grid_aligned_atom():
    S = delay_stencil(DelayMeasure.single_atom(-0.5, [[0.7]]), 1, 0.1)
    assert S[5, 0, 0] == 0.7 and S.sum() == 0.7


def test_constant_history_point_delay(backend):
    # xbar stays 1 until the first delayed feedback arrives, so b = l on (0, 1]
    spec = SystemSpec([1.0], [[0.0]], DelayMeasure.single_atom(-1.0, [[0.5]]))
    y0 = Field.constant([1.0], 100)
    traj = solve_moc_delay(spec, y0, HistoryBuffer.constant(y0, 0.01), 1.0, 0.01)
    np.testing.assert_allclose(traj.trace.values[1:, 0], 0.5, rtol=1e-13)


def test_delay_semigroup_restart(backend):
    rng = np.random.default_rng(5)
    spec = random_delay_system(rng, 2, (0.5, 0.9))
    dt = 0.01
    phi = random_history(rng, 100, 2, dt)
    y0 = phi.query(0.0)
    direct = solve_moc_delay(spec, y0, phi, 2.5, dt).final.values
    first = solve_moc_delay(spec, y0, phi, 1.2, dt)
    restart = solve_moc_delay(spec, first.final, first.history, 1.3, dt).final.values
    np.testing.assert_allclose(restart, direct, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_delay_positivity(seed):
    rng = np.random.default_rng(seed)
    spec = random_delay_system(rng, int(rng.integers(1, 4)), (0.3, 1.5))
    dt = 0.05
    phi = random_history(rng, 40, spec.n, dt)
    traj = solve_moc_delay(spec, phi.query(0.0), phi, 3.0, dt)
    assert all(np.all(f.values >= -1e-12) for f in traj.fields)
    assert np.all(traj.trace.values >= -1e-12)


def test_compatibility_warning():
    spec = SystemSpec([1.0], [[0.0]], DelayMeasure.single_atom(-1.0, [[0.5]]))
    phi = HistoryBuffer.constant(Field.constant([1.0], 20), 0.05)
    with pytest.warns(CompatibilityWarning):
        traj = solve_moc_delay(spec, Field.constant([2.0], 20), phi, 0.5, 0.05)
    assert traj.warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_moc_delay(spec, Field.constant([1.0], 20), phi, 0.5, 0.05)


def test_history_gap():
    spec = SystemSpec([1.0], [[0.0]], DelayMeasure.single_atom(-1.0, [[0.5]]))
    y0 = Field.constant([1.0], 20)
    short = HistoryBuffer(0.05, 0.0, [y0] * 5)
    with pytest.raises(HistoryGap):
        solve_moc_delay(spec, y0, short, 0.5, 0.05)


@pytest.mark.parametrize("l", [0.5, 1.5])
def test_delay_growth_matches_characteristic_root(l):
    import mpmath

    from poshyp.analysis import fit_decay_rate

    spec = SystemSpec([1.0], [[0.0]], DelayMeasure.single_atom(-1.0, [[l]]))
    y0 = Field.constant([1.0], 100)
    traj = solve_moc_delay(spec, y0, HistoryBuffer.constant(y0, 0.01), 30.0, 0.01, stride=10)
    root = mpmath.findroot(lambda z: 1 - l * mpmath.exp(-z) * (1 - mpmath.exp(-z)) / z, 0.1 * math.log(l))
    assert fit_decay_rate(traj.norm_series()).rate == pytest.approx(float(root), rel=0.05)
