import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poshyp.core import DelayMeasure, Field, HistoryBuffer, SystemSpec
from poshyp.errors import CFLViolation
from poshyp.scenarios import compatible_quadratic, random_delay_system, random_field, random_history, random_hyperbolic
from poshyp.solver_exact import solve_moc, solve_moc_delay
from poshyp.solver_fv import FvState, cfl_dt, initial_cells, solve_fv, step_upwind


def test_cfl_dt():
    assert cfl_dt(SystemSpec([1.0, 2.0], np.zeros((2, 2))), 100) == pytest.approx(0.005)
    assert cfl_dt(SystemSpec([1.0], [[0.0]]), 10, 0.5) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        cfl_dt(SystemSpec([1.0], [[0.0]]), 3)
    with pytest.raises(ValueError):
        cfl_dt(SystemSpec([1.0], [[0.0]]), 10, 1.5)


def test_step_shifts_at_unit_courant():
    spec = SystemSpec([1.0], [[0.0]])
    s = FvState(np.array([[1.0], [2.0], [3.0], [4.0]]), 0.25, 0.0)
    out = step_upwind(s, spec, 0.25, 7.0)
    np.testing.assert_array_equal(out.cells[:, 0], [7.0, 1.0, 2.0, 3.0])
    assert out.t == 0.25


def test_step_half_courant_averages():
    spec = SystemSpec([1.0], [[0.0]])
    s = FvState(np.array([[1.0], [3.0], [5.0], [7.0]]), 0.25, 0.0)
    out = step_upwind(s, spec, 0.125, 0.0)
    np.testing.assert_array_equal(out.cells[:, 0], [0.5, 2.0, 4.0, 6.0])


def test_step_cfl_violation():
    s = FvState(np.zeros((4, 1)), 0.25, 0.0)
    with pytest.raises(CFLViolation):
        step_upwind(s, SystemSpec([2.0], [[0.0]]), 0.25, 0.0)


def test_step_conserves_mass_with_matching_inflow():
    rng = np.random.default_rng(1)
    s = FvState(rng.uniform(size=(20, 2)), 0.05, 0.0)
    spec = SystemSpec([1.0, 0.5], np.zeros((2, 2)))
    out = step_upwind(s, spec, 0.03, s.cells[-1])
    np.testing.assert_allclose(out.cells.sum(axis=0), s.cells.sum(axis=0))


def test_unit_cfl_matches_exact_at_centers(backend):
    # at Courant 1 upwind shifts cell values exactly, so cell j equals the
    # exact solution at its centre
    m = 50
    spec = SystemSpec([1.0], [[0.7]])
    y0 = random_field(np.random.default_rng(2), 2 * m, 1)
    fv = solve_fv(spec, y0, 2.0, m)
    moc = solve_moc(spec, y0, 2.0, 1.0 / (2 * m))
    centers = np.arange(1, 2 * m, 2)
    for t, state in zip(fv.times, fv.states):
        k = int(round(t * 2 * m))
        np.testing.assert_allclose(state.cells[:, 0], moc.fields[k].values[centers, 0], atol=1e-13)


def test_initial_cells_midpoints():
    y0 = Field.from_function(lambda x: x, 10)
    np.testing.assert_allclose(initial_cells(y0, 5)[:, 0], [0.1, 0.3, 0.5, 0.7, 0.9])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 1.0))
def test_positivity(seed, cfl):
    rng = np.random.default_rng(seed)
    spec = random_hyperbolic(rng, int(rng.integers(1, 4)), (0.2, 2.0))
    traj = solve_fv(spec, random_field(rng, 40, spec.n, smooth=False), 2.0, 40, cfl=cfl)
    assert all(np.all(s.cells >= -1e-12) for s in traj.states)
    assert np.all(traj.trace.values >= -1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_delay_positivity(seed):
    rng = np.random.default_rng(seed)
    spec = random_delay_system(rng, int(rng.integers(1, 4)), (0.3, 1.5))
    m = 40
    dt = cfl_dt(spec, m)
    phi = random_history(rng, m, spec.n, dt)
    traj = solve_fv(spec, phi.query(0.0), 2.0, m, phi=phi)
    assert all(np.all(s.cells >= -1e-12) for s in traj.states)
    assert np.all(traj.trace.values >= -1e-12)


def test_stride_keeps_endpoints(backend):
    traj = solve_fv(SystemSpec([1.0], [[0.5]]), Field.constant([1.0], 20), 1.0, 20, stride=7)
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(1.0)


def _fv_error(spec, y0, m, t):
    fv = solve_fv(spec, y0, t, m, cfl=0.5).final
    dt = t / math.ceil(8 * t * spec.velocities.max() * m)
    exact = solve_moc(spec, y0, t, dt).final
    return float(np.sqrt(np.mean((fv.cells - exact.evaluate(fv.centers)) ** 2)))


def test_first_order_convergence():
    spec = SystemSpec([1.0, 2.0], [[0.3, 0.2], [0.4, 0.1]])
    y0 = compatible_quadratic(spec, 800)
    ms = np.array([40, 80, 160])
    errs = [_fv_error(spec, y0, int(m), 2.0) for m in ms]
    slope = -np.polyfit(np.log(ms), np.log(errs), 1)[0]
    assert slope >= 0.8


def test_delay_fv_approaches_exact():
    spec = SystemSpec([1.0], [[0.0]], DelayMeasure(((-0.5, [[0.3]]),), [-1.0, 0.0], [[[0.4]]]))
    y0 = Field.constant([1.0], 400)
    dt = 1.0 / 400
    exact = solve_moc_delay(spec, y0, HistoryBuffer.constant(y0, dt), 2.0, dt).final
    errs = []
    for m in (50, 200):
        fv = solve_fv(spec, y0, 2.0, m).final
        errs.append(np.max(np.abs(fv.cells - exact.evaluate(fv.centers))))
    assert errs[1] < errs[0] and errs[1] < 2e-2
