"""Acceptance suite: ten end-to-end criteria at their stated tolerances.

Each check returns (passed, detail). The pytest wrappers print one PASS/FAIL
line per criterion; ``python tests/test_acceptance.py`` prints the same lines
without pytest.
"""
import math
import time

import numpy as np
import pytest

from poshyp.analysis import (
    RootSearchRegion,
    count_roots,
    fit_decay_rate,
    small_delay_sufficient,
    spectral_abscissa_bound,
    spectral_radius,
    stability_delay,
    stability_heat_robin,
    stability_hyperbolic,
    verify_resolvent_identity,
)
from poshyp.core import DelayMeasure, Field, HistoryBuffer, SystemSpec, Verdict
from poshyp.scenarios import (
    compatible_quadratic,
    random_delay_measure,
    random_delay_system,
    random_field,
    random_history,
    random_hyperbolic,
    random_velocities,
)
from poshyp.solver_exact import solve_moc, solve_moc_delay
from poshyp.solver_fv import cfl_dt, solve_fv

SEED = 20240611


def _timed(check):
    t0 = time.perf_counter()
    passed, detail = check()
    return passed, detail, time.perf_counter() - t0


# ---------------------------------------------------------------- 1

def check_transport_threshold():
    worst = 0.0
    ok = True
    for k in (0.0, 0.25, 0.5, 0.9, 1.1, 2.0):
        traj = solve_moc(SystemSpec([1.0], [[k]]), Field.constant([1.0], 100), 20.0, 0.01)
        fit = fit_decay_rate(traj.norm_series())
        if k == 0.0:
            ok &= fit.nilpotent
            continue
        rel = abs(fit.rate - math.log(k)) / abs(math.log(k))
        worst = max(worst, rel)
        ok &= rel <= 0.10
    return ok, f"max relative rate error {worst:.2e} (limit 0.10), k=0 nilpotent"


# ---------------------------------------------------------------- 2

def check_hyperbolic_criterion():
    rng = np.random.default_rng([SEED, 2])
    matches = 0
    total = 0
    for band in ((0.2, 0.9), (1.1, 2.0)):
        for _ in range(20):
            spec = random_hyperbolic(rng, int(rng.integers(2, 5)), band)
            rep = stability_hyperbolic(spec)
            traj = solve_moc(spec, random_field(rng, 200, spec.n), 30.0, 0.005, stride=10)
            fit = fit_decay_rate(traj.norm_series())
            total += 1
            matches += (fit.rate < 0) == rep.stable
    return matches == total, f"{matches}/{total} decay-fit signs match the verdict"


# ---------------------------------------------------------------- 3

def check_positivity():
    rng = np.random.default_rng([SEED, 3])
    worst = math.inf
    m = 64
    for j in range(50):
        n = int(rng.integers(1, 4))
        if j % 2:
            spec = random_delay_system(rng, n, (0.2, 1.5))
            dt = 1.0 / m
            phi = random_history(rng, m, n, dt)
            y0 = phi.query(0.0)
            moc = solve_moc_delay(spec, y0, phi, 4.0, dt)
            fv_phi = random_history(rng, m, n, cfl_dt(spec, m, 0.9))
            fv = solve_fv(spec, fv_phi.query(0.0), 4.0, m, 0.9, phi=fv_phi)
        else:
            spec = random_hyperbolic(rng, n, (0.2, 1.5))
            y0 = random_field(rng, m, n, smooth=False)
            moc = solve_moc(spec, y0, 4.0, 1.0 / m)
            fv = solve_fv(spec, y0, 4.0, m, float(rng.uniform(0.3, 1.0)))
        lo = min(min(f.values.min() for f in moc.fields), moc.trace.values.min(),
                 min(s.cells.min() for s in fv.states), fv.trace.values.min())
        worst = min(worst, lo)
    return worst >= -1e-12, f"minimum emitted value {worst:.3e} over 50 specs (limit -1e-12)"


# ---------------------------------------------------------------- 4

def check_nilpotency():
    rng = np.random.default_rng([SEED, 4])
    ok = True
    for _ in range(10):
        n = int(rng.integers(1, 4))
        d = random_velocities(rng, n)
        y0 = random_field(rng, 100, n, smooth=False)
        spec = SystemSpec(d, np.zeros((n, n)))
        traj = solve_moc(spec, y0, 2.0, 0.0025)
        t_off = float(np.max(1.0 / d))
        ok &= all(not np.any(f.values) for t, f in zip(traj.times, traj.fields) if t >= t_off - 1e-12)
        ok &= not np.any(traj.trace.values)
        # shared-grid FV reaches Courant 1 in every component only for equal speeds
        dv = float(d[0])
        fspec = SystemSpec(np.full(n, dv), np.zeros((n, n)))
        fv = solve_fv(fspec, y0, 2.0, 100, cfl=1.0)
        ok &= all(not np.any(s.cells) for t, s in zip(fv.times, fv.states) if t >= 1.0 / dv - 1e-12)
    return ok, "exact and unit-CFL upwind output identically zero after the transit time (10 fields)"


# ---------------------------------------------------------------- 5

def _delay_rate(spec, t_final=40.0, dt=0.01):
    y0 = Field.constant(np.ones(spec.n), 100)
    traj = solve_moc_delay(spec, y0, HistoryBuffer.constant(y0, dt), t_final, dt, stride=10)
    return fit_decay_rate(traj.norm_series()).rate


def check_delay_criterion():
    ok = True
    parts = []
    for l in (0.5, 0.9, 1.1, 1.5):
        spec = SystemSpec([1.0], [[0.0]], DelayMeasure.single_atom(-1.0, [[l]]))
        rate = _delay_rate(spec)
        stable = stability_delay(spec).stable
        ok &= (rate < 0) == (l < 1) and stable == (l < 1)
        parts.append(f"l={l}: rate {rate:+.4f}")
    two = SystemSpec([1.0], [[0.0]], DelayMeasure(((-1.0, [[0.5]]), (-0.5, [[0.6]]))))
    rep = stability_delay(two)
    rate = _delay_rate(two)
    ok &= rep.verdict is Verdict.UNSTABLE and rate > 0
    parts.append(f"two atoms (mass 1.1): {rep.verdict.value}, rate {rate:+.4f}")
    return ok, "; ".join(parts)


# ---------------------------------------------------------------- 6

def check_small_delay():
    rng = np.random.default_rng([SEED, 6])
    good = 0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        mu = random_delay_measure(rng, n, float(rng.uniform(0.2, 0.95)))
        spec = SystemSpec(random_velocities(rng, n), np.zeros((n, n)), mu)
        assert small_delay_sufficient(mu, n)
        stable = stability_delay(spec).stable
        rate = _delay_rate(spec, t_final=30.0)
        good += stable and rate < 0
    return good == 20, f"{good}/20 measures with r(|mu|)<1 judged stable and decaying"


# ---------------------------------------------------------------- 7

def check_resolvent_identity():
    rng = np.random.default_rng([SEED, 7])
    worst_res = worst_neu = 0.0
    ok = True
    for _ in range(20):
        spec = random_hyperbolic(rng, int(rng.integers(1, 5)), (0.05, 0.5))
        for lam in (0.5, 1.0, 2.0, 5.0):
            chk = verify_resolvent_identity(spec, lam, m_cells=64)
            ok &= chk.passed
            worst_res = max(worst_res, chk.residual_inf_norm)
            worst_neu = max(worst_neu, chk.neumann_residual)
    return ok, f"max residual {worst_res:.2e} (limit 1e-10), max Neumann residual {worst_neu:.2e} (limit 1e-12)"


# ---------------------------------------------------------------- 8

def check_spectral_abscissa():
    ok = True
    worst = 0.0
    for k in (0.25, 0.5, 2.0):
        spec = SystemSpec([1.0], [[k]])
        ln = math.log(k)
        absc = spectral_abscissa_bound(spec)
        worst = max(worst, abs(absc - ln))
        ok &= abs(absc - ln) <= 1e-3
        ok &= count_roots(RootSearchRegion(ln - 0.3, ln + 0.3, -1.0, 1.0), spec) == 1
        ok &= count_roots(RootSearchRegion(ln + 0.5, ln + 1.5, -1.0, 1.0), spec) == 0
    return ok, f"max |abscissa - ln k| {worst:.2e} (limit 1e-3), box counts 1 and 0"


# ---------------------------------------------------------------- 9

def check_convergence():
    from poshyp.cli import convergence_slope

    spec = SystemSpec([1.0], [[0.5]])
    # 3 + 2x + x^2 matches y(0) = 0.5 y(1) in value and slope
    y0 = compatible_quadratic(spec, 800)
    slope, errs = convergence_slope(spec, y0, [50, 100, 200, 400], 5.0)
    return slope >= 0.8, f"log-log slope {slope:.3f} (limit 0.8), errors " + ", ".join(f"{e:.2e}" for e in errs)


# ---------------------------------------------------------------- 10

def check_heat():
    cases = ((0.0, Verdict.STABLE), (0.1, Verdict.STABLE), (1 / math.pi, Verdict.MARGINAL), (0.5, Verdict.UNSTABLE))
    ok = True
    worst = 0.0
    for k, verdict in cases:
        rep = stability_heat_robin(k)
        worst = max(worst, abs(rep.spectral_radius_loop - k * math.pi))
        ok &= rep.verdict is verdict
    ok &= worst <= 1e-12
    return ok, f"max |r - k pi| {worst:.1e} (limit 1e-12), verdicts match"


CRITERIA = [
    (1, "transport threshold", check_transport_threshold, 5.0),
    (2, "hyperbolic criterion", check_hyperbolic_criterion, 60.0),
    (3, "positivity", check_positivity, 60.0),
    (4, "nilpotency", check_nilpotency, 5.0),
    (5, "delay criterion", check_delay_criterion, 30.0),
    (6, "small-delay sufficient test", check_small_delay, 30.0),
    (7, "resolvent identity", check_resolvent_identity, 10.0),
    (8, "spectral abscissa", check_spectral_abscissa, 10.0),
    (9, "cross-solver convergence", check_convergence, 30.0),
    (10, "heat analyzer", check_heat, 1.0),
]


def _line(num, name, passed, detail, elapsed, limit):
    status = "PASS" if passed else "FAIL"
    return f"criterion {num:2d} {status} {name}: {detail}; {elapsed:.2f}s (limit {limit:.0f}s)"


@pytest.mark.parametrize("num,name,check,limit", CRITERIA, ids=[c[1].replace(" ", "_") for c in CRITERIA])
def test_criterion(num, name, check, limit, capsys):
    passed, detail, elapsed = _timed(check)
    in_time = elapsed < limit
    with capsys.disabled():
        print("\n" + _line(num, name, passed and in_time, detail, elapsed, limit))
    assert passed, detail
    assert in_time, f"took {elapsed:.2f}s, limit {limit}s"


if __name__ == "__main__":
    failed = 0
    for num, name, check, limit in CRITERIA:
        passed, detail, elapsed = _timed(check)
        ok = passed and elapsed < limit
        failed += not ok
        print(_line(num, name, ok, detail, elapsed, limit))
    raise SystemExit(1 if failed else 0)
