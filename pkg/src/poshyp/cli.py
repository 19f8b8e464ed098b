"""Command line entry point: ``poshyp analyze|simulate|spectrum|verify --config FILE``.

Exit codes for ``analyze``: 0 stable, 1 unstable, 2 marginal, 3 input error.
Other subcommands: 0 success, 1 a verification property failed, 3 input
error, 4 solver/analysis error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, scenarios
from .analysis import RootSearchRegion, count_roots, fit_decay_rate, spectral_abscissa_bound
from .config import ExperimentConfig, load
from .core import Verdict, validate_system
from .errors import ConfigError, PoshypError, PositivityViolation, RootOnBoundary
from .solver_exact import solve_moc, solve_moc_delay
from .solver_fv import solve_fv

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 3
EXIT_SOLVER = 4

VERDICT_EXIT = {Verdict.STABLE: 0, Verdict.UNSTABLE: 1, Verdict.MARGINAL: 2}


def fmt(v) -> str:
    """Locale-independent shortest round-trip float formatting."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return repr(v)
    return str(v)


def emit(out, record: dict):
    for k, v in record.items():
        out.write(f"{k}={fmt(v)}\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path, record):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("-inf" if v < 0 else "inf")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------- analyze

def analyze_record(cfg: ExperimentConfig) -> tuple:
    s = cfg.system
    tol = cfg.analysis.tol_marginal
    if s.kind == "heat":
        rep = analysis.stability_heat_robin(s.heat_k, s.heat_sigma, tol)
        return rep, {}
    spec = cfg.system_spec()
    if s.positivity:
        v = validate_system(spec, positivity=True)
        if not v.ok:
            raise PositivityViolation("; ".join(v.violations))
    rep = analysis.analyze(spec, tol)
    extra = {}
    if spec.has_delay:
        extra["small_delay_sufficient"] = analysis.small_delay_sufficient(spec.delay, spec.n)
    return rep, extra


def cmd_analyze(cfg: ExperimentConfig, out_dir=None, out=None) -> int:
    out = out or sys.stdout
    try:
        rep, extra = analyze_record(cfg)
    except PositivityViolation as exc:
        out.write(f"error=PositivityViolation: {exc}\n")
        return EXIT_INPUT
    record = {
        "r": rep.spectral_radius_loop,
        "verdict": rep.verdict.value,
        "margin": rep.margin,
        "criterion": rep.criterion_used,
        **extra,
    }
    emit(out, record)
    if out_dir:
        write_json(os.path.join(out_dir, "report.json"), {**rep.as_dict(), **extra})
    return VERDICT_EXIT[rep.verdict]


# ---------------------------------------------------------------- simulate

def run_exact(cfg: ExperimentConfig, scale: float = 1.0):
    spec = cfg.system_spec()
    y0 = cfg.initial_field().scaled(scale)
    r = cfg.run
    if spec.has_delay:
        phi = cfg.history_buffer(r.dt, cfg.initial_field())
        if scale != 1.0:
            phi = type(phi)(phi.dt, phi.anchor_time, [f.scaled(scale) for f in phi.snapshots])
        return solve_moc_delay(spec, y0, phi, r.t_final, r.dt, stride=r.output_stride)
    return solve_moc(spec, y0, r.t_final, r.dt, stride=r.output_stride)


def run_fv(cfg: ExperimentConfig):
    spec = cfg.system_spec()
    y0 = cfg.initial_field()
    phi = None
    if spec.has_delay:
        from .solver_fv import cfl_dt
        dt = cfl_dt(spec, cfg.run.m_cells, cfg.run.cfl)
        phi = cfg.history_buffer(dt, y0)
    return solve_fv(spec, y0, cfg.run.t_final, cfg.run.m_cells, cfg.run.cfl, phi=phi)


def cmd_simulate(cfg: ExperimentConfig, out_dir=None, out=None) -> int:
    out = out or sys.stdout
    if cfg.system.kind == "heat":
        out.write("error=the heat example is analyzer-only\n")
        return EXIT_INPUT
    out_dir = out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    try:
        traj = run_exact(cfg)
        fv = run_fv(cfg) if "fv" in cfg.run.solvers else None
    except PoshypError as exc:
        out.write(f"error={type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER
    except ValueError as exc:
        out.write(f"error={exc}\n")
        return EXIT_INPUT
    n = cfg.system_spec().n
    l2 = traj.norms()
    linf = traj.linf_norms()
    header = ["t", "l2_norm", "linf_norm"]
    cols = [traj.times, l2, linf]
    if fv is not None:
        header.append("fv_l2_norm")
        cols.append(np.interp(traj.times, fv.times, fv.norms()))
    write_csv(os.path.join(out_dir, "norms.csv"), header, zip(*cols))
    write_csv(os.path.join(out_dir, "trace.csv"), ["t"] + [f"u_{i + 1}" for i in range(n)],
              ([t, *u] for t, u in zip(traj.trace.times, traj.trace.values)))
    for idx, ts in enumerate(cfg.run.snapshot_times):
        j = int(np.argmin(np.abs(traj.times - ts)))
        f = traj.fields[j]
        write_csv(os.path.join(out_dir, f"snapshot_{idx:03d}.csv"), ["t", "x"] + [f"y_{i + 1}" for i in range(n)],
                  ([traj.times[j], x, *y] for x, y in zip(f.grid, f.values)))

    wf = cfg.analysis.window_fraction
    summary = {}
    fit = fit_decay_rate(list(zip(traj.times, l2)), wf)
    summary.update(rate=fit.rate, r_squared=fit.r_squared, window_start=fit.window[0],
                   window_end=fit.window[1], nilpotent=fit.nilpotent, excluded=fit.excluded)
    if fv is not None:
        fvfit = fit_decay_rate(fv.norm_series(), wf)
        summary.update(fv_rate=fvfit.rate, fv_nilpotent=fvfit.nilpotent)
    try:
        rep, _ = analyze_record(cfg)
        summary.update(verdict=rep.verdict.value, r=rep.spectral_radius_loop, criterion=rep.criterion_used)
        if rep.verdict is not Verdict.MARGINAL:
            summary["verdict_matches_fit"] = (fit.rate < 0) == rep.stable
    except PositivityViolation as exc:
        summary["verdict"] = f"n/a ({exc})"
    if fit.nilpotent:
        summary["note"] = "nilpotent"
    if traj.warnings:
        summary["warnings"] = "; ".join(traj.warnings)
    emit(out, summary)
    write_json(os.path.join(out_dir, "summary.json"), summary)
    return EXIT_OK


# ---------------------------------------------------------------- spectrum

def cmd_spectrum(cfg: ExperimentConfig, out_dir=None, out=None) -> int:
    out = out or sys.stdout
    if cfg.system.kind == "heat":
        out.write("error=spectrum needs a hyperbolic system\n")
        return EXIT_INPUT
    spec = cfg.system_spec()
    a = cfg.analysis
    boxes = ([a.root_box] if a.root_box else []) + list(a.extra_boxes)
    rows = []
    try:
        for box in boxes:
            region = RootSearchRegion(*box, samples_per_side=a.samples_per_side)
            c = count_roots(region, spec)
            rows.append((box, c))
            out.write(f"box={fmt(box[0])}:{fmt(box[1])}x{fmt(box[2])}:{fmt(box[3])} count={c}\n")
        absc = spectral_abscissa_bound(spec, re_max=a.re_max, re_min=a.re_min, im_cap=a.im_cap,
                                       tol=a.abscissa_tol, samples_per_side=a.samples_per_side)
    except RootOnBoundary as exc:
        where = exc.where
        shift = 1e-3 * (1 + abs(where.real)) if where is not None else 1e-3
        out.write(f"error=RootOnBoundary: {exc}; try shifting the box edges by {shift:.3g}\n")
        return EXIT_SOLVER
    except PoshypError as exc:
        out.write(f"error={type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER
    record = {}
    if absc is None:
        out.write("abscissa=no roots found\n")
        record["abscissa"] = None
    else:
        record["abscissa"] = absc
        record["abscissa_tol"] = a.abscissa_tol
        emit(out, {"abscissa": absc, "abscissa_tol": a.abscissa_tol})
        try:
            rep, _ = analyze_record(cfg)
            if rep.verdict is not Verdict.MARGINAL:
                agree = (absc < 0) == rep.stable
                record.update(verdict=rep.verdict.value, signs_agree=agree)
                emit(out, {"verdict": rep.verdict.value, "signs_agree": agree})
        except PositivityViolation:
            pass
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "root_counts.csv"), ["re_min", "re_max", "im_min", "im_max", "count"],
                  ([*b, c] for b, c in rows))
        write_json(os.path.join(out_dir, "spectrum.json"), {"boxes": [{"box": b, "count": c} for b, c in rows], **record})
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _check_resolvent(spec, lams, m):
    worst = 0.0
    ok = True
    for lam in lams:
        rc = analysis.verify_resolvent_identity(spec, lam, m)
        worst = max(worst, rc.residual_inf_norm, rc.neumann_residual)
        ok &= rc.passed
    return ok, worst


def battery(cfg: ExperimentConfig, seed: int = 0) -> list:
    """Run the verification battery; returns ordered (name, passed, detail) tuples."""
    v = cfg.verify
    spec = cfg.system_spec()

    def item_positivity_mode():
        val = validate_system(spec, positivity=True)
        return ("positivity_mode", val.ok, "ok" if val.ok else "PositivityViolation: " + "; ".join(val.violations))

    def item_resolvent_config():
        if spec.has_delay:
            return ("resolvent_identity_config", True, "skipped (delay)")
        try:
            ok, worst = _check_resolvent(spec, v.lambdas, v.resolvent_m)
        except (ValueError, PoshypError) as exc:
            return ("resolvent_identity_config", True, f"skipped ({exc})")
        return ("resolvent_identity_config", ok, f"max_residual={fmt(worst)}")

    def item_resolvent_random():
        rng = np.random.default_rng([seed, 1])
        worst, ok = 0.0, True
        for _ in range(v.random_specs):
            s = scenarios.random_hyperbolic(rng, int(rng.integers(1, 5)), (0.05, 0.5))
            good, w = _check_resolvent(s, v.lambdas, v.resolvent_m)
            ok &= good
            worst = max(worst, w)
        return ("resolvent_identity_random", ok, f"specs={v.random_specs} max_residual={fmt(worst)}")

    def item_positivity_sweep():
        rng = np.random.default_rng([seed, 2])
        worst = math.inf
        for k in range(v.positivity_specs):
            n = int(rng.integers(1, 4))
            if k % 2:
                s = scenarios.random_delay_system(rng, n, (0.2, 1.5))
            else:
                s = scenarios.random_hyperbolic(rng, n, (0.2, 1.5))
            y0 = scenarios.random_field(rng, 64, n, smooth=False)
            dt = 1.0 / 64
            if s.has_delay:
                phi = scenarios.random_history(rng, 64, n, dt)
                y0 = phi.query(0.0)
                tr = solve_moc_delay(s, y0, phi, v.positivity_t_final, dt)
                fv = solve_fv(s, y0, v.positivity_t_final, 64, 0.9, phi=phi)
            else:
                tr = solve_moc(s, y0, v.positivity_t_final, dt)
                fv = solve_fv(s, y0, v.positivity_t_final, 64, 0.9)
            lo = min(min(f.values.min() for f in tr.fields), tr.trace.values.min(),
                     min(st.cells.min() for st in fv.states), fv.trace.values.min())
            worst = min(worst, lo)
        return ("positivity_sweep", worst >= -1e-12, f"specs={v.positivity_specs} min_value={fmt(worst)}")

    def item_convergence():
        if spec.has_delay or cfg.system.kind == "heat":
            return ("cross_solver_convergence", True, "skipped (delay)")
        y0 = scenarios.compatible_quadratic(spec, 800)
        slope, errs = convergence_slope(spec, y0, v.convergence_m, v.convergence_t)
        return ("cross_solver_convergence", slope >= v.min_slope,
                f"slope={fmt(slope)} errors={'/'.join(fmt(e) for e in errs)}")

    def item_verdict_vs_fit():
        try:
            rep, _ = analyze_record(cfg)
        except PositivityViolation as exc:
            return ("verdict_vs_decay", False, f"PositivityViolation: {exc}")
        if rep.verdict is Verdict.MARGINAL:
            return ("verdict_vs_decay", True, "skipped (marginal)")
        traj = run_exact(cfg)
        fit = fit_decay_rate(traj.norm_series(), cfg.analysis.window_fraction)
        return ("verdict_vs_decay", (fit.rate < 0) == rep.stable,
                f"verdict={rep.verdict.value} rate={fmt(fit.rate)}")

    jobs = [("positivity_mode", item_positivity_mode)]
    if validate_system(spec, positivity=True).ok:
        jobs += [("resolvent_identity_config", item_resolvent_config),
                 ("cross_solver_convergence", item_convergence),
                 ("verdict_vs_decay", item_verdict_vs_fit)]
    jobs += [("resolvent_identity_random", item_resolvent_random),
             ("positivity_sweep", item_positivity_sweep)]

    def guarded(name, job):
        try:
            return job()
        except (PoshypError, ValueError) as exc:
            return (name, False, f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=min(4, len(jobs))) as pool:
        futures = [pool.submit(guarded, name, job) for name, job in jobs]
        items = [fut.result() for fut in futures]
    return items


def convergence_slope(spec, y0, ms, t_final, cfl=0.5):
    """Log-log slope of the discrete L2 error of the FV solution against the exact one.

    The exact solution is evaluated at the FV cell centres; ``y0`` should be
    C^1 and compatible with the boundary law, otherwise the error is
    dominated by smeared discontinuities and converges at half order.
    """
    errs = []
    for m in ms:
        fv = solve_fv(spec, y0, t_final, m, cfl)
        errs.append(fv_error(spec, y0, fv.final, t_final))
    slope = -np.polyfit(np.log(ms), np.log(errs), 1)[0]
    return float(slope), errs


def fv_error(spec, y0, state, t_final, dt=None):
    if dt is None:
        dt = t_final / math.ceil(t_final * 8 * float(np.max(spec.velocities)) * state.m)
    exact = solve_moc(spec, y0, t_final, dt, stride=10 ** 9)
    diff = state.cells - exact.final.evaluate(state.centers)
    return math.sqrt((diff ** 2).sum() * state.dx)


def cmd_verify(cfg: ExperimentConfig, out_dir=None, seed: int = 0, out=None) -> int:
    out = out or sys.stdout
    if cfg.system.kind == "heat":
        out.write("error=verify needs a hyperbolic system\n")
        return EXIT_INPUT
    items = battery(cfg, seed)
    failed = False
    for name, ok, detail in items:
        out.write(f"{name}: {'PASS' if ok else 'FAIL'} {detail}\n")
        failed |= not ok
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "verify.json"),
                   {"seed": seed, "items": [{"name": n, "passed": ok, "detail": d} for n, ok, d in items]})
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------- entry point

COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "spectrum": cmd_spectrum, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="poshyp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment configuration")
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--seed", type=int, default=0, help="seed for random specs in verify batteries")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        sys.stdout.write(f"error=config: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stdout.write(f"error=cannot read config: {exc}\n")
        return EXIT_INPUT
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
    if args.command == "verify":
        return cmd_verify(cfg, args.out_dir, args.seed)
    return COMMANDS[args.command](cfg, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
