"""Time the compiled and numpy kernels on representative solves.

    python benchmarks/bench_kernels.py [--repeat N]

Each case runs through the public solvers with the kernel module patched to
one backend, so the numbers include the shared Python set-up cost.
"""
import argparse
import timeit

import numpy as np

from poshyp import kernels
from poshyp.scenarios import random_delay_system, random_field, random_history, random_hyperbolic
from poshyp.solver_exact import solve_moc, solve_moc_delay
from poshyp.solver_fv import cfl_dt, solve_fv

NAMES = ("feedback_trace", "delay_trace", "upwind_feedback", "upwind_delay")


def cases():
    rng = np.random.default_rng(0)
    spec = random_hyperbolic(rng, 4, (0.5, 0.9))
    y0 = random_field(rng, 400, 4)
    dspec = random_delay_system(rng, 3, (0.5, 0.9))
    dt = 0.005
    phi = random_history(rng, 200, 3, dt)
    fv_phi = random_history(rng, 200, 3, cfl_dt(dspec, 200))
    return {
        "moc, n=4, 6000 steps": lambda: solve_moc(spec, y0, 30.0, dt, stride=10 ** 9),
        "moc delay, n=3, 2000 steps": lambda: solve_moc_delay(dspec, phi.query(0.0), phi, 10.0, dt, stride=10 ** 9),
        "fv, n=4, m=400, t=10": lambda: solve_fv(spec, y0, 10.0, 400, stride=10 ** 9),
        "fv delay, n=3, m=200, t=10": lambda: solve_fv(dspec, fv_phi.query(0.0), 10.0, 200, phi=fv_phi,
                                                       stride=10 ** 9),
    }


def use(impl):
    for name in NAMES:
        setattr(kernels, name, getattr(impl, name))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is timed")
    work = cases()
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, fn in work.items():
        times = {}
        for name, impl in backends.items():
            use(impl)
            times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        row = f"{label:32s}" + "".join(f"{times[b]:11.3f}s" for b in backends)
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
