"""Compare the compiled and pure-Python kernels on the stationarity systems.

    python benchmarks/bench_kernels.py [--reps 5]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from ceqopt.kernels import available_backends, compile_exprs, eval_batch, run_multistart
from ceqopt.problem import Problem
from ceqopt.solver import SolverConfig, start_points, system_jacobian
from ceqopt.stationary import stationary_system

PROBLEMS = {
    "example1a": Problem.from_strings("xy", "x^2 + 2*y^2", [("x - y^2", 1)]),
    "example1b": Problem.from_strings("xy", "x^2 + 2*y^2 - 2*x*y^2", [("x + y^2", 1)]),
    "example2": Problem.from_strings("xyz", "x^2 - 2*y + z^3",
                                     [("x^2 + y + z", 1), ("y - z^2", -1)]),
}


def _median_ms(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--points", type=int, default=20000, help="points for batch evaluation")
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python backend is timed")
    rng = np.random.default_rng(0)
    print(f"{'problem':<11} {'task':<11} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for name, p in PROBLEMS.items():
        system = stationary_system(p)
        jac = system_jacobian(system)
        tape = compile_exprs(list(system) + list(jac.entries))
        cfg = SolverConfig(box=p.search_box())
        starts = start_points(cfg)
        X = rng.uniform(-3, 3, size=(args.points, p.n))
        tasks = {
            "multistart": lambda b: run_multistart(tape, p.n, starts, cfg.lo, cfg.hi, cfg.newton_max_iter,
                                                   cfg.residual_tol, cfg.step_tol, cfg.min_step, backend=b),
            "eval_batch": lambda b: eval_batch(tape, X, backend=b),
        }
        for task, fn in tasks.items():
            ms = {b: _median_ms(lambda: fn(b), args.reps) for b in backends}
            speed = f"{ms['python'] / ms['cython']:8.1f}x" if "cython" in ms else ""
            print(f"{name:<11} {task:<11} " + " ".join(f"{ms[b]:10.2f}ms" for b in backends) + "  " + speed)
        if "cython" in backends:
            a = run_multistart(tape, p.n, starts, cfg.lo, cfg.hi, 100, 1e-10, 1e-12, 1e-6, backend="python")
            c = run_multistart(tape, p.n, starts, cfg.lo, cfg.hi, 100, 1e-10, 1e-12, 1e-6, backend="cython")
            same = np.array_equal(a[0], c[0]) and np.allclose(a[1], c[1], atol=1e-12, equal_nan=True)
            print(f"{'':<11} backends agree on multistart: {same}")


if __name__ == "__main__":
    main()
