"""Compare the compiled and pure-Python SSA event loops.

    python3 benchmarks/bench_ssa.py [--runs 2000] [--T 10] [--repeat 3]

Both backends are fed the same uniforms, so the script also checks that the
final states agree exactly before reporting timings.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from weightflow.ssa import builtin_system, simulate_final_states
from weightflow.ssa.gillespie import get_backend


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--T", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--systems", nargs="*", default=["birth_death", "sis_epidemic", "toggle_switch"])
    args = ap.parse_args()

    try:
        get_backend("cython")
    except ImportError:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")

    print(f"{'system':<15}{'runs':>7}{'cython s':>11}{'python s':>11}{'speedup':>9}  same")
    for name in args.systems:
        system = builtin_system(name)
        out = {}

        def run(backend):
            out[backend] = simulate_final_states(system, args.runs, args.T, seed=1, backend=backend)

        t_c = best_of(lambda: run("cython"), args.repeat)
        t_p = best_of(lambda: run("python"), max(1, args.repeat - 2))
        same = np.array_equal(out["cython"], out["python"])
        print(f"{name:<15}{args.runs:>7}{t_c:>11.3f}{t_p:>11.3f}{t_p / t_c:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
