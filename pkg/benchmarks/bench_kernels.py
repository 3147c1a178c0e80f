"""Compare the numba kernels with their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--frames 10000000] [--repeat 3]

The first numba call in a fresh cache includes compilation; it is timed
separately and excluded from the steady-state numbers.
"""

import argparse
import time

import numpy as np

from cogcap import _kernels as K


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def report(label, t_numba, t_numpy):
    print(f"{label:<36} numba {t_numba:8.4f} s   numpy {t_numpy:8.4f} s   "
          f"speedup {t_numpy / t_numba:6.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=10_000_000)
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    service = rng.exponential(1.0, size=args.frames)
    arrival = 0.95
    grid = np.linspace(1.0, 60.0, 40)
    re = rng.standard_normal((args.trials, args.samples))
    im = rng.standard_normal((args.trials, args.samples))

    t0 = time.perf_counter()
    K.lindley_path_numba(arrival, service[:10], 0.0)
    K.lindley_exceedances_numba(arrival, service[:10], grid, 0, 0.0)
    K.energy_statistic_numba(re[:2], im[:2])
    print(f"numba warm-up (compile or cache load): {time.perf_counter() - t0:.2f} s\n")

    t_nb, a = best_of(lambda: K.lindley_path_numba(arrival, service, 0.0), args.repeat)
    t_np, b = best_of(lambda: K.lindley_path_numpy(arrival, service, 0.0), args.repeat)
    report(f"Lindley path ({args.frames:.0e} frames)", t_nb, t_np)
    print(f"  max abs difference {np.max(np.abs(a - b)):.2e}")

    t_nb, a = best_of(lambda: K.lindley_exceedances_numba(arrival, service, grid, 1000, 0.0),
                      args.repeat)
    t_np, b = best_of(lambda: K.lindley_exceedances_numpy(arrival, service, grid, 1000, 0.0),
                      args.repeat)
    report("tail counts (40 levels)", t_nb, t_np)
    print(f"  counts equal: {np.array_equal(a[0], b[0])}, entries equal: {np.array_equal(a[1], b[1])}")

    t_nb, a = best_of(lambda: K.energy_statistic_numba(re, im), args.repeat)
    t_np, b = best_of(lambda: K.energy_statistic_numpy(re, im), args.repeat)
    report(f"energy statistic ({args.trials}x{args.samples})", t_nb, t_np)
    print(f"  max rel difference {np.max(np.abs(a / b - 1)):.2e}")


if __name__ == "__main__":
    main()
