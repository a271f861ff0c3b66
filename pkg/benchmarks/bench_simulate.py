"""Time the compiled and numpy path-extremes kernels on the same workload.

Usage: python3 benchmarks/bench_simulate.py [--paths 2000] [--steps 10000] [--gammas 5]
"""
import argparse
import time

import numpy as np

from ohlcvol import montecarlo as mc


def run(backend, paths, steps, gammas, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = mc.simulate_extremes(12345, 0, paths, steps, gammas, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=10000)
    ap.add_argument("--gammas", type=int, default=5)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    gammas = np.linspace(0.0, 2.0, args.gammas)
    n = args.paths * args.steps
    results = {}
    backends = ["numpy"] + (["compiled"] if mc.BACKEND == "compiled" else [])
    for b in backends:
        t, out = run(b, args.paths, args.steps, gammas, args.repeats)
        results[b] = (t, out)
        print(f"{b:>9}: {t:8.3f} s  {1e9 * t / n:7.2f} ns/step")
    if len(results) == 2:
        diff = np.max(np.abs(results["numpy"][1] - results["compiled"][1]))
        print(f"speedup: {results['numpy'][0] / results['compiled'][0]:.1f}x  max |diff| = {diff:g}")
    else:
        print("compiled backend not built; only the numpy kernel was timed")


if __name__ == "__main__":
    main()
