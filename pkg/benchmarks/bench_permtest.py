"""Time the permutation-test kernels on each available backend.

    python benchmarks/bench_permtest.py [--exact-n 20] [--pairs 500] [--iterations 100000]

Both backends must return identical counts; the script exits non-zero if
they disagree.
"""

import argparse
import sys
import time

import numpy as np

from mtcascade import kernels


def best_of(fn, repeat):
    times = []
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--exact-n", type=int, default=20)
    p.add_argument("--pairs", type=int, default=500, help="pairs for the Monte Carlo case")
    p.add_argument("--iterations", type=int, default=100_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    cases = {
        f"exact n={args.exact_n}": (
            "exact",
            rng.normal(0.1, 1.0, args.exact_n),
        ),
        f"monte carlo n={args.pairs} iters={args.iterations}": (
            "mc",
            rng.normal(0.05, 1.0, args.pairs),
        ),
    }
    ok = True
    print(f"{'case':45s} {'backend':9s} {'seconds':>9s} {'count':>9s}")
    for label, (kind, d) in cases.items():
        threshold = abs(float(np.sum(d))) * (1 - 1e-10)
        counts = {}
        timings = {}
        for name in sorted(kernels.BACKENDS):
            impl = kernels.BACKENDS[name]
            if kind == "exact":
                fn = lambda: impl.exact_count(d, threshold)
            else:
                fn = lambda: impl.monte_carlo_count(d, args.seed, 0, args.iterations, threshold)
            timings[name], counts[name] = best_of(fn, args.repeat)
            print(f"{label:45s} {name:9s} {timings[name]:9.4f} {counts[name]:9d}")
        if len(set(counts.values())) > 1:
            print(f"  MISMATCH in {label}: {counts}", file=sys.stderr)
            ok = False
        if "compiled" in timings and timings["compiled"] > 0:
            print(f"  speedup {timings['python'] / timings['compiled']:.1f}x")
    if "compiled" not in kernels.BACKENDS:
        print("compiled backend unavailable; only the python fallback was timed")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
