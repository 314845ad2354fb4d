"""Time the compiled projection kernels against the NumPy fallback.

Both backends are imported directly, so one process measures the pair
on identical inputs and cross-checks their outputs while it is at it.

    python3 benchmarks/bench_kernels.py --dim 50 --repeats 7
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from bilevelkit import _kernels_py

try:
    from bilevelkit import _kernels_cy
except ImportError:
    _kernels_cy = None


def make_cases(dim: int, rng: np.random.Generator):
    lo = -rng.uniform(0.2, 1.0, dim)
    hi = rng.uniform(0.2, 1.0, dim)
    a = rng.standard_normal(dim)
    center = 0.1 * rng.standard_normal(dim)
    return [
        ("box", lambda mod, Z: mod.box_project(Z, lo, hi)),
        ("halfspace", lambda mod, Z: mod.halfspace_project(Z, a, 0.25)),
        ("l2ball", lambda mod, Z: mod.l2ball_project(Z, center, 1.0)),
        ("simplex", lambda mod, Z: mod.simplex_project(Z, 1.0)),
        ("l1ball", lambda mod, Z: mod.l1ball_project(Z, 1.0)),
    ]


def best_time(fn, repeats: int) -> float:
    # one warm-up call, then best-of-repeats to dodge scheduler noise
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--batches", type=int, nargs="+",
                    default=[1, 64, 4096])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _kernels_cy is None:
        print("compiled backend unavailable; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    cases = make_cases(args.dim, rng)
    print(f"dim={args.dim}, best of {args.repeats} runs, times in microseconds")
    print(f"{'kernel':<10} {'batch':>6} {'python':>10} {'cython':>10} "
          f"{'speedup':>8} {'max|diff|':>10}")
    for name, call in cases:
        for b in args.batches:
            Z = 2.0 * rng.standard_normal((b, args.dim))
            t_py = best_time(lambda: call(_kernels_py, Z), args.repeats)
            t_cy = best_time(lambda: call(_kernels_cy, Z), args.repeats)
            diff = float(np.max(np.abs(call(_kernels_py, Z)
                                       - call(_kernels_cy, Z))))
            print(f"{name:<10} {b:>6} {1e6 * t_py:>10.1f} {1e6 * t_cy:>10.1f} "
                  f"{t_py / t_cy:>7.1f}x {diff:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
