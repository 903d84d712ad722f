"""Micro-benchmark: numba kernels versus the pure-numpy fallbacks.

Run with::

    python benchmarks/bench_kernels.py [--sizes 1e4,1e5,1e6] [--repeat 7]

The same comparison can be forced package-wide by setting
``PLASTMIX_NO_NUMBA=1`` before importing plastmix.
"""

import argparse
import time

import numpy as np

from plastmix import kernels
from plastmix.kernels import (_combine_stiffness_np, _qnorm_sq_np,
                              _radial_project_np,
                              _weighted_frobenius_sum_np)


def _time(fn, *args, repeat=7):
    fn(*args)   # warm-up (jit compilation for the numba path)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="1e4,1e5,1e6")
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    sizes = [int(float(s)) for s in args.sizes.split(",")]

    print(f"numba path active: {kernels.USE_NUMBA}")
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        coeffs = np.ascontiguousarray(rng.normal(size=(n, 2)) * 10.0)
        w = np.abs(rng.normal(size=n)) + 0.1
        pairs = [
            ("radial_project", kernels.radial_project, _radial_project_np,
             (coeffs, 5.0)),
            ("weighted_frobenius_sum", kernels.weighted_frobenius_sum,
             _weighted_frobenius_sum_np, (coeffs, w)),
            ("qnorm_sq", kernels.qnorm_sq, _qnorm_sq_np, (coeffs, w)),
        ]
        ne = max(n // 64, 1)
        base = rng.normal(size=(16, 16))
        ax, ay = rng.normal(size=(16, 16)), rng.normal(size=(16, 16))
        rx, ry = rng.normal(size=ne), rng.normal(size=ne)
        pairs.append(("combine_stiffness", kernels.combine_stiffness,
                      _combine_stiffness_np, (rx, ry, base, ax, ay)))
        for name, fast, slow, a in pairs:
            tf = _time(fast, *a, repeat=args.repeat)
            ts = _time(slow, *a, repeat=args.repeat)
            rows.append((name, n, ts, tf, ts / tf))

    print(f"{'kernel':<26}{'n':>10}{'numpy s':>12}{'active s':>12}"
          f"{'speedup':>9}")
    for name, n, ts, tf, sp in rows:
        print(f"{name:<26}{n:>10}{ts:>12.3e}{tf:>12.3e}{sp:>9.2f}")


if __name__ == "__main__":
    main()
