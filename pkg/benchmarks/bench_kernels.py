"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from lqgsphere import _kernels_py

try:
    from lqgsphere import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    m, n = 31 * 32, 512  # angular modes x rows for a 64-column cylinder
    innov = rng.standard_normal((m, n))
    rho = np.repeat(np.exp(-np.arange(1, 32) * 0.098), 32)
    x0 = rng.standard_normal(m)
    yield "ar1_filter", (innov, rho, x0)

    p, s = 256, 256
    yield "first_passage", (np.zeros(p), np.zeros(p), 1.0, 10.0, 1e-2,
                            rng.standard_normal((p, s)), rng.random((p, s)))

    vals = rng.standard_normal((256, 64))
    r = rng.uniform(0, 255, 20000)
    c = rng.uniform(0, 64, 20000)
    yield "bilinear", (vals, r, c, True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  max|diff|")
    for name, a in cases(rng):
        fp = getattr(_kernels_py, name)
        tp = min(timeit.repeat(lambda: fp(*a), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<15}{tp:>12.3f}{'n/a':>12}")
            continue
        fc = getattr(_ckernels, name)
        tc = min(timeit.repeat(lambda: fc(*a), number=1, repeat=args.repeat)) * 1e3
        ra, rc = fp(*a), fc(*a)
        ra = ra if isinstance(ra, tuple) else (ra,)
        rc = rc if isinstance(rc, tuple) else (rc,)
        diff = max(float(np.max(np.abs(np.nan_to_num(np.asarray(x)) - np.nan_to_num(np.asarray(y)))))
                   for x, y in zip(ra, rc))
        print(f"{name:<15}{tp:>12.3f}{tc:>12.3f}{tp / tc:>10.2f}  {diff:.2e}")


if __name__ == "__main__":
    main()
