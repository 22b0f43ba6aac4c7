"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from rflink import kernels


def cases(rng):
    n = 200_000
    x = rng.standard_normal(n)
    ms = np.unique(np.logspace(0, 4, 40).astype(int))
    nseg, npmd = 20, 20_000
    theta = rng.uniform(0, np.pi, (nseg, npmd))
    delta = rng.uniform(0, np.pi, (nseg, npmd))
    dgd = np.full(nseg, 0.15e-12)
    nl = 100_000
    fwd = 1e-12 * np.cumsum(rng.standard_normal(nl)) * 1e-3
    bwd = fwd.copy()
    omega = rng.standard_normal((nl, 3)) * 1e-12
    s0 = np.array([1.0, 0.0, 0.0])
    axis = np.array([0.0, 0.0, 1.0])
    loop = (fwd, bwd, np.zeros(nl), omega, s0, axis, 2e12, 5e10, 5e-5, 0.25, 453.0,
            18, 9, 1, 7.5e-12, 3e-9, 30.0, 1e-6)
    return {
        f"onepole      n={n}": lambda b: kernels.onepole(x, 0.01, backend=b),
        f"adev_sums    n={n}, {len(ms)} taus": lambda b: kernels.adev_sums(x, ms, backend=b),
        f"pmd_vector   {nseg} x {npmd}": lambda b: kernels.pmd_vector(theta, delta, dgd, backend=b),
        f"servo_loop   n={nl}": lambda b: kernels.servo_loop(*loop, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; only the fallback can be timed")
        return 1
    print(f"{'kernel':40s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
             for b in ("python", "cython")}
        print(f"{name:40s} {t['python']:11.4f} {t['cython']:11.4f} {t['python'] / t['cython']:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
