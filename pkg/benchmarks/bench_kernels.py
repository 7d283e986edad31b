"""Timing of the numba kernels against their numpy/scipy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both paths are called explicitly through ``use_jit``; the first jitted call
is excluded (compilation).  Results are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from boltzspec._kernels import hermite_table, jit_enabled, label_components


def _mask(n, seed=0):
    rng = np.random.default_rng(seed)
    x, y = np.meshgrid(np.linspace(-2, 2, n), np.linspace(-2, 2, n), indexing="ij")
    field = (x**2 - 1) ** 2 + y**2 + 0.3 * np.sin(5 * x * y) + 0.05 * rng.standard_normal(x.shape)
    return field < 0.6


def _bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not jit_enabled():
        print("numba unavailable or disabled (BOLTZSPEC_NO_JIT); nothing to compare")
        return 0
    print(f"{'kernel':<28}{'size':>12}{'numpy [ms]':>14}{'numba [ms]':>14}{'speedup':>10}")
    for n in (256, 1024):
        mask = _mask(n)
        la, ca = label_components(mask, use_jit=True)
        lb, cb = label_components(mask, use_jit=False)
        assert ca == cb and np.array_equal(la, lb)
        t_np = _bench(lambda: label_components(mask, use_jit=False), args.repeat)
        t_nb = _bench(lambda: label_components(mask, use_jit=True), args.repeat)
        print(f"{'label_components (2d)':<28}{n * n:>12}{1e3 * t_np:>14.2f}{1e3 * t_nb:>14.2f}{t_np / t_nb:>10.2f}")
    for nv, nmax in ((801, 60), (4001, 120)):
        v = np.linspace(-2.5, 2.5, nv)
        a = hermite_table(v, 0.05, nmax, use_jit=True)
        b = hermite_table(v, 0.05, nmax, use_jit=False)
        assert np.max(np.abs(a - b)) < 1e-12 * np.abs(b).max()
        t_np = _bench(lambda: hermite_table(v, 0.05, nmax, use_jit=False), args.repeat)
        t_nb = _bench(lambda: hermite_table(v, 0.05, nmax, use_jit=True), args.repeat)
        size = f"{nmax + 1}x{nv}"
        print(f"{'hermite_table':<28}{size:>12}{1e3 * t_np:>14.2f}{1e3 * t_nb:>14.2f}{t_np / t_nb:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
