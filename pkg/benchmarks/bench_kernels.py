"""Wall-clock comparison of the compiled kernels against the NumPy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Each case is timed as the
best of ``--repeat`` runs, and the two results are checked to agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from lookback_ctmc import _kernels_py as py

try:
    from lookback_ctmc import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def poisson_case(n, n_terms, rng):
    offsets = np.array([-1, 0, 1], dtype=np.int64)
    pb = rng.random((3, n))
    pb /= pb.sum(axis=0)
    v = rng.random(n)
    a = 0.8 * n_terms
    return f"uniformization n={n} terms={n_terms}", (pb, offsets, v, a, n_terms), "poisson_series_banded"


def fd_case(nx, nt):
    x = np.linspace(0.0, 3.0, nx + 1)
    mu = np.ascontiguousarray(0.1 * x)
    sig2 = np.ascontiguousarray(0.0625 * x)
    return f"crank-nicolson {nx}x{nt}", (mu, sig2, 0.1, 3.0 / nx, 0.5 / nt, nt, 0.5), "fd_floating_put_sweep"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if compiled is None:
        print("compiled kernels not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    cases = [
        poisson_case(400, 200, rng),
        poisson_case(1600, 800, rng),
        poisson_case(3200, 3000, rng),
        fd_case(100, 100),
        fd_case(200, 200),
    ]
    print(f"{'case':<38}{'numpy [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max diff':>12}")
    for label, fargs, name in cases:
        t_py, want = best_of(lambda: getattr(py, name)(*fargs), args.repeat)
        t_c, got = best_of(lambda: getattr(compiled, name)(*fargs), args.repeat)
        diff = float(np.max(np.abs(np.asarray(got) - np.asarray(want))))
        print(f"{label:<38}{t_py:>12.4f}{t_c:>14.4f}{t_py / t_c:>10.1f}{diff:>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
