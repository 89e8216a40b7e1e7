"""Time the numba kernels against their numpy fallbacks.

Run ``python3 benchmarks/bench_kernels.py [--repeat R]``. Each kernel is
called once per backend to compile or warm caches, then timed as the
best of ``R`` calls. Outputs of the two backends are compared so a
speedup never hides a wrong answer.
"""

from __future__ import annotations

import argparse
import logging
import time

import numpy as np

from helmprop import _kernels

log = logging.getLogger(__name__)


def _cases(rng):
    n = 4096
    pts = np.linspace(-4, 4, n, endpoint=False)[:, None]
    freqs = rng.uniform(-0.9, 0.9, (n, 1))
    weights = rng.normal(size=n) + 1j * rng.normal(size=n)
    samples = rng.normal(size=n) + 1j * rng.normal(size=n)
    grid2 = rng.normal(size=(256, 256)) + 0j
    targets1 = rng.uniform(10, n - 10, 200_000)
    targets2 = rng.uniform(10, 246, (100_000, 2))
    centers = np.arange(0, n, 8)
    xis = np.linspace(-1, 1, 256)
    phat = rng.normal(size=(1023, 512)) + 0j
    return {
        "oscillatory_sum 4096x4096": lambda: _kernels.oscillatory_sum(pts, freqs, weights, 100.0),
        "lagrange_interp_1d 200k": lambda: _kernels.lagrange_interp_1d(samples, 0.0, 1.0, targets1),
        "lagrange_interp_2d 100k": lambda: _kernels.lagrange_interp_2d(grid2, (0.0, 0.0), (1.0, 1.0), targets2),
        "gabor_coefficients 512x256": lambda: _kernels.gabor_coefficients(
            samples, -4.0, 8.0 / n, 0.01, 0.07, centers, xis, 64),
        "weyl_assemble 512": lambda: _kernels.weyl_assemble(phat, 512),
    }


def _best(fn, repeat):
    out = fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':30s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    previous = _kernels.backend()
    try:
        for name, fn in cases.items():
            _kernels.use_backend("numba")
            t_nb, a = _best(fn, args.repeat)
            _kernels.use_backend("numpy")
            t_np, b = _best(fn, args.repeat)
            diff = float(np.nanmax(np.abs(np.asarray(a) - np.asarray(b))))
            print(f"{name:30s} {1e3 * t_nb:10.2f} {1e3 * t_np:10.2f} {t_np / t_nb:8.1f} {diff:10.1e}")
    finally:
        _kernels.use_backend(previous)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
