"""Hot loops, with a numba implementation and a pure numpy fallback.

The backend is picked once at import time from ``HELMPROP_BACKEND``
(``numba`` or ``numpy``). Without the variable, numba is used when it
imports cleanly. :func:`use_backend` switches at runtime, which the
benchmark and the equivalence tests rely on.
"""

from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

try:
    import numba
    from numba import njit, prange

    # The bundled TBB is often too old; prefer the other layers.
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

__all__ = [
    "HAVE_NUMBA",
    "backend",
    "use_backend",
    "set_threads",
    "oscillatory_sum",
    "lagrange_interp_1d",
    "lagrange_interp_2d",
    "gabor_coefficients",
    "weyl_assemble",
]

STENCIL = 8
_CHUNK_ELEMS = 1 << 21


def _initial_backend() -> str:
    requested = os.environ.get("HELMPROP_BACKEND", "").strip().lower()
    if requested in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if requested not in ("numba", "numpy"):
        raise ValueError(f"HELMPROP_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        log.warning("numba requested but not importable; using numpy")
        return "numpy"
    return requested


_backend = _initial_backend()


def backend() -> str:
    return _backend


def use_backend(name: str) -> str:
    """Select ``numba`` or ``numpy``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not available")
    previous, _backend = _backend, name
    return previous


def set_threads(n: int | None) -> None:
    """Cap worker threads for parallel kernels (no-op on the numpy backend)."""
    if n is None or not HAVE_NUMBA:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


_env_threads = os.environ.get("HELMPROP_THREADS")
if _env_threads:
    set_threads(int(_env_threads))


# ---------------------------------------------------------------------------
# Lagrange stencils

def _lagrange_weights_np(s):
    """Weights of the 8-point stencil at fractional offsets ``s`` in [0, 1).

    Nodes sit at -3..4 relative to the left neighbour of the target.
    """
    nodes = np.arange(-3, 5, dtype=float)
    t = s[:, None]
    w = np.ones((s.size, STENCIL))
    for m in range(STENCIL):
        for q in range(STENCIL):
            if q != m:
                w[:, m] *= (t[:, 0] - nodes[q]) / (nodes[m] - nodes[q])
    return w


def _stencil_origin(targets, x0, h, n):
    u = (targets - x0) / h
    finite = np.isfinite(u)
    base = np.floor(np.where(finite, u, 0.0)).astype(np.int64)
    start = base - 3
    ok = (start >= 0) & (start + STENCIL <= n) & finite
    return u - base, start, ok


def _lagrange_1d_np(values, x0, h, targets):
    n = values.shape[0]
    s, start, ok = _stencil_origin(targets, x0, h, n)
    out = np.full(targets.shape, np.nan + 0j, dtype=np.complex128)
    if not ok.any():
        return out
    w = _lagrange_weights_np(s[ok])
    idx = start[ok][:, None] + np.arange(STENCIL)
    out[ok] = np.sum(w * values[idx], axis=1)
    return out


def _lagrange_2d_np(values, x0, h, targets):
    n0, n1 = values.shape
    s0, a0, ok0 = _stencil_origin(targets[:, 0], x0[0], h[0], n0)
    s1, a1, ok1 = _stencil_origin(targets[:, 1], x0[1], h[1], n1)
    ok = ok0 & ok1
    out = np.full(targets.shape[0], np.nan + 0j, dtype=np.complex128)
    if not ok.any():
        return out
    w0 = _lagrange_weights_np(s0[ok])
    w1 = _lagrange_weights_np(s1[ok])
    i0 = a0[ok][:, None] + np.arange(STENCIL)
    i1 = a1[ok][:, None] + np.arange(STENCIL)
    block = values[i0[:, :, None], i1[:, None, :]]
    out[ok] = np.einsum("ma,mab,mb->m", w0, block, w1)
    return out


# ---------------------------------------------------------------------------
# numpy implementations

def _oscillatory_sum_np(points, freqs, weights, scale):
    m = points.shape[0]
    k = freqs.shape[0]
    out = np.empty(m, dtype=np.complex128)
    rows = max(1, _CHUNK_ELEMS // max(k, 1))
    for a in range(0, m, rows):
        phase = points[a:a + rows] @ freqs.T
        out[a:a + rows] = np.exp(1j * scale * phase) @ weights
    return out


def _gabor_np(samples, y0, dy, hbar, width, centers, xis, half):
    # For each frequency row the windowed sum is a correlation with the
    # Gaussian window, done by FFT along the grid.
    n = samples.size
    y = y0 + dy * np.arange(n)
    offsets = dy * np.arange(-half, half + 1)
    window = np.exp(-offsets**2 / (2.0 * width * width))
    m = n + 2 * half + 1
    nfft = 1 << int(np.ceil(np.log2(m)))
    wpad = np.zeros(nfft)
    wpad[: window.size] = window[::-1]
    wspec = np.fft.fft(wpad)
    out = np.empty((centers.size, xis.size), dtype=np.complex128)
    rows = max(1, _CHUNK_ELEMS // nfft)
    for b in range(0, xis.size, rows):
        xi = xis[b:b + rows]
        mod = samples[None, :] * np.exp(-1j * np.outer(xi, y) / hbar)
        spec = np.fft.fft(mod, nfft, axis=1) * wspec[None, :]
        conv = np.fft.ifft(spec, axis=1)
        # conv[c + half] = sum_j f_j w(j - c) for grid index c.
        out[:, b:b + rows] = conv[:, centers + half].T
    return out


def _weyl_assemble_np(phat, n):
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return phat[i + j, (i - j) % n]


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(parallel=True, cache=True, fastmath=False)
    def _oscillatory_sum_nb(points, freqs, weights, scale):
        m, d = points.shape
        k = freqs.shape[0]
        out = np.empty(m, dtype=np.complex128)
        for a in prange(m):
            re = 0.0
            im = 0.0
            for b in range(k):
                ph = 0.0
                for c in range(d):
                    ph += points[a, c] * freqs[b, c]
                ph *= scale
                co = np.cos(ph)
                si = np.sin(ph)
                wr = weights[b].real
                wi = weights[b].imag
                re += wr * co - wi * si
                im += wr * si + wi * co
            out[a] = complex(re, im)
        return out

    @njit(cache=True)
    def _stencil_weights_nb(s, w):
        for m in range(STENCIL):
            acc = 1.0
            for q in range(STENCIL):
                if q != m:
                    acc *= (s - (q - 3)) / ((m - 3) - (q - 3))
            w[m] = acc

    @njit(parallel=True, cache=True)
    def _lagrange_1d_nb(values, x0, h, targets):
        n = values.shape[0]
        m = targets.shape[0]
        out = np.empty(m, dtype=np.complex128)
        for a in prange(m):
            u = (targets[a] - x0) / h
            if not np.isfinite(u):
                out[a] = complex(np.nan, np.nan)
                continue
            base = int(np.floor(u))
            start = base - 3
            if start < 0 or start + STENCIL > n:
                out[a] = complex(np.nan, np.nan)
                continue
            w = np.empty(STENCIL)
            _stencil_weights_nb(u - base, w)
            acc = 0j
            for q in range(STENCIL):
                acc += w[q] * values[start + q]
            out[a] = acc
        return out

    @njit(parallel=True, cache=True)
    def _lagrange_2d_nb(values, x0, h, targets):
        n0, n1 = values.shape
        m = targets.shape[0]
        out = np.empty(m, dtype=np.complex128)
        for a in prange(m):
            u0 = (targets[a, 0] - x0[0]) / h[0]
            u1 = (targets[a, 1] - x0[1]) / h[1]
            if not (np.isfinite(u0) and np.isfinite(u1)):
                out[a] = complex(np.nan, np.nan)
                continue
            b0 = int(np.floor(u0))
            b1 = int(np.floor(u1))
            s0 = b0 - 3
            s1 = b1 - 3
            if s0 < 0 or s0 + STENCIL > n0 or s1 < 0 or s1 + STENCIL > n1:
                out[a] = complex(np.nan, np.nan)
                continue
            w0 = np.empty(STENCIL)
            w1 = np.empty(STENCIL)
            _stencil_weights_nb(u0 - b0, w0)
            _stencil_weights_nb(u1 - b1, w1)
            acc = 0j
            for p in range(STENCIL):
                row = 0j
                for q in range(STENCIL):
                    row += w1[q] * values[s0 + p, s1 + q]
                acc += w0[p] * row
            out[a] = acc
        return out

    @njit(parallel=True, cache=True)
    def _gabor_nb(samples, y0, dy, hbar, width, centers, xis, half):
        n = samples.size
        na = centers.size
        nb = xis.size
        out = np.empty((na, nb), dtype=np.complex128)
        for a in prange(na):
            c = centers[a]
            lo = max(0, c - half)
            hi = min(n, c + half + 1)
            seg = np.empty(hi - lo, dtype=np.complex128)
            ys = np.empty(hi - lo)
            for j in range(lo, hi):
                off = (j - c) * dy
                seg[j - lo] = samples[j] * np.exp(-off * off / (2.0 * width * width))
                ys[j - lo] = y0 + j * dy
            for b in range(nb):
                # Phase advanced by a fixed rotation, re-seeded every 64 steps.
                xi = xis[b] / hbar
                step = np.exp(-1j * dy * xi)
                acc = 0.0 + 0.0j
                rot = 0.0 + 0.0j
                for j in range(hi - lo):
                    if j % 64 == 0:
                        rot = np.exp(-1j * ys[j] * xi)
                    acc += seg[j] * rot
                    rot *= step
                out[a, b] = acc
        return out

    @njit(parallel=True, cache=True)
    def _weyl_assemble_nb(phat, n):
        out = np.empty((n, n), dtype=np.complex128)
        for i in prange(n):
            for j in range(n):
                r = i - j
                if r < 0:
                    r += n
                out[i, j] = phat[i + j, r]
        return out


# ---------------------------------------------------------------------------
# public dispatchers

def oscillatory_sum(points, freqs, weights, scale):
    """``out[j] = sum_k weights[k] * exp(1j * scale * <points[j], freqs[k]>)``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    freqs = np.ascontiguousarray(freqs, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.complex128)
    if points.ndim == 1:
        points = points[:, None]
    if freqs.ndim == 1:
        freqs = freqs[:, None]
    if _backend == "numba":
        return _oscillatory_sum_nb(points, freqs, weights, float(scale))
    return _oscillatory_sum_np(points, freqs, weights, float(scale))


def lagrange_interp_1d(values, x0, h, targets):
    """8-point Lagrange interpolation of uniform samples.

    Targets whose stencil leaves the sample range come back as NaN.
    """
    values = np.ascontiguousarray(values, dtype=np.complex128)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if _backend == "numba":
        return _lagrange_1d_nb(values, float(x0), float(h), targets)
    return _lagrange_1d_np(values, float(x0), float(h), targets)


def lagrange_interp_2d(values, x0, h, targets):
    """Separable 8x8-point Lagrange interpolation; ``targets`` is (M, 2)."""
    values = np.ascontiguousarray(values, dtype=np.complex128)
    targets = np.ascontiguousarray(targets, dtype=np.float64).reshape(-1, 2)
    x0 = np.asarray(x0, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if _backend == "numba":
        return _lagrange_2d_nb(values, x0, h, targets)
    return _lagrange_2d_np(values, x0, h, targets)


def gabor_coefficients(samples, y0, dy, hbar, width, centers, xis, half):
    """Windowed sums ``sum_j f_j exp(-(y_j - y_c)^2 / 2 w^2 - i y_j xi / hbar)``.

    ``centers`` are grid indices of the window centres, ``half`` the
    window half-length in samples.
    """
    samples = np.ascontiguousarray(samples, dtype=np.complex128)
    centers = np.ascontiguousarray(centers, dtype=np.int64)
    xis = np.ascontiguousarray(xis, dtype=np.float64)
    if _backend == "numba":
        return _gabor_nb(samples, float(y0), float(dy), float(hbar), float(width), centers, xis, int(half))
    return _gabor_np(samples, float(y0), float(dy), float(hbar), float(width), centers, xis, int(half))


def weyl_assemble(phat, n):
    """Gather ``K[i, j] = phat[i + j, (i - j) mod n]``."""
    phat = np.ascontiguousarray(phat, dtype=np.complex128)
    if _backend == "numba":
        return _weyl_assemble_nb(phat, int(n))
    return _weyl_assemble_np(phat, int(n))
