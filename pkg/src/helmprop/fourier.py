"""Semiclassical Fourier transform on uniform grids.

Continuum convention::

    F psi(xi) = integral exp(-i <x, xi> / hbar) psi(x) dx
    psi(x)    = (2 pi hbar)^-d integral exp(i <x, xi> / hbar) F psi(xi) dxi

On a grid with origin ``x0``, spacing ``h`` and ``n`` nodes per axis the
frequency nodes are ``xi_k = 2 pi hbar k / (n h)`` (FFT order) and::

    F psi(xi_k) ~= prod(h) * exp(-i <x0, xi_k> / hbar) * fftn(psi)[k]

which is exact (up to truncation of tails) for band-limited functions
supported inside the grid. :func:`inverse` is the exact discrete inverse.
Everything else in the package goes through these helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeError
from .fields import Grid, SampledField

__all__ = [
    "Spectrum",
    "freq_axis",
    "freq_axes",
    "freq_points",
    "forward",
    "inverse",
    "padded",
    "crop",
    "SpectrumInterpolator",
    "centroid",
    "nyquist",
]


def freq_axis(n: int, spacing: float, hbar: float) -> np.ndarray:
    """Frequency nodes of one axis, FFT order."""
    return 2.0 * math.pi * hbar * np.fft.fftfreq(n, spacing)


def freq_axes(grid: Grid, hbar: float) -> list[np.ndarray]:
    return [freq_axis(n, h, hbar) for n, h in zip(grid.n, grid.spacing)]


def freq_points(grid: Grid, hbar: float) -> np.ndarray:
    """All frequency nodes as an (N, d) array, row-major in FFT order."""
    mesh = np.meshgrid(*freq_axes(grid, hbar), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def nyquist(grid: Grid, hbar: float) -> np.ndarray:
    return math.pi * hbar / np.asarray(grid.spacing)


def _origin_phase(grid: Grid, hbar: float, sign: float) -> np.ndarray:
    out = np.ones(grid.shape, dtype=np.complex128)
    for j, ax in enumerate(freq_axes(grid, hbar)):
        shape = [1] * grid.d
        shape[j] = -1
        out = out * np.exp(sign * 1j * grid.origin[j] * ax / hbar).reshape(shape)
    return out


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Samples of ``F psi`` on the frequency nodes of ``grid`` (FFT order)."""

    grid: Grid
    hbar: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ShapeError(f"spectrum shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def axes(self) -> list[np.ndarray]:
        return freq_axes(self.grid, self.hbar)

    def points(self) -> np.ndarray:
        return freq_points(self.grid, self.hbar)

    @property
    def cell(self) -> float:
        """Frequency cell volume ``prod(2 pi hbar / L)``."""
        return float(np.prod(2 * math.pi * self.hbar / self.grid.lengths))


def forward(f: SampledField) -> Spectrum:
    g = f.grid
    vals = g.cell_volume * _origin_phase(g, f.hbar, -1.0) * np.fft.fftn(f.samples)
    return Spectrum(g, f.hbar, vals)


def inverse(s: Spectrum) -> SampledField:
    g = s.grid
    vals = np.fft.ifftn(s.values * _origin_phase(g, s.hbar, 1.0)) / g.cell_volume
    return SampledField(g, s.hbar, vals)


def padded(f: SampledField, factor: int = 2) -> tuple[SampledField, tuple[int, ...]]:
    """Zero-pad by ``factor`` per axis, keeping the data centred.

    Returns the padded field and the index offset of the original block.
    """
    if factor < 1:
        raise ShapeError("padding factor must be >= 1")
    g = f.grid
    n_new = tuple(factor * n for n in g.n)
    offs = tuple(((factor - 1) * n) // 2 for n in g.n)
    origin = tuple(o - k * h for o, k, h in zip(g.origin, offs, g.spacing))
    big = np.zeros(n_new, dtype=np.complex128)
    big[tuple(slice(k, k + n) for k, n in zip(offs, g.n))] = f.samples
    return SampledField(Grid(n_new, g.spacing, origin), f.hbar, big), offs


def crop(f: SampledField, grid: Grid, offsets) -> SampledField:
    sl = tuple(slice(k, k + n) for k, n in zip(offsets, grid.n))
    return SampledField(grid, f.hbar, f.samples[sl])


def centroid(f: SampledField) -> np.ndarray:
    """Centre of mass of ``|psi|^2``; grid centre for a zero field."""
    w = np.abs(f.samples) ** 2
    tot = w.sum()
    if tot == 0:
        return f.grid.center
    return np.array([float(np.sum(m * w) / tot) for m in f.grid.mesh()])


class SpectrumInterpolator:
    """Evaluate ``F psi`` at arbitrary frequencies.

    The field is zero-padded by ``pad`` (which refines the frequency step)
    and its spectrum is demodulated by ``exp(i <c, xi> / hbar)`` with
    ``c`` the centroid of ``|psi|^2``. This leaves a slowly varying
    function of ``xi`` that 8-point Lagrange stencils resolve to high
    accuracy. Frequencies beyond the band evaluate to 0.
    """

    def __init__(self, f: SampledField, pad: int = 2):
        self.hbar = f.hbar
        self.d = f.grid.d
        self.center = centroid(f)
        big, _ = padded(f, pad)
        spec = forward(big)
        demod = spec.values
        axes = spec.axes()
        for j, ax in enumerate(axes):
            shape = [1] * self.d
            shape[j] = -1
            demod = demod * np.exp(1j * self.center[j] * ax / self.hbar).reshape(shape)
        self.values = np.fft.fftshift(demod)
        self.start = np.array([np.sort(ax)[0] for ax in axes])
        self.step = np.array([2 * math.pi * self.hbar / L for L in big.grid.lengths])
        self.band = np.array([np.max(np.abs(ax)) for ax in axes])

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        flat = xi.reshape(-1, self.d)
        if self.d == 1:
            vals = _kernels.lagrange_interp_1d(self.values, self.start[0], self.step[0], flat[:, 0])
        elif self.d == 2:
            vals = _kernels.lagrange_interp_2d(self.values, self.start, self.step, flat)
        else:
            raise ShapeError("spectrum interpolation supports d = 1, 2")
        vals = np.where(np.isnan(vals), 0.0, vals)
        vals = vals * np.exp(-1j * (flat @ self.center) / self.hbar)
        return vals.reshape(xi.shape[:-1])
