"""Semiclassical Gabor spectrograms and what is read off them.

For a 1D field ``f`` and window width ``w`` (default ``sqrt(hbar)``) the
spectrogram is

    S(x, xi) = |<f, phi_{x, xi}>|^2,
    phi_{x, xi}(y) = (pi w^2)^-1/4 exp(-(y - x)^2 / 2 w^2 + i y xi / hbar)

sampled on window centres every few grid nodes and on the frequency
nodes of the field grid. Its phase-space integral is ``2 pi hbar |f|^2``
for any ``w`` (:data:`WINDOW_CONSTANT` per unit ``hbar``).

Peaks, ridges and the transport comparison used for wavefront-set
checks are built on top.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, fourier
from .errors import ConfigError, ResolutionError, RidgeError, ShapeError
from .fields import PhasePoint, SampledField, _atomic_write
from .geometry import CAUSTIC_MARGIN, AffineMap, degeneracy_margin, g_map
from .propagate import Cutoff
from .symplectic import kappa_affine

__all__ = [
    "Spectrogram",
    "Peak",
    "PeakReport",
    "TransportReport",
    "WINDOW_CONSTANT",
    "gabor_spectrogram",
    "peak_find",
    "extract_ridge",
    "hausdorff",
    "transport_compare",
    "write_csv",
    "write_pgm",
]

log = logging.getLogger(__name__)

WINDOW_CONSTANT = 2 * math.pi
MIN_CELLS = 4
_WINDOW_SPAN = 8.0  # window truncated at this many widths


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Intensities ``intensity[i, k]`` at ``(x[i], xi[k])``; ``xi`` ascending."""

    x: np.ndarray
    xi: np.ndarray
    intensity: np.ndarray
    window: float
    hbar: float

    def __post_init__(self):
        I = np.asarray(self.intensity, dtype=float)
        if I.shape != (self.x.size, self.xi.size):
            raise ShapeError("intensity shape does not match the phase-space grid")
        if np.any(I < 0):
            raise ConfigError("spectrogram intensities must be non-negative")
        object.__setattr__(self, "intensity", I)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 1.0

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0]) if self.xi.size > 1 else 1.0

    def mass(self) -> float:
        """Riemann sum of the intensity over the sampled box."""
        return float(self.intensity.sum() * self.dx * self.dxi)

    def expected_mass(self, f: SampledField) -> float:
        """``2 pi hbar |f|^2``."""
        return WINDOW_CONSTANT * self.hbar * f.norm() ** 2

    def argmax(self) -> PhasePoint:
        i, k = np.unravel_index(np.argmax(self.intensity), self.intensity.shape)
        return PhasePoint(float(self.x[i]), float(self.xi[k]))


def gabor_spectrogram(f: SampledField, window_width: float | None = None, xi_max: float | None = 1.25,
                      cells_per_width: int = MIN_CELLS) -> Spectrogram:
    """Spectrogram of a 1D field.

    Window centres are every ``stride`` grid nodes with ``stride`` the
    largest step giving ``cells_per_width`` centres per window width.
    Frequencies are the field's FFT nodes with ``|xi| <= xi_max`` (all of
    them when ``xi_max`` is None, which is what the mass identity needs
    for broadband fields). Raises :class:`ResolutionError` when either
    axis has fewer than 4 samples per window width (``w`` in x,
    ``hbar / w`` in xi).
    """
    if f.grid.d != 1:
        raise ShapeError("spectrograms are computed for 1D fields")
    hbar = f.hbar
    w = math.sqrt(hbar) if window_width is None else float(window_width)
    if not w > 0:
        raise ConfigError("window width must be positive")
    if cells_per_width < MIN_CELLS:
        raise ResolutionError(f"need at least {MIN_CELLS} cells per window width")
    dy = f.grid.spacing[0]
    if dy > w / cells_per_width:
        raise ResolutionError(
            f"grid spacing {dy:.3g} is coarser than {cells_per_width} cells per window width {w:.3g}"
        )
    xi_all = np.sort(fourier.freq_axis(f.grid.n[0], dy, hbar))
    dxi = xi_all[1] - xi_all[0]
    if dxi > (hbar / w) / cells_per_width:
        raise ResolutionError(
            f"frequency step {dxi:.3g} is coarser than {cells_per_width} cells per window width {hbar / w:.3g}"
        )
    xis = xi_all if xi_max is None else xi_all[np.abs(xi_all) <= xi_max]
    stride = max(1, int(math.floor(w / (cells_per_width * dy))))
    n = f.grid.n[0]
    centers = np.arange(0, n, stride)
    half = int(math.ceil(_WINDOW_SPAN * w / dy))
    y0 = f.grid.origin[0]
    coef = _kernels.gabor_coefficients(f.samples, y0, dy, hbar, w, centers, xis, half)
    intensity = np.abs(coef) ** 2 * dy * dy / math.sqrt(math.pi * w * w)
    return Spectrogram(y0 + dy * centers, xis, intensity, w, hbar)


# ---------------------------------------------------------------------------
# peaks

@dataclass(frozen=True)
class Peak:
    x: float
    xi: float
    intensity: float

    def as_point(self) -> PhasePoint:
        return PhasePoint(self.x, self.xi)


@dataclass
class PeakReport:
    """Peaks sorted by intensity; ``complete`` is False if fewer than requested were found."""

    peaks: list
    requested: int
    complete: bool

    def __len__(self) -> int:
        return len(self.peaks)


def _local_maxima(I: np.ndarray) -> np.ndarray:
    """Mask of cells not exceeded by any of their 8 neighbours."""
    pad = np.pad(I, 1, mode="constant", constant_values=-np.inf)
    core = pad[1:-1, 1:-1]
    mask = np.ones(I.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if di == 0 and dk == 0:
                continue
            mask &= core >= pad[1 + di:pad.shape[0] - 1 + di, 1 + dk:pad.shape[1] - 1 + dk]
    return mask


def _parabola_offset(a: float, b: float, c: float) -> float:
    den = a - 2 * b + c
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def peak_find(s: Spectrogram, count: int, min_separation: float | None = None,
              threshold: float = 0.05) -> PeakReport:
    """Up to ``count`` local maxima, strongest first.

    Candidates must reach ``threshold`` times the global maximum and lie at
    least ``min_separation`` (default ``2 sqrt(hbar)``) from every stronger
    accepted peak. Positions are refined by a 3-point parabola per axis.
    """
    if count < 1:
        raise ConfigError("peak count must be at least 1")
    sep = 2 * math.sqrt(s.hbar) if min_separation is None else float(min_separation)
    I = s.intensity
    top = float(I.max())
    if top <= 0:
        return PeakReport([], count, False)
    cand = np.argwhere(_local_maxima(I) & (I >= threshold * top))
    order = np.argsort(-I[cand[:, 0], cand[:, 1]], kind="stable")
    peaks: list[Peak] = []
    for i, k in cand[order]:
        x, xi = float(s.x[i]), float(s.xi[k])
        if 0 < i < I.shape[0] - 1:
            x += _parabola_offset(I[i - 1, k], I[i, k], I[i + 1, k]) * s.dx
        if 0 < k < I.shape[1] - 1:
            xi += _parabola_offset(I[i, k - 1], I[i, k], I[i, k + 1]) * s.dxi
        if all(math.hypot(x - p.x, xi - p.xi) >= sep for p in peaks):
            peaks.append(Peak(x, xi, float(I[i, k])))
        if len(peaks) == count:
            break
    return PeakReport(peaks, count, len(peaks) == count)


# ---------------------------------------------------------------------------
# ridges and transport

def extract_ridge(s: Spectrogram, threshold: float = 0.1, max_fill: float = 0.5) -> np.ndarray:
    """Ridge points as an ``(M, 2)`` array of ``(x, xi)``.

    A cell belongs to the ridge when it reaches ``threshold`` times the
    global maximum and is a local maximum along x (within its frequency
    column) or along xi (within its position row). Raises
    :class:`RidgeError` if nothing qualifies or if more than ``max_fill``
    of the cells clear the threshold (mass too diffuse for a ridge).
    """
    I = s.intensity
    top = float(I.max())
    if top <= 0:
        raise RidgeError("spectrogram is identically zero")
    strong = I >= threshold * top
    fill = float(strong.mean())
    if fill > max_fill:
        raise RidgeError(f"{100 * fill:.0f}% of the cells clear the threshold; mass too diffuse", fill=fill)
    pad_x = np.pad(I, ((1, 1), (0, 0)), constant_values=-np.inf)
    along_x = (I >= pad_x[:-2]) & (I >= pad_x[2:])
    pad_k = np.pad(I, ((0, 0), (1, 1)), constant_values=-np.inf)
    along_k = (I >= pad_k[:, :-2]) & (I >= pad_k[:, 2:])
    idx = np.argwhere(strong & (along_x | along_k))
    if idx.size == 0:
        raise RidgeError("no ridge points above the threshold")
    return np.stack([s.x[idx[:, 0]], s.xi[idx[:, 1]]], axis=-1)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point sets in the (x, xi) plane."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if a.size == 0 or b.size == 0:
        raise RidgeError("Hausdorff distance of an empty set")

    def directed(p, q):
        worst = 0.0
        for s in range(0, p.shape[0], 2048):
            d = np.sqrt(((p[s:s + 2048, None, :] - q[None, :, :]) ** 2).sum(-1)).min(axis=1)
            worst = max(worst, float(d.max()))
        return worst

    return max(directed(a, b), directed(b, a))


@dataclass
class TransportReport:
    distance: float
    tolerance: float
    passed: bool
    hbar: float
    input_points: int
    mapped_points: int
    output_points: int
    mapped: np.ndarray = field(repr=False)
    output: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "distance_in_sqrt_hbar": self.distance / math.sqrt(self.hbar),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "hbar": self.hbar,
            "input_points": self.input_points,
            "mapped_points": self.mapped_points,
            "output_points": self.output_points,
        }


def _transmitted(m: AffineMap, xi: np.ndarray, chi: Cutoff, chi_min: float) -> np.ndarray:
    """Frequencies ``xi`` (shape ``(M, 1)``) that the propagator carries to the output."""
    keep = np.abs(xi[:, 0]) < 1.0
    keep[keep] = chi(xi[keep]) >= chi_min
    if keep.any():
        keep[keep] = np.abs(degeneracy_margin(m.G, xi[keep])) > CAUSTIC_MARGIN
    return keep


def _image_band_mask(m: AffineMap, eta: np.ndarray, chi: Cutoff, chi_min: float, cell: float) -> np.ndarray:
    """Output frequencies within one cell of ``g`` of a transmitted input frequency."""
    probe = np.linspace(-1.0, 1.0, 20001)[1:-1, None]
    live = probe[_transmitted(m, probe, chi, chi_min)]
    if live.size == 0:
        return np.zeros(eta.shape[0], dtype=bool)
    image = np.sort(g_map(m.G, live)[:, 0])
    pos = np.clip(np.searchsorted(image, eta), 1, image.size - 1)
    gap = np.minimum(np.abs(eta - image[pos - 1]), np.abs(eta - image[pos]))
    return gap <= cell


def transport_compare(f: SampledField, m: AffineMap, propagated: SampledField, chi: Cutoff = Cutoff(),
                      threshold: float = 0.1, chi_min: float = 0.999, tolerance: float | None = None,
                      xi_max: float | None = 1.6) -> TransportReport:
    """Hausdorff distance between ``kappa(ridge(f))`` and ``ridge(propagated)``.

    Only the part of phase space the propagator carries intact is
    compared: input ridge points need ``chi >= chi_min`` and a
    non-degenerate ``dg``, and output ridge points must lie over the image
    of that frequency band. Inside the cutoff ramp the output is damped
    and stretched towards grazing directions, so its ridge drops below
    the intensity threshold there. The pass threshold defaults to
    ``3 sqrt(hbar)``.
    """
    if f.hbar != propagated.hbar:
        raise ConfigError("fields carry different hbar")
    if m.d != 1:
        raise ConfigError("transport comparison is one-dimensional")
    hbar = f.hbar
    tol = 3 * math.sqrt(hbar) if tolerance is None else float(tolerance)
    ridge_in = extract_ridge(gabor_spectrogram(f, xi_max=xi_max), threshold)
    keep = _transmitted(m, ridge_in[:, 1:], chi, chi_min)
    if not keep.any():
        raise RidgeError("no input ridge point is transmitted by the propagator")
    xm, km = kappa_affine(m, (ridge_in[keep, :1], ridge_in[keep, 1:]))
    mapped = np.concatenate([xm, km], axis=-1)
    s_out = gabor_spectrogram(propagated, xi_max=xi_max)
    ridge_out = extract_ridge(s_out, threshold)
    ridge_out = ridge_out[_image_band_mask(m, ridge_out[:, 1], chi, chi_min, s_out.dxi)]
    if ridge_out.size == 0:
        raise RidgeError("the output ridge misses the image of the transmitted band")
    d = hausdorff(mapped, ridge_out)
    log.info("transport distance %.4g (%.2f sqrt(hbar))", d, d / math.sqrt(hbar))
    return TransportReport(d, tol, d <= tol, hbar, ridge_in.shape[0], mapped.shape[0], ridge_out.shape[0],
                           mapped, ridge_out)


# ---------------------------------------------------------------------------
# output formats

def write_csv(s: Spectrogram, path) -> None:
    """Matrix CSV: header ``x\\xi, xi_0, ...``; one row per window centre."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x\\xi"] + [f"{v:.12g}" for v in s.xi])
    for x, row in zip(s.x, s.intensity):
        w.writerow([f"{x:.12g}"] + [f"{v:.10e}" for v in row])
    _atomic_write(Path(path), buf.getvalue().encode())


def write_pgm(s: Spectrogram, path, decades: float = 6.0) -> None:
    """8-bit binary PGM, log-scaled over ``decades`` below the maximum.

    Columns are positions and rows frequencies, highest frequency on top.
    """
    I = s.intensity
    top = I.max()
    if top > 0:
        lv = np.log10(np.maximum(I / top, 10.0 ** -decades))
        img = np.round(255 * (lv + decades) / decades).astype(np.uint8)
    else:
        img = np.zeros(I.shape, dtype=np.uint8)
    img = img.T[::-1]
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    _atomic_write(Path(path), header + img.tobytes())
