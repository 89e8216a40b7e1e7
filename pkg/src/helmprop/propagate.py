"""Angular-spectrum propagators between hyperplanes.

For ``m: X -> G X + gamma`` the propagator is ``U = V F`` with

    V phi(x~) = (2 pi hbar)^-d  integral exp(i/hbar (<x~, g(xi)> + <gamma, sigma(xi)>))
                                 chi(xi) phi(xi) dxi

which this module evaluates two ways:

* by direct quadrature on the FFT frequency nodes (reference, O(N^2));
* in factorized form ``F^-1 |J| (g^-1)^* F`` on one injectivity sheet,
  by resampling the spectrum (O(N log N)).

Pure translations reduce to the Fourier multiplier
``exp(i/hbar (gamma0 f(xi) + <pi gamma, xi>))``.

Also provided are the exact discrete adjoint of the quadrature propagator
and the microlocal left inverse ``F^-1 |J|^-1 g^* F`` used by the Egorov
harness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import fourier
from .errors import ConfigError, CoverageError, MicrolocalSupportError
from .fields import Grid, SampledField
from .geometry import (
    AffineMap,
    SheetLabel,
    det_dg,
    g_inverse_batch,
    g_map,
    sheet_labels,
    sigma,
)

log = logging.getLogger(__name__)

__all__ = [
    "Cutoff",
    "EvanescentPolicy",
    "apply_U_gamma",
    "apply_V_G_quadrature",
    "apply_U_G_factorized",
    "apply_U_affine",
    "apply_U_adjoint",
    "apply_U_inverse",
    "half_space_violation",
    "MICROLOCAL_TOL",
]

MICROLOCAL_TOL = 1e-3


@dataclass(frozen=True)
class Cutoff:
    """Radial C-infinity cutoff: 1 for ``|xi| <= radius - margin``, 0 beyond ``radius``.

    The ramp is ``exp(1 - 1 / (1 - s^2))`` with ``s`` the position inside
    the margin.
    """

    radius: float = 0.95
    margin: float = 0.05

    def __post_init__(self):
        if not (0 < self.radius < 1):
            raise ConfigError(f"cutoff radius must lie in (0, 1), got {self.radius}")
        if not (0 < self.margin <= self.radius):
            raise ConfigError(f"cutoff margin must lie in (0, radius], got {self.margin}")

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        r = np.sqrt(np.sum(xi * xi, axis=-1))
        s = (r - (self.radius - self.margin)) / self.margin
        inside = (s > 0) & (s < 1)
        t = np.where(inside, s, 0.0)
        ramp = np.exp(1.0 - 1.0 / (1.0 - t * t))
        return np.where(s <= 0, 1.0, np.where(inside, ramp, 0.0))


@dataclass(frozen=True)
class EvanescentPolicy:
    """Treatment of frequencies with ``|xi| > 1`` in the translation multiplier.

    ``decay`` continues ``f`` as ``i sqrt(|xi|^2 - 1)`` (modes decay for
    ``gamma0 >= 0``); ``truncate`` drops them. Negative ``gamma0`` in decay
    mode would amplify and is refused unless ``force`` is set.
    """

    mode: str = "decay"
    force: bool = False

    def __post_init__(self):
        if self.mode not in ("decay", "truncate"):
            raise ConfigError(f"evanescent mode must be 'decay' or 'truncate', got {self.mode!r}")


def _multiplier(xi: np.ndarray, gamma: np.ndarray, hbar: float, policy: EvanescentPolicy) -> np.ndarray:
    r2 = np.sum(xi * xi, axis=-1)
    prop = r2 <= 1.0
    f = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    lateral = xi @ gamma[1:]
    out = np.exp(1j * (gamma[0] * f + lateral) / hbar)
    if policy.mode == "truncate":
        return np.where(prop, out, 0.0)
    decay = np.sqrt(np.clip(r2 - 1.0, 0.0, None))
    ev = np.exp(-gamma[0] * decay / hbar) * np.exp(1j * lateral / hbar)
    return np.where(prop, out, ev)


def apply_U_gamma(f: SampledField, gamma, policy: EvanescentPolicy = EvanescentPolicy()) -> SampledField:
    """Translation propagator ``F^-1 exp(i/hbar <gamma, sigma>) F``."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (f.grid.d + 1,):
        raise ConfigError(f"gamma must have {f.grid.d + 1} entries")
    if policy.mode == "decay" and gamma[0] < 0 and not policy.force:
        raise ConfigError(
            "gamma0 < 0 would amplify evanescent modes; use truncate mode or force",
            gamma0=float(gamma[0]),
        )
    spec = fourier.forward(f)
    xi = spec.points().reshape(f.grid.shape + (f.grid.d,))
    mult = _multiplier(xi, gamma, f.hbar, policy)
    return fourier.inverse(fourier.Spectrum(f.grid, f.hbar, spec.values * mult))


def half_space_violation(m: AffineMap, grid: Grid) -> float:
    """Fraction of output nodes whose image point ``m(0, x~)`` has ``x0 < 0``."""
    pts = grid.points()
    x0 = pts @ m.G[0, 1:] + m.gamma[0]
    return float(np.mean(x0 < 0))


def _source_weights(xi: np.ndarray, m: AffineMap, chi: Cutoff, hbar: float):
    """Nodes with ``chi > 0`` and their weights ``chi exp(i/hbar <gamma, sigma>)``."""
    c = chi(xi)
    keep = c > 0
    xk = xi[keep]
    w = c[keep] * np.exp(1j * (sigma(xk) @ m.gamma) / hbar)
    return keep, xk, w


def apply_V_G_quadrature(spectrum: fourier.Spectrum, m: AffineMap, chi: Cutoff = Cutoff(),
                         out_grid: Grid | None = None) -> SampledField:
    """Riemann-sum evaluation of ``V`` at every node of ``out_grid``.

    ``spectrum`` holds ``F psi`` on the FFT nodes of its grid; the output
    grid defaults to the same grid.
    """
    if not isinstance(chi, Cutoff):
        raise ConfigError("chi must be a Cutoff")
    grid = spectrum.grid
    out_grid = grid if out_grid is None else out_grid
    if m.d != grid.d or out_grid.d != grid.d:
        raise ConfigError("map, spectrum and output grid dimensions differ")
    hbar = spectrum.hbar
    xi = spectrum.points()
    keep, xk, w = _source_weights(xi, m, chi, hbar)
    w = w * spectrum.values.ravel()[keep] * spectrum.cell / (2 * math.pi * hbar) ** grid.d
    if xk.shape[0] == 0:
        return SampledField(out_grid, hbar, np.zeros(out_grid.shape))
    vals = _kernels.oscillatory_sum(out_grid.points(), g_map(m.G, xk), w, 1.0 / hbar)
    return SampledField(out_grid, hbar, vals.reshape(out_grid.shape))


def apply_U_G_factorized(f: SampledField, G, sheet=SheetLabel.PLUS, chi: Cutoff = Cutoff(),
                         pad: int = 2, tol: float = MICROLOCAL_TOL) -> SampledField:
    """``F^-1 |J| (chi F psi) o g^-1 F`` on one sheet.

    The output spectrum is sampled on the padded frequency grid by
    pulling each node back through the sheet inverse and interpolating
    the (centroid-demodulated) input spectrum there. ``|J|`` rather than
    ``J`` appears because the change of variables reverses orientation on
    the minus sheet.

    Raises :class:`MicrolocalSupportError` if more than ``tol`` of the
    cut-off spectral mass lies off ``sheet``.
    """
    G = np.asarray(getattr(G, "G", G), dtype=float)
    sheet = SheetLabel.parse(sheet)
    if sheet == SheetLabel.ZERO:
        raise ConfigError("sheet must be plus or minus")
    if G.shape[0] - 1 != f.grid.d:
        raise ConfigError("map and field dimensions differ")
    big, offs = fourier.padded(f, pad)
    spec = fourier.forward(big)
    xi = spec.points()
    cw = chi(xi)
    mass = np.abs(cw * spec.values.ravel()) ** 2
    total = mass.sum()
    if total == 0:
        return f.with_samples(np.zeros(f.grid.shape))
    live = cw > 0
    labels = np.zeros(xi.shape[0], dtype=np.int8)
    labels[live] = sheet_labels(G, xi[live])
    off = float(mass[labels != int(sheet)].sum() / total)
    if off > tol:
        raise MicrolocalSupportError(
            f"{off:.3e} of the spectral mass lies off the {sheet} sheet (limit {tol:g})", fraction=off
        )
    band = fourier.nyquist(big.grid, f.hbar)
    img = g_map(G, xi[live])
    outside = np.any(np.abs(img) > band, axis=-1)
    if mass[live][outside].sum() > tol * total:
        raise CoverageError("the image spectrum exceeds the grid band; refine the grid")

    interp = fourier.SpectrumInterpolator(f, pad)
    eta = xi  # output nodes coincide with the padded frequency nodes
    src, ok = g_inverse_batch(G, eta, sheet)
    out = np.zeros(eta.shape[0], dtype=np.complex128)
    if ok.any():
        s = src[ok]
        w = chi(s)
        nz = w > 0
        vals = np.zeros(s.shape[0], dtype=np.complex128)
        vals[nz] = np.abs(1.0 / det_dg(G, s[nz])) * w[nz] * interp(s[nz])
        out[ok] = vals
    res = fourier.inverse(fourier.Spectrum(big.grid, f.hbar, out.reshape(big.grid.shape)))
    return fourier.crop(res, f.grid, offs)


def apply_U_affine(f: SampledField, m: AffineMap, chi: Cutoff = Cutoff(), method: str = "quadrature",
                   sheet=SheetLabel.PLUS, policy: EvanescentPolicy = EvanescentPolicy(),
                   pad: int = 2) -> SampledField:
    """``U_m = U_G U_gamma``.

    With ``method='quadrature'`` the phase ``<gamma, sigma>`` is folded into
    a single quadrature over the input spectrum. With ``'factorized'`` the
    translation multiplier is applied first and the linear part is
    resampled on ``sheet``. The identity map returns a copy of ``f``
    without applying the cutoff.
    """
    if m.d != f.grid.d:
        raise ConfigError("map and field dimensions differ")
    if method not in ("quadrature", "factorized"):
        raise ConfigError(f"unknown method {method!r}; use quadrature or factorized")
    if m.is_identity():
        return SampledField(f.grid, f.hbar, f.samples.copy())
    viol = half_space_violation(m, f.grid)
    if viol > 0:
        log.info("%.1f%% of output nodes lie outside the right half-space of the source plane",
                    100 * viol)
    if method == "quadrature":
        return apply_V_G_quadrature(fourier.forward(f), m, chi)
    if method == "factorized":
        g = f if not np.any(m.gamma) else apply_U_gamma(f, m.gamma, policy)
        return apply_U_G_factorized(g, m.G, sheet, chi, pad)
    raise ConfigError(f"unknown method {method!r}; use quadrature or factorized")


def _image_spectrum(u: SampledField, m: AffineMap, xk: np.ndarray) -> np.ndarray:
    """``(F u)(g(xi_k))`` by direct summation over the nodes of ``u``."""
    pts = u.grid.points()
    img = g_map(m.G, xk)
    return u.grid.cell_volume * _kernels.oscillatory_sum(img, pts, u.samples.ravel(), -1.0 / u.hbar)


def apply_U_adjoint(u: SampledField, m: AffineMap, chi: Cutoff = Cutoff()) -> SampledField:
    """Exact adjoint of the quadrature propagator for the grid inner product."""
    spec = fourier.forward(u)
    xi = spec.points()
    keep, xk, w = _source_weights(xi, m, chi, u.hbar)
    vals = np.zeros(xi.shape[0], dtype=np.complex128)
    if xk.shape[0]:
        vals[keep] = np.conj(w) * _image_spectrum(u, m, xk)
    return fourier.inverse(fourier.Spectrum(u.grid, u.hbar, vals.reshape(u.grid.shape)))


def apply_U_inverse(u: SampledField, m: AffineMap, sheet=SheetLabel.PLUS, evaluate: str = "direct",
                    pad: int = 2) -> SampledField:
    """Microlocal left inverse ``F^-1 exp(-i/hbar <gamma, sigma>) |J|^-1 g^* F`` on ``sheet``.

    ``(F u)(g(xi))`` is summed directly over the grid (``evaluate='direct'``)
    or interpolated from the padded spectrum (``'interpolate'``).
    """
    sheet = SheetLabel.parse(sheet)
    if sheet == SheetLabel.ZERO:
        raise ConfigError("sheet must be plus or minus")
    spec = fourier.forward(u)
    xi = spec.points()
    live = np.sum(xi * xi, axis=-1) < 1.0
    live[live] = sheet_labels(m.G, xi[live]) == int(sheet)
    xk = xi[live]
    vals = np.zeros(xi.shape[0], dtype=np.complex128)
    if xk.shape[0]:
        if evaluate == "direct":
            img = _image_spectrum(u, m, xk)
        elif evaluate == "interpolate":
            img = fourier.SpectrumInterpolator(u, pad)(g_map(m.G, xk))
        else:
            raise ConfigError(f"unknown evaluation {evaluate!r}")
        phase = np.exp(-1j * (sigma(xk) @ m.gamma) / u.hbar)
        vals[live] = phase * np.abs(det_dg(m.G, xk)) * img
    return fourier.inverse(fourier.Spectrum(u.grid, u.hbar, vals.reshape(u.grid.shape)))
