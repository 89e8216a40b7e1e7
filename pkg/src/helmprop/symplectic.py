"""Canonical transformations attached to the propagators.

``kappa_translation``, ``kappa_linear`` and ``kappa_affine`` act on
phase points ``(x, xi)`` with ``|xi| < 1``. They take either a
:class:`PhasePoint` (and return one) or a pair of arrays ``(x, xi)`` of
shape ``(..., d)`` (and return a pair). Degenerate frequencies raise:
the caustic is an error, not a value.

``ray_trace`` recomputes the affine map from geometric optics alone, by
intersecting the light ray through ``(0, x)`` with direction
``sigma(xi)`` with the image hyperplane, and is used to cross-check the
analytic formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, SingularityError
from .fields import PhasePoint
from .geometry import (
    DEGENERACY_TOL,
    AffineMap,
    degeneracy_margin,
    dg,
    g_map,
    height,
    sigma,
)

__all__ = [
    "CanonicalMap",
    "kappa_translation",
    "kappa_linear",
    "kappa_affine",
    "ray_trace",
    "t_theta_forward",
    "t_theta_inverse",
    "kappa_tilde_translation",
    "kappa_tilde_linear",
    "fd_jacobian",
    "symplectic_defect",
]


def _unpack(p):
    if isinstance(p, PhasePoint):
        x, xi = p.as_arrays()
        return x.astype(float), xi.astype(float), True
    x, xi = p
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if xi.ndim == 0:
        xi = xi[None]
    if x.shape[-1] != xi.shape[-1]:
        raise ConfigError("x and xi must have the same last dimension")
    return x, xi, False


def _pack(x, xi, as_point):
    if as_point:
        return PhasePoint(tuple(x), tuple(xi))
    return x, xi


def _open_ball(xi):
    r2 = np.sum(xi * xi, axis=-1)
    if np.any(r2 >= 1.0) or not np.all(np.isfinite(r2)):
        raise DomainError("canonical maps are defined for |xi| < 1 only")


def _require_nondegenerate(G, xi, tol=DEGENERACY_TOL):
    margin = degeneracy_margin(G, xi)
    if np.any(np.abs(margin) <= tol):
        worst = float(np.min(np.abs(margin)))
        raise SingularityError(f"degenerate frequency (margin {worst:.3g})", margin=worst)


def kappa_translation(gamma, p):
    """``(x, xi) -> (x + gamma0 xi / f(xi) - pi gamma, xi)``."""
    x, xi, as_point = _unpack(p)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (x.shape[-1] + 1,):
        raise ConfigError(f"gamma must have {x.shape[-1] + 1} entries")
    _open_ball(xi)
    f = height(xi)[..., None]
    return _pack(x + gamma[0] * xi / f - gamma[1:], xi.copy(), as_point)


def kappa_linear(G, p):
    """``(x, xi) -> (dg(xi)^{-T} x, g(xi))``."""
    G = np.asarray(getattr(G, "G", G), dtype=float)
    x, xi, as_point = _unpack(p)
    _open_ball(xi)
    _require_nondegenerate(G, xi)
    D = dg(G, xi)
    xn = np.linalg.solve(np.swapaxes(D, -1, -2), x[..., None])[..., 0]
    return _pack(xn, g_map(G, xi), as_point)


def kappa_affine(m: AffineMap, p):
    """Canonical map of ``X -> G X + gamma``: the linear part after the translation."""
    x, xi, as_point = _unpack(p)
    x1, xi1 = kappa_translation(m.gamma, (x, xi))
    return _pack(*kappa_linear(m.G, (x1, xi1)), as_point)


def ray_trace(m: AffineMap, p):
    """Geometric-optics image of ``(x, xi)`` under ``m``.

    The ray ``A + s sigma(xi)`` with ``A = (0, x)`` meets the hyperplane
    ``m(P0) = {G (0, y) + gamma}`` at ``B = m(0, x_B)``. Returns
    ``(x_B, g(xi))``.
    """
    x, xi, as_point = _unpack(p)
    _open_ball(xi)
    G, gamma = m.G, m.gamma
    s_dir = sigma(xi)
    A = np.concatenate([np.zeros(x.shape[:-1] + (1,)), x], axis=-1)
    Ginv = np.linalg.inv(G)
    w = (A - gamma) @ Ginv.T
    v = s_dir @ Ginv.T
    denom = v[..., 0]
    a = np.linalg.solve(G.T, np.eye(G.shape[0])[0])
    if np.any(np.abs(s_dir @ a) <= DEGENERACY_TOL * np.linalg.norm(a)):
        raise SingularityError("ray is parallel to the image hyperplane")
    s = -w[..., 0] / denom
    y = w + s[..., None] * v
    return _pack(y[..., 1:], g_map(G, xi), as_point)


# ---------------------------------------------------------------------------
# (t, theta) chart, d = 1

def _scalar_pair(p):
    x, xi, as_point = _unpack(p)
    if x.shape[-1] != 1:
        raise ConfigError("the (t, theta) chart is one-dimensional")
    return x[..., 0], xi[..., 0], as_point


def t_theta_forward(p):
    """``(x, xi) -> (t, theta)`` with ``x = t / cos(theta)``, ``xi = sin(theta)``."""
    x, xi, _ = _scalar_pair(p)
    if np.any(np.abs(xi) >= 1.0):
        raise DomainError("the (t, theta) chart needs |xi| < 1")
    theta = np.arcsin(xi)
    t = x * np.cos(theta)
    if np.ndim(t) == 0:
        return float(t), float(theta)
    return t, theta


def t_theta_inverse(t, theta, as_point: bool = True):
    """Back to ``(x, xi)``; domain error when ``|theta| >= pi/2``."""
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(theta) >= 0.5 * math.pi):
        raise DomainError("theta must satisfy |theta| < pi/2")
    x = t / np.cos(theta)
    xi = np.sin(theta)
    if as_point and np.ndim(x) == 0:
        return PhasePoint((float(x),), (float(xi),))
    return x[..., None], xi[..., None]


def _wrap(angle):
    return (np.asarray(angle) + math.pi) % (2 * math.pi) - math.pi


def kappa_tilde_translation(gamma, t, theta):
    """Translation map in the chart: ``(t + g0 sin(theta) - g1 cos(theta), theta)``."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2,):
        raise ConfigError("gamma must have 2 entries in the 1D chart")
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return t + gamma[0] * np.sin(theta) - gamma[1] * np.cos(theta), theta.copy()


def kappa_tilde_linear(alpha, t, theta):
    """Rotation by ``alpha`` (radians) in the chart.

    Principal branch ``(t, theta - alpha)`` when ``cos(theta - alpha) > 0``,
    reflected branch ``(-t, pi + alpha - theta)`` otherwise; both angles
    are reduced to ``(-pi, pi]``, which puts them back in the chart.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    principal = np.cos(theta - alpha) > 0
    t_new = np.where(principal, t, -t)
    th_new = np.where(principal, _wrap(theta - alpha), _wrap(math.pi + alpha - theta))
    return t_new, th_new


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CanonicalMap:
    """One of the three canonical maps, bound to an :class:`AffineMap`."""

    kind: str
    map: AffineMap

    def __post_init__(self):
        if self.kind not in ("translation", "linear", "affine"):
            raise ConfigError(f"unknown canonical map kind {self.kind!r}")

    @classmethod
    def of(cls, m: AffineMap) -> "CanonicalMap":
        if m.is_translation():
            return cls("translation", m)
        if not np.any(m.gamma):
            return cls("linear", m)
        return cls("affine", m)

    def __call__(self, p):
        if self.kind == "translation":
            return kappa_translation(self.map.gamma, p)
        if self.kind == "linear":
            return kappa_linear(self.map.G, p)
        return kappa_affine(self.map, p)

    def as_function(self) -> Callable[[np.ndarray], np.ndarray]:
        """The map on stacked coordinates ``z = (x, xi)`` of length 2d."""
        d = self.map.d

        def fun(z):
            z = np.asarray(z, dtype=float)
            x, xi = self((z[..., :d], z[..., d:]))
            return np.concatenate([x, xi], axis=-1)

        return fun


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], z, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``z``."""
    z = np.asarray(z, dtype=float)
    cols = []
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        cols.append((fun(z + e) - fun(z - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def symplectic_defect(cmap: CanonicalMap, x, xi, h: float = 1e-6) -> float:
    """``max |M^T Omega M - Omega|`` for the finite-difference Jacobian M."""
    d = cmap.map.d
    z = np.concatenate([np.atleast_1d(x), np.atleast_1d(xi)]).astype(float)
    M = fd_jacobian(cmap.as_function(), z, h)
    omega = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    return float(np.max(np.abs(M.T @ omega @ M - omega)))
