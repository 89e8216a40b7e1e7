"""Frequency-side geometry of an affine change of hyperplane.

A transformation ``X -> G X + gamma`` of R^{1+d} acts on reduced
frequencies through ``g = pi o G^T o sigma``, where ``sigma`` lifts
``xi`` to the unit upper hemisphere and ``pi`` drops the first
coordinate. ``g`` is generally two-to-one: the unit ball splits into the
sheets D-, D0, D+ according to the sign of ``<sigma(xi), a>`` with
``a = G^{-T} e0``, and ``g`` is injective on D- and on D+.

Functions accept a single frequency of shape ``(d,)`` or a batch of shape
``(..., d)`` and broadcast accordingly.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    NotInRangeError,
    SingularityError,
    UsageError,
)

__all__ = [
    "AffineMap",
    "SheetLabel",
    "parse_affine",
    "rotation_matrix",
    "height",
    "sigma",
    "g_map",
    "dg",
    "det_dg",
    "jacobian_J",
    "grad_J",
    "degeneracy_margin",
    "degeneracy_test",
    "degeneracy_locus",
    "sheet_classify",
    "sheet_labels",
    "g_inverse_on_sheet",
    "g_inverse_batch",
    "sheet_preimages",
    "tilde_J",
    "tilde_J_batch",
    "DEGENERACY_TOL",
    "CAUSTIC_MARGIN",
]

DEGENERACY_TOL = 1e-9
CAUSTIC_MARGIN = 1e-3
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12
STAGNATION_TOL = 1e-6
_BALL_SLACK = 1e-14


class SheetLabel(enum.IntEnum):
    """Injectivity sheet of ``g``: sign of ``<sigma(xi), a>``."""

    MINUS = -1
    ZERO = 0
    PLUS = 1

    @classmethod
    def parse(cls, text) -> "SheetLabel":
        if isinstance(text, SheetLabel):
            return text
        key = str(text).strip().lower()
        table = {"minus": cls.MINUS, "-": cls.MINUS, "-1": cls.MINUS,
                 "zero": cls.ZERO, "0": cls.ZERO,
                 "plus": cls.PLUS, "+": cls.PLUS, "1": cls.PLUS, "+1": cls.PLUS}
        if key not in table:
            raise UsageError(f"unknown sheet {text!r}; use plus or minus")
        return table[key]

    def __str__(self) -> str:
        return self.name.lower()


def _matrix(G) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] < 2:
        raise ConfigError(f"G must be a square (1+d)x(1+d) matrix, got shape {G.shape}")
    return G


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``X -> G X + gamma`` on R^{1+d}.

    Derived quantities follow the usual splitting ``X = (x0, x)``:
    ``a = G^{-T} e0`` (normal of G P0 in the dual sense), ``b = pi G^T e0``
    and ``G0`` the lower-right d x d block of G.
    """

    G: np.ndarray
    gamma: np.ndarray = field(default=None)

    def __post_init__(self):
        G = _matrix(self.G).copy()
        dim = G.shape[0]
        gamma = np.zeros(dim) if self.gamma is None else np.asarray(self.gamma, dtype=float).copy()
        if gamma.shape != (dim,):
            raise ConfigError(f"gamma must have {dim} entries, got shape {gamma.shape}")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(gamma))):
            raise ConfigError("affine map entries must be finite")
        scale = max(np.linalg.norm(G, 2), 1e-300)
        det = np.linalg.det(G)
        if abs(det) <= 1e-12 * scale**dim:
            raise ConfigError(f"G is singular (det = {det:.3g})")
        G.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def identity(cls, d: int = 1) -> "AffineMap":
        return cls(np.eye(d + 1))

    @classmethod
    def rotation(cls, degrees: float, d: int = 1, axis: int | None = None) -> "AffineMap":
        return cls(rotation_matrix(degrees, d, axis))

    @classmethod
    def translation(cls, gamma) -> "AffineMap":
        gamma = np.asarray(gamma, dtype=float)
        return cls(np.eye(gamma.size), gamma)

    @property
    def d(self) -> int:
        return self.G.shape[0] - 1

    @property
    def a(self) -> np.ndarray:
        e0 = np.zeros(self.d + 1)
        e0[0] = 1.0
        return np.linalg.solve(self.G.T, e0)

    @property
    def b(self) -> np.ndarray:
        return self.G[0, 1:].copy()

    @property
    def G0(self) -> np.ndarray:
        return self.G[1:, 1:].copy()

    @property
    def linear(self) -> "AffineMap":
        return AffineMap(self.G)

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.G - np.eye(self.d + 1)) <= tol) and np.all(np.abs(self.gamma) <= tol))

    def is_translation(self) -> bool:
        return bool(np.array_equal(self.G, np.eye(self.d + 1)))

    def is_orthogonal(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.G.T @ self.G, np.eye(self.d + 1), atol=tol, rtol=0))

    def __call__(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.G.T + self.gamma

    def then(self, other: "AffineMap") -> "AffineMap":
        """Apply ``self`` first, then ``other``."""
        if other.d != self.d:
            raise ConfigError("cannot compose maps of different dimension")
        return AffineMap(other.G @ self.G, other.G @ self.gamma + other.gamma)

    def __repr__(self) -> str:
        return f"AffineMap(G={self.G.tolist()}, gamma={self.gamma.tolist()})"

    def describe(self) -> str:
        return f"G={np.round(self.G, 12).tolist()} gamma={np.round(self.gamma, 12).tolist()}"


def rotation_matrix(degrees: float, d: int = 1, axis: int | None = None) -> np.ndarray:
    """Rotation of R^{1+d} by ``degrees``.

    For d = 1 it acts in the (x0, x1) plane. For d = 2 it turns about the
    coordinate ``axis`` (default 2, which again rotates the (x0, x1) plane).
    The sign is such that ``g(0) = -sin(alpha)``.
    """
    t = math.radians(float(degrees))
    c, s = math.cos(t), math.sin(t)
    if d == 1:
        if axis not in (None, 2):
            raise ConfigError("rotation axis is only meaningful for d = 2")
        return np.array([[c, -s], [s, c]])
    if d != 2:
        raise ConfigError(f"rotations are supported for d = 1, 2 only (got d = {d})")
    axis = 2 if axis is None else int(axis)
    if axis not in (0, 1, 2):
        raise ConfigError(f"axis must be 0, 1 or 2, got {axis}")
    i, j = [k for k in range(3) if k != axis]
    R = np.eye(3)
    R[i, i] = c
    R[i, j] = -s
    R[j, i] = s
    R[j, j] = c
    return R


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _numbers(text: str, what: str) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(not re.fullmatch(_NUM, p) for p in parts):
        raise UsageError(f"malformed number list in {what}: {text!r}")
    return [float(p) for p in parts]


def parse_affine(text: str, d: int | None = None) -> AffineMap:
    """Parse an affine map description.

    Items are ``rot:<deg>`` (``rot:<deg>:<axis>`` for d = 2),
    ``mat:<(1+d)^2 row-major entries>`` and ``trans:<1+d entries>``,
    joined by ``;`` and applied left to right. ``id`` is the identity.
    The dimension is taken from ``d`` or inferred from the items
    (default 1).
    """
    items = [s.strip() for s in str(text).split(";") if s.strip()]
    if not items:
        raise UsageError("empty affine specification")
    parsed = []
    inferred = d
    for item in items:
        kind, _, rest = item.partition(":")
        kind = kind.strip().lower()
        if kind == "id" and not rest:
            parsed.append(("id", None))
            continue
        if kind not in ("rot", "mat", "trans") or not rest:
            raise UsageError(f"unknown affine item {item!r}")
        if kind == "rot":
            fields = rest.split(":")
            if len(fields) > 2:
                raise UsageError(f"rot takes an angle and optional axis: {item!r}")
            ang = _numbers(fields[0], item)
            if len(ang) != 1:
                raise UsageError(f"rot takes a single angle: {item!r}")
            axis = None
            if len(fields) == 2:
                ax = fields[1].strip().lstrip("x")
                if ax not in ("0", "1", "2"):
                    raise UsageError(f"rotation axis must be 0, 1 or 2: {item!r}")
                axis = int(ax)
                if inferred is None:
                    inferred = 2
            parsed.append(("rot", (ang[0], axis)))
            continue
        vals = _numbers(rest, item)
        if kind == "mat":
            dim = math.isqrt(len(vals))
            if dim * dim != len(vals) or dim < 2:
                raise UsageError(f"mat needs (1+d)^2 entries, got {len(vals)}")
            k = dim - 1
        else:
            k = len(vals) - 1
            if k < 1:
                raise UsageError(f"trans needs 1+d entries, got {len(vals)}")
        if inferred is None:
            inferred = k
        elif inferred != k:
            raise UsageError(f"item {item!r} has dimension {k}, expected {inferred}")
        parsed.append((kind, vals))
    dim = 1 if inferred is None else int(inferred)
    out = AffineMap.identity(dim)
    for kind, payload in parsed:
        if kind == "id":
            continue
        if kind == "rot":
            step = AffineMap(rotation_matrix(payload[0], dim, payload[1]))
        elif kind == "mat":
            step = AffineMap(np.asarray(payload).reshape(dim + 1, dim + 1))
        else:
            step = AffineMap.translation(payload)
        out = out.then(step)
    return out


# ---------------------------------------------------------------------------
# lift and frequency map

def _freq(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    return xi


def height(xi) -> np.ndarray:
    """``f(xi) = sqrt(1 - |xi|^2)``; domain error outside the closed ball."""
    xi = _freq(xi)
    r2 = np.sum(xi * xi, axis=-1)
    if np.any(r2 > 1.0 + _BALL_SLACK) or not np.all(np.isfinite(r2)):
        raise DomainError("frequency outside the closed unit ball")
    return np.sqrt(np.clip(1.0 - r2, 0.0, None))


def sigma(xi) -> np.ndarray:
    """Lift to the upper unit hemisphere, ``(sqrt(1 - |xi|^2), xi)``."""
    xi = _freq(xi)
    f = height(xi)
    return np.concatenate([f[..., None], xi], axis=-1)


def _check_dim(G: np.ndarray, xi: np.ndarray) -> None:
    if xi.shape[-1] != G.shape[0] - 1:
        raise ConfigError(f"frequency of dimension {xi.shape[-1]} for a map of dimension {G.shape[0] - 1}")


def g_map(G, xi) -> np.ndarray:
    """``g(xi)``: the last d components of ``G^T sigma(xi)``."""
    G = _matrix(getattr(G, "G", G))
    xi = _freq(xi)
    _check_dim(G, xi)
    return (sigma(xi) @ G)[..., 1:]


def dg(G, xi) -> np.ndarray:
    """Closed-form differential ``-b xi^T / f + G0^T``, shape ``(..., d, d)``."""
    G = _matrix(getattr(G, "G", G))
    xi = _freq(xi)
    _check_dim(G, xi)
    f = height(xi)
    if np.any(f == 0):
        raise DomainError("dg is unbounded on the unit sphere")
    b = G[0, 1:]
    return -b[:, None] * (xi / f[..., None])[..., None, :] + G[1:, 1:].T


def det_dg(G, xi, method: str = "auto") -> np.ndarray:
    """Determinant of ``dg``.

    ``method='closed'`` uses ``det(G0) (1 - <G0^{-1} xi, b> / f)``,
    ``'direct'`` takes the determinant of :func:`dg`; ``'auto'`` prefers
    the closed form when G0 is well conditioned.
    """
    G = _matrix(getattr(G, "G", G))
    xi = _freq(xi)
    _check_dim(G, xi)
    G0 = G[1:, 1:]
    if method == "auto":
        method = "closed" if np.linalg.cond(G0) < 1e10 else "direct"
    if method == "direct":
        return np.linalg.det(dg(G, xi))
    if method != "closed":
        raise ConfigError(f"unknown determinant method {method!r}")
    f = height(xi)
    if np.any(f == 0):
        raise DomainError("dg is unbounded on the unit sphere")
    b = G[0, 1:]
    u = np.linalg.solve(G0, np.moveaxis(xi, -1, 0).reshape(G0.shape[0], -1))
    u = np.moveaxis(u.reshape((G0.shape[0],) + xi.shape[:-1]), 0, -1)
    return np.linalg.det(G0) * (1.0 - np.sum(u * b, axis=-1) / f)


def degeneracy_margin(G, xi) -> np.ndarray:
    """Signed ``<sigma(xi), a> / |a|``; zero exactly on the degeneracy set."""
    G = _matrix(getattr(G, "G", G))
    xi = _freq(xi)
    _check_dim(G, xi)
    e0 = np.zeros(G.shape[0])
    e0[0] = 1.0
    a = np.linalg.solve(G.T, e0)
    return (sigma(xi) @ a) / np.linalg.norm(a)


def degeneracy_test(G, xi, tol: float = DEGENERACY_TOL):
    """True where ``|<sigma(xi), a>| <= tol |a|`` (sigma(xi) lies in G P0)."""
    out = np.abs(degeneracy_margin(G, xi)) <= tol
    return bool(out) if np.ndim(out) == 0 else out


def degeneracy_locus(G) -> np.ndarray:
    """Degenerate frequencies in ``|xi| < 1`` for d = 1 (zero or one point).

    Solves ``a0 sqrt(1 - xi^2) + a1 xi = 0`` with ``a = G^-T e0``, giving
    ``xi = -sign(a0 a1) |a0| / |a|``. When ``a1 = 0`` the only solutions are
    the caustic points ``xi = +-1`` and the result is empty.
    """
    G = _matrix(getattr(G, "G", G))
    if G.shape != (2, 2):
        raise ConfigError("the degeneracy locus is computed for d = 1")
    a = np.linalg.solve(G.T, np.array([1.0, 0.0]))
    if a[1] == 0.0:
        return np.empty(0)
    xi = -math.copysign(1.0, a[0] * a[1]) * abs(a[0]) / math.hypot(a[0], a[1])
    return np.array([xi])


def jacobian_J(G, xi, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """``J = 1 / det dg`` (signed); singularity error on degenerate input."""
    margin = degeneracy_margin(G, xi)
    bad = np.abs(margin) <= tol
    if np.any(bad):
        where = np.asarray(_freq(xi))[np.broadcast_to(bad, np.shape(margin))] if np.ndim(margin) else _freq(xi)
        raise SingularityError(
            f"dg is singular at xi={np.round(np.atleast_2d(where)[0], 12).tolist()} "
            f"(margin {float(np.min(np.abs(margin))):.3g})",
            xi=np.atleast_2d(where)[0].tolist(),
            margin=float(np.min(np.abs(margin))),
        )
    return 1.0 / det_dg(G, xi)


def grad_J(G, xi) -> np.ndarray:
    """Gradient of ``J`` in ``xi`` (Jacobi's formula on the closed-form dg).

    With ``u = dg^{-1} b`` this is ``J (u / f + xi <xi, u> / f^3)``.
    """
    G = _matrix(getattr(G, "G", G))
    xi = _freq(xi)
    f = height(xi)[..., None]
    D = dg(G, xi)
    J = 1.0 / np.linalg.det(D)
    u = np.linalg.solve(D, np.broadcast_to(G[0, 1:], xi.shape)[..., None])[..., 0]
    return J[..., None] * (u / f + xi * np.sum(xi * u, axis=-1, keepdims=True) / f**3)


# ---------------------------------------------------------------------------
# sheets and inverses

def sheet_labels(G, xi, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Vectorized sheet labels as int8 (-1, 0, +1)."""
    m = np.asarray(degeneracy_margin(G, xi))
    out = np.atleast_1d(np.sign(m).astype(np.int8))
    out[np.atleast_1d(np.abs(m) <= tol)] = 0
    return out.reshape(m.shape)


def sheet_classify(G, xi, tol: float = DEGENERACY_TOL) -> SheetLabel:
    """Sheet of a single frequency."""
    xi = _freq(xi)
    if xi.ndim != 1:
        raise ConfigError("sheet_classify takes one frequency; use sheet_labels for batches")
    return SheetLabel(int(sheet_labels(G, xi, tol)))


def _closed_form_preimage(G, eta, sheet):
    """Intersection of the line ``{s : pi G^T s = eta}`` with the unit sphere.

    The line is ``s = t a + c`` with ``c = G^{-T} (0, eta)``, so
    ``<s, a> = t |a|^2 + <a, c>`` and the two roots of ``|s|^2 = 1`` have
    ``<s, a> = +-sqrt(disc)``: the sign picks the sheet. A root is a
    preimage only if it lies on the upper hemisphere.
    """
    dim = G.shape[0]
    e0 = np.zeros(dim)
    e0[0] = 1.0
    a = np.linalg.solve(G.T, e0)
    rhs = np.concatenate([np.zeros(eta.shape[:-1] + (1,)), eta], axis=-1)
    c = np.linalg.solve(G.T, rhs.reshape(-1, dim).T).T.reshape(rhs.shape)
    aa = float(a @ a)
    ac = c @ a
    cc = np.sum(c * c, axis=-1)
    disc = ac * ac - aa * (cc - 1.0)
    root = np.sqrt(np.clip(disc, 0.0, None))
    t = (-ac + int(sheet) * root) / aa
    s = t[..., None] * a + c
    ok = (disc >= 0) & (s[..., 0] > 0)
    return s[..., 1:], ok


def _newton_polish(G, xi, eta, sheet, ok):
    """Backtracking Newton on ``g(xi) = eta``; returns (xi, residual)."""
    xi = xi.copy()
    res = np.full(eta.shape[:-1], np.inf)
    act = ok.copy()
    if not act.any():
        return xi, res
    cur = xi[act]
    target = eta[act]
    r = g_map(G, cur) - target
    rn = np.linalg.norm(r, axis=-1)
    for _ in range(NEWTON_MAX_ITER):
        active = rn > NEWTON_TOL
        if not active.any():
            break
        D = dg(G, cur[active])
        step = np.linalg.solve(D, r[active][..., None])[..., 0]
        lam = np.ones(step.shape[0])
        base = cur[active]
        best = base
        best_rn = rn[active]
        pending = np.ones(step.shape[0], dtype=bool)
        for _ in range(30):
            trial = base - lam[:, None] * step
            inside = np.sum(trial * trial, axis=-1) < 1.0
            trial_rn = np.full(trial.shape[0], np.inf)
            if inside.any():
                tr = g_map(G, trial[inside]) - target[active][inside]
                trial_rn[inside] = np.linalg.norm(tr, axis=-1)
            accept = pending & (trial_rn < best_rn)
            best = np.where(accept[:, None], trial, best)
            best_rn = np.where(accept, trial_rn, best_rn)
            pending &= ~accept
            if not pending.any():
                break
            lam = np.where(pending, 0.5 * lam, lam)
        if np.array_equal(best, base):
            break
        cur[active] = best
        r = g_map(G, cur) - target
        rn = np.linalg.norm(r, axis=-1)
    xi[act] = cur
    res[act] = rn
    return xi, res


def g_inverse_batch(G, eta, sheet, tol: float = DEGENERACY_TOL):
    """Preimages of ``eta`` on one sheet, with a validity mask.

    Returns ``(xi, ok)``; entries with ``ok == False`` have no preimage on
    that sheet (their ``xi`` is NaN).
    """
    G = _matrix(getattr(G, "G", G))
    sheet = SheetLabel.parse(sheet)
    if sheet == SheetLabel.ZERO:
        raise ConfigError("inverse is defined on the minus and plus sheets only")
    eta = _freq(eta)
    _check_dim(G, eta)
    seed, ok = _closed_form_preimage(G, eta, sheet)
    ok &= np.sum(seed * seed, axis=-1) < 1.0
    if ok.any():
        lab = np.zeros(ok.shape, dtype=np.int8)
        lab[ok] = sheet_labels(G, seed[ok], tol)
        ok &= lab == int(sheet)
    xi, res = _newton_polish(G, np.where(ok[..., None], seed, 0.0), eta, sheet, ok)
    ok &= res <= NEWTON_TOL * max(1.0, float(np.max(np.abs(eta), initial=0.0)))
    xi[~ok] = np.nan
    return xi, ok


def g_inverse_on_sheet(G, eta_tilde, sheet) -> np.ndarray:
    """The preimage of ``eta_tilde`` under ``g`` restricted to ``sheet``.

    Seeded by the closed-form intersection of the fibre line with the unit
    sphere, then polished by damped Newton (at most 50 steps). Raises
    :class:`NotInRangeError` when there is no preimage on that sheet and
    :class:`ConvergenceError` when Newton stalls close to a solution.
    """
    G = _matrix(getattr(G, "G", G))
    sheet = SheetLabel.parse(sheet)
    if sheet == SheetLabel.ZERO:
        raise ConfigError("inverse is defined on the minus and plus sheets only")
    eta = _freq(eta_tilde)
    if eta.ndim != 1:
        raise ConfigError("g_inverse_on_sheet takes one frequency; use g_inverse_batch")
    _check_dim(G, eta)
    seed, ok = _closed_form_preimage(G, eta, sheet)
    if not ok or np.sum(seed * seed) >= 1.0:
        raise NotInRangeError(f"eta={eta.tolist()} has no preimage on sheet {sheet}")
    if sheet_labels(G, seed) != int(sheet):
        raise NotInRangeError(f"eta={eta.tolist()} lies on the fold of g")
    xi, res = _newton_polish(G, seed, eta, sheet, np.array(True))
    if res > NEWTON_TOL * max(1.0, float(np.max(np.abs(eta)))):
        if res < STAGNATION_TOL:
            raise ConvergenceError(f"Newton stalled at residual {float(res):.3g}", residual=float(res))
        raise NotInRangeError(f"eta={eta.tolist()} has no preimage on sheet {sheet}")
    return xi


def sheet_preimages(G, eta_tilde) -> dict:
    """All sheet preimages of ``eta_tilde``, keyed by :class:`SheetLabel`."""
    out = {}
    for s in (SheetLabel.PLUS, SheetLabel.MINUS):
        try:
            out[s] = g_inverse_on_sheet(G, eta_tilde, s)
        except NotInRangeError:
            pass
    return out


def tilde_J(G, eta_tilde) -> float:
    """Sum of ``|J|`` over every sheet preimage of ``eta_tilde``.

    The absolute value keeps the two contributions additive: ``J`` is
    negative on the sheet where ``g`` reverses orientation.
    """
    pre = sheet_preimages(G, eta_tilde)
    if not pre:
        raise NotInRangeError(f"eta={np.atleast_1d(eta_tilde).tolist()} is not in the image of g")
    return float(sum(abs(float(jacobian_J(G, xi))) for xi in pre.values()))


def tilde_J_batch(G, eta) -> np.ndarray:
    """Vectorized :func:`tilde_J`; zero where ``eta`` has no preimage."""
    G = _matrix(getattr(G, "G", G))
    eta = _freq(eta)
    total = np.zeros(eta.shape[:-1])
    for s in (SheetLabel.PLUS, SheetLabel.MINUS):
        xi, ok = g_inverse_batch(G, eta, s)
        if ok.any():
            total[ok] += np.abs(1.0 / det_dg(G, xi[ok]))
    return total
