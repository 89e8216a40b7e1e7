"""Numerical harnesses for conjugation identities of the propagators (d = 1).

For ``U = U_m`` and a Weyl observable ``P = Op(p)`` on the output plane:

* inverse conjugation: ``U^-1 P U = Op(r0 + hbar r1) + O(hbar^2)`` with
  ``r0 = p o kappa`` and ``r1 = (i / 2J) {J, r0} = (i / 2J) J'(xi) d_x r0``;
* adjoint conjugation: ``U* P U = Op(|J| p o kappa) + O(hbar^2)``, with no
  order-hbar term;
* ``U* U = F^-1 |J| F`` and ``U U* = F^-1 J~ F`` microlocally, where ``J~``
  sums ``|J|`` over the preimages of a frequency.

The operator identities are probed through coherent-state matrix elements
``<R psi, psi> / |psi|^2`` (never dense propagators), over an hbar sweep,
and summarized by the least-squares slope of log residual against log hbar.

Grids follow ``N = 2^ceil(log2(L * XI_BAND / (pi hbar)))`` so the frequency
band ``pi hbar N / L`` covers ``|xi| <= XI_BAND`` at every hbar.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import fourier
from .errors import (
    ConfigError,
    MicrolocalSupportError,
    SingularityError,
)
from .fields import Grid, PhasePoint, SampledField, coherent_state, inner_product
from .geometry import (
    CAUSTIC_MARGIN,
    AffineMap,
    SheetLabel,
    degeneracy_margin,
    det_dg,
    dg,
    g_inverse_batch,
    g_map,
    grad_J,
    sheet_labels,
    tilde_J_batch,
)
from .propagate import Cutoff, apply_U_adjoint, apply_U_affine, apply_U_inverse
from .symplectic import kappa_affine
from .weyl import OperatorMatrix, SymbolGrid, fit_slope, symbol_of, weyl_quantize

__all__ = [
    "EgorovReport",
    "UnitarityReport",
    "KernelReport",
    "DEFAULT_HBARS",
    "FLOOR",
    "sweep_grid",
    "Pullback",
    "egorov_predicted_symbol",
    "egorov_residual",
    "adjoint_egorov_residual",
    "egorov_sweep",
    "conjugated_symbol",
    "check_probe",
    "unitarity_defect",
    "kernel_expansion_check",
    "kpv_kernel",
    "kvq_kernel",
]

log = logging.getLogger(__name__)

DEFAULT_HBARS = (1 / 40, 1 / 80, 1 / 160)
XI_BAND = 1.6
DEFAULT_LENGTH = 8.0
# Residuals below this are treated as numerical noise.
FLOOR = 1e-9
SUPPORT_TOL = 1e-3
PROBE_MARGIN = 3.0  # in units of sqrt(hbar)
INVERSE_TOL = 1e-3
_FD_STEP = 1e-3


def sweep_grid(hbar: float, length: float = DEFAULT_LENGTH, band: float = XI_BAND) -> Grid:
    """Centred grid whose Nyquist frequency is at least ``band``."""
    n = 1 << int(math.ceil(math.log2(length * band / (math.pi * hbar))))
    return Grid.centered(n, length)


def _callable(p) -> Callable:
    if isinstance(p, SymbolGrid):
        if p.func is None:
            raise ConfigError("a sampled symbol cannot be re-sampled across an hbar sweep; pass a callable")
        return p.func
    if not callable(p):
        raise ConfigError("symbol must be callable as p(x, xi)")
    return p


def _d_first(fn: Callable, x, xi, axis: int, h: float = _FD_STEP):
    """Fourth-order central difference of ``fn(x, xi)`` along one argument."""
    def at(s):
        return fn(x + s, xi) if axis == 0 else fn(x, xi + s)
    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)


def _d_mixed(fn: Callable, x, xi, h: float = _FD_STEP):
    return _d_first(lambda a, b: _d_first(fn, a, b, 0, h), x, xi, 1, h)


def _d_second(fn: Callable, x, xi, axis: int, h: float = _FD_STEP):
    def at(s):
        return fn(x + s, xi) if axis == 0 else fn(x, xi + s)
    return (-at(2 * h) + 16 * at(h) - 30 * at(0.0) + 16 * at(-h) - at(-2 * h)) / (12 * h * h)


def _require_1d(m: AffineMap) -> None:
    if m.d != 1:
        raise ConfigError("conjugation harnesses are one-dimensional")


class Pullback:
    """``p o kappa`` and the correction symbols, as vectorized callables.

    Phase points where ``kappa`` is undefined (``|xi| >= 1 - eps`` or
    within ``eps`` of the degeneracy set) evaluate to 0.
    """

    def __init__(self, p: Callable, m: AffineMap, eps: float = CAUSTIC_MARGIN):
        _require_1d(m)
        self.p = _callable(p)
        self.m = m
        self.eps = eps

    def _parts(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        shape = np.broadcast(x, xi).shape
        xb = np.broadcast_to(x, shape).ravel()
        kb = np.broadcast_to(xi, shape).ravel()
        ok = np.abs(kb) < 1.0 - self.eps
        ok[ok] = np.abs(degeneracy_margin(self.m.G, kb[ok][:, None])) > self.eps
        X = np.zeros_like(xb)
        K = np.zeros_like(kb)
        D = np.ones_like(kb)
        J = np.ones_like(kb)
        dJ = np.zeros_like(kb)
        if ok.any():
            k = kb[ok][:, None]
            xm, km = kappa_affine(self.m, (xb[ok][:, None], k))
            X[ok] = xm[:, 0]
            K[ok] = km[:, 0]
            D[ok] = dg(self.m.G, k)[:, 0, 0]
            J[ok] = 1.0 / D[ok]
            dJ[ok] = grad_J(self.m.G, k)[:, 0]
        return shape, ok, X, K, D, J, dJ

    def r0(self, x, xi):
        """``p o kappa``."""
        shape, ok, X, K, *_ = self._parts(x, xi)
        out = np.zeros(ok.shape, dtype=np.complex128)
        out[ok] = self.p(X[ok], K[ok])
        return out.reshape(shape)

    def r1(self, x, xi):
        """``(i / 2J) J'(xi) d_x r0``; ``d_x r0 = (d_x~ p) o kappa / g'(xi)``."""
        shape, ok, X, K, D, J, dJ = self._parts(x, xi)
        out = np.zeros(ok.shape, dtype=np.complex128)
        if ok.any():
            px = _d_first(self.p, X[ok], K[ok], 0)
            out[ok] = 0.5j / J[ok] * dJ[ok] * px / D[ok]
        return out.reshape(shape)

    def t0(self, x, xi):
        """``|J| p o kappa``."""
        shape, ok, X, K, D, J, _ = self._parts(x, xi)
        out = np.zeros(ok.shape, dtype=np.complex128)
        out[ok] = np.abs(J[ok]) * self.p(X[ok], K[ok])
        return out.reshape(shape)

    def order(self, k: int, hbar: float) -> Callable:
        if k == 0:
            return self.r0
        if k == 1:
            return lambda x, xi: self.r0(x, xi) + hbar * self.r1(x, xi)
        raise ConfigError("prediction order must be 0 or 1")


def _check_support(p: Callable, m: AffineMap, grid: Grid, tol: float = SUPPORT_TOL,
                   eps: float = CAUSTIC_MARGIN) -> None:
    """Raise if ``p`` is not negligible near the image of the caustic or degeneracy set."""
    G = m.G
    near = [np.linspace(1 - 10 * eps, 1 - 1e-12, 16), -np.linspace(1 - 10 * eps, 1 - 1e-12, 16)]
    fine = np.linspace(-1 + 1e-9, 1 - 1e-9, 20001)
    marg = degeneracy_margin(G, fine[:, None])
    near.append(fine[np.abs(marg) <= 10 * eps])
    bad = np.concatenate(near)
    if bad.size == 0:
        return
    img = g_map(G, bad[:, None])[:, 0]
    xs = grid.axis(0)
    X, K = np.meshgrid(xs, img, indexing="ij")
    worst = float(np.max(np.abs(p(X, K))))
    Xg, Kg = np.meshgrid(xs, np.linspace(-1, 1, 401), indexing="ij")
    scale = float(np.max(np.abs(p(Xg, Kg))))
    if scale > 0 and worst > tol * scale:
        raise SingularityError(
            f"symbol reaches {worst / scale:.2e} of its peak near the caustic or degeneracy set",
            margin=worst / scale,
        )


def egorov_predicted_symbol(p: SymbolGrid, m: AffineMap, order: int = 1) -> SymbolGrid:
    """``r0`` (order 0) or ``r0 + hbar r1`` (order 1) on the grid of ``p``.

    ``p`` lives on the output phase space; the result lives on the input
    phase space and keeps a callable for exact half-node evaluation.
    """
    _require_1d(m)
    fn = p.func if p.func is not None else p.evaluate
    _check_support(fn, m, p.grid)
    pred = Pullback(fn, m).order(order, p.hbar)
    return SymbolGrid.from_function(p.grid, p.hbar, pred)


def check_probe(probe: PhasePoint, m: AffineMap, hbar: float, chi: Cutoff = Cutoff(),
                margin: float = PROBE_MARGIN) -> tuple[SheetLabel, float]:
    """Sheet of a probe and its distance (in units of sqrt(hbar)) to trouble.

    Trouble is the cutoff ramp, the caustic and the degeneracy set. Raises
    :class:`SingularityError` with the margin if it is below ``margin``.
    """
    xi0 = float(np.asarray(probe.xi)[0])
    limit = chi.radius - chi.margin
    dist = limit - abs(xi0)
    fine = np.linspace(-1 + 1e-9, 1 - 1e-9, 20001)
    marg = degeneracy_margin(m.G, fine[:, None])
    sign = np.sign(marg)
    flips = np.where(sign[1:] != sign[:-1])[0]
    for i in flips:
        dist = min(dist, abs(xi0 - 0.5 * (fine[i] + fine[i + 1])))
    rel = dist / math.sqrt(hbar)
    if rel < margin:
        raise SingularityError(
            f"probe at xi={xi0:g} is {rel:.2f} sqrt(hbar) from the cutoff ramp or degeneracy set "
            f"(need {margin:g})",
            margin=rel,
        )
    sheet = SheetLabel(int(sheet_labels(m.G, np.array([xi0]))))
    return sheet, rel


@dataclass
class EgorovReport:
    """Result of a conjugation sweep.

    ``slope`` is NaN and ``at_floor`` is True when every residual is below
    :data:`FLOOR` (nothing to fit).
    """

    side: str
    symbol: str
    map: str
    prediction: str
    hbars: list
    residuals: list
    slope: float
    at_floor: bool
    grid_sizes: list
    probes: list
    probe_margins: list
    inverse_defects: list = field(default_factory=list)
    controls: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["slope"] = "floor" if self.at_floor else self.slope
        return out


def _summarize(hbars, residuals):
    at_floor = all(r < FLOOR for r in residuals)
    slope = float("nan") if at_floor else fit_slope(hbars, [max(r, 1e-300) for r in residuals])
    return slope, at_floor


def egorov_sweep(p, m: AffineMap, hbars: Sequence[float], probes: Sequence[PhasePoint],
                 side: str = "inverse", predictions: Sequence[str] = ("order1",),
                 chi: Cutoff = Cutoff(), length: float = DEFAULT_LENGTH,
                 inverse_tol: float = INVERSE_TOL) -> dict:
    """Residuals of several predictions in one pass.

    ``side='inverse'`` measures ``<U^-1 P U psi, psi>``; predictions
    ``order0`` / ``order1``. ``side='adjoint'`` measures ``<P U psi, U psi>``;
    predictions ``with_J`` (``|J| p o kappa``) and ``without_J``
    (``p o kappa``). Returns a dict with per-prediction residual lists and
    the sweep metadata.
    """
    _require_1d(m)
    if side not in ("inverse", "adjoint"):
        raise ConfigError("side must be 'inverse' or 'adjoint'")
    allowed = ("order0", "order1") if side == "inverse" else ("with_J", "without_J")
    for name in predictions:
        if name not in allowed:
            raise ConfigError(f"prediction {name!r} does not apply to the {side} side")
    hbars = [float(h) for h in hbars]
    if len(hbars) < 3:
        raise ConfigError("an hbar sweep needs at least 3 values")
    if not probes:
        raise ConfigError("at least one probe is required")
    fn = _callable(p)
    pull = Pullback(fn, m)
    res = {name: [] for name in predictions}
    sizes, inv_defects = [], []
    margins = [check_probe(q, m, max(hbars), chi)[1] for q in probes]
    for h in hbars:
        grid = sweep_grid(h, length)
        _check_support(fn, m, grid)
        sizes.append(grid.n[0])
        P = weyl_quantize(SymbolGrid.from_function(grid, h, fn))
        preds = {}
        for name in predictions:
            if name == "order0":
                f = pull.r0
            elif name == "order1":
                f = pull.order(1, h)
            elif name == "with_J":
                f = pull.t0
            else:
                f = pull.r0
            preds[name] = weyl_quantize(SymbolGrid.from_function(grid, h, f))
        worst = {name: 0.0 for name in predictions}
        worst_inv = 0.0
        for q in probes:
            sheet, _ = check_probe(q, m, h, chi)
            psi = coherent_state(grid, h, q, normalize=True)
            u = apply_U_affine(psi, m, chi)
            Pu = P.apply(u)
            if side == "inverse":
                back = apply_U_inverse(u, m, sheet)
                d = (back - psi).norm()
                worst_inv = max(worst_inv, d)
                if d > inverse_tol:
                    raise MicrolocalSupportError(
                        f"microlocal inverse misses the probe by {d:.2e} (limit {inverse_tol:g})", fraction=d
                    )
                lhs = inner_product(psi, apply_U_inverse(Pu, m, sheet))
            else:
                lhs = inner_product(u, Pu)
            for name, op in preds.items():
                rhs = inner_product(psi, op.apply(psi))
                worst[name] = max(worst[name], abs(lhs - rhs))
        for name in predictions:
            res[name].append(float(worst[name]))
        inv_defects.append(float(worst_inv))
        log.info("hbar=%g N=%d residuals %s", h, grid.n[0], {k: v[-1] for k, v in res.items()})
    return {"hbars": hbars, "residuals": res, "grid_sizes": sizes, "inverse_defects": inv_defects,
            "probe_margins": margins}


def _report(side, p, m, probes, sweep, name, label) -> EgorovReport:
    r = sweep["residuals"][name]
    slope, at_floor = _summarize(sweep["hbars"], r)
    return EgorovReport(
        side=side,
        symbol=getattr(p, "text", getattr(p, "__name__", repr(p))),
        map=m.describe(),
        prediction=label,
        hbars=sweep["hbars"],
        residuals=r,
        slope=slope,
        at_floor=at_floor,
        grid_sizes=sweep["grid_sizes"],
        probes=[[float(q.x[0]), float(q.xi[0])] for q in probes],
        probe_margins=sweep["probe_margins"],
        inverse_defects=sweep["inverse_defects"] if side == "inverse" else [],
    )


def egorov_residual(p, m: AffineMap, hbars: Sequence[float] = DEFAULT_HBARS,
                    probes: Sequence[PhasePoint] = (), order: int = 1, **kw) -> EgorovReport:
    """Inverse-conjugation residual against the order-0 or order-1 prediction."""
    name = {0: "order0", 1: "order1"}.get(order)
    if name is None:
        raise ConfigError("prediction order must be 0 or 1")
    sweep = egorov_sweep(p, m, hbars, probes, "inverse", (name,), **kw)
    label = "p o kappa" if order == 0 else "p o kappa + hbar (i/2J) {J, p o kappa}"
    return _report("inverse", p, m, probes, sweep, name, label)


def adjoint_egorov_residual(p, m: AffineMap, hbars: Sequence[float] = DEFAULT_HBARS,
                            probes: Sequence[PhasePoint] = (), with_J: bool = True, **kw) -> EgorovReport:
    """Adjoint-conjugation residual against ``|J| p o kappa`` (or ``p o kappa``)."""
    name = "with_J" if with_J else "without_J"
    sweep = egorov_sweep(p, m, hbars, probes, "adjoint", (name,), **kw)
    label = "|J| p o kappa" if with_J else "p o kappa"
    return _report("adjoint", p, m, probes, sweep, name, label)


def conjugated_symbol(p, m: AffineMap, grid: Grid, hbar: float, side: str = "adjoint",
                      chi: Cutoff = Cutoff(), sheet=SheetLabel.PLUS, wrap_tol: float = 1e-6) -> SymbolGrid:
    """Weyl symbol of the dense ``U* P U`` or ``U^-1 P U`` (small grids only).

    ``wrap_tol`` is passed to :func:`symbol_of`; the propagated kernels of
    grid-edge basis vectors wrap around, so small grids may need a looser value.
    """
    _require_1d(m)
    P = weyl_quantize(SymbolGrid.from_function(grid, hbar, _callable(p)))
    U = OperatorMatrix.from_linear_map(lambda f: apply_U_affine(f, m, chi), grid, hbar)
    if side == "adjoint":
        R = U.adjoint() @ P @ U
    elif side == "inverse":
        PU = P @ U
        cols = np.empty_like(PU.matrix)
        for j in range(grid.n[0]):
            cols[:, j] = apply_U_inverse(SampledField(grid, hbar, PU.matrix[:, j]), m, sheet).samples
        R = OperatorMatrix(cols, grid, hbar)
    else:
        raise ConfigError("side must be 'inverse' or 'adjoint'")
    return symbol_of(R, wrap_tol=wrap_tol)


# ---------------------------------------------------------------------------
# unitarity defect

@dataclass
class UnitarityReport:
    map: str
    hbars: list
    defect_J: list
    defect_tilde_J: list
    slope_J: float
    slope_tilde_J: float
    norm_ratios: list
    expected_ratio: float
    probes: list

    def to_dict(self) -> dict:
        return asdict(self)


def _abs_J_multiplier(G, xi) -> np.ndarray:
    out = np.zeros(xi.shape[0])
    live = np.abs(xi[:, 0]) < 1.0
    live[live] = np.abs(degeneracy_margin(G, xi[live])) > 0
    out[live] = np.abs(1.0 / det_dg(G, xi[live]))
    return out


def _cross_sheet_fraction(G, spec: fourier.Spectrum, chi: Cutoff) -> float:
    """Share of ``|chi F psi|^2`` whose image frequency has a second live preimage."""
    xi = spec.points()
    w = chi(xi)
    mass = np.abs(w * spec.values.ravel()) ** 2
    tot = mass.sum()
    live = w > 0
    if tot == 0 or not live.any():
        return 0.0
    lab = sheet_labels(G, xi[live])
    img = g_map(G, xi[live])
    shared = np.zeros(lab.shape, dtype=bool)
    for s in (SheetLabel.PLUS, SheetLabel.MINUS):
        sel = lab == int(s)
        if not sel.any():
            continue
        other, ok = g_inverse_batch(G, img[sel], -int(s))
        hit = np.zeros(ok.shape, dtype=bool)
        hit[ok] = chi(other[ok]) > 0
        shared[np.where(sel)[0]] = hit
    return float(mass[live][shared].sum() / tot)


def unitarity_defect(m, hbars: Sequence[float] = DEFAULT_HBARS, probes: Sequence[PhasePoint] = (),
                     chi: Cutoff = Cutoff(), length: float = DEFAULT_LENGTH,
                     tol: float = 1e-3, tests: Sequence[str] = ("J", "tilde_J")) -> UnitarityReport:
    """``|(U*U - F^-1 |J| F) psi|`` and ``|(U U* - F^-1 J~ F) u|`` over a sweep.

    ``psi`` is a coherent state at each probe and ``u`` the coherent state
    at its image under ``kappa``. Both norms are relative and the worst
    probe is reported. A probe whose image frequencies also have a live
    preimage on the other sheet is rejected for the ``J`` test with
    :class:`MicrolocalSupportError`; pass ``tests=("tilde_J",)`` to run
    only the two-preimage identity for such probes.
    """
    tests = tuple(tests)
    if not tests or any(t not in ("J", "tilde_J") for t in tests):
        raise ConfigError("tests must be a non-empty subset of ('J', 'tilde_J')")
    if not isinstance(m, AffineMap):
        m = AffineMap(m)
    _require_1d(m)
    hbars = [float(h) for h in hbars]
    if len(hbars) < 3:
        raise ConfigError("an hbar sweep needs at least 3 values")
    if not probes:
        raise ConfigError("at least one probe is required")
    G = m.G
    dJ, dT, ratios = [], [], []
    for h in hbars:
        grid = sweep_grid(h, length)
        xi = fourier.freq_points(grid, h)
        mult_J = _abs_J_multiplier(G, xi).reshape(grid.shape)
        mult_T = tilde_J_batch(G, xi).reshape(grid.shape)
        wJ = wT = 0.0
        first_ratio = None
        for q in probes:
            psi = coherent_state(grid, h, q, normalize=True)
            spec = fourier.forward(psi)
            u = apply_U_affine(psi, m, chi)
            if first_ratio is None:
                first_ratio = u.norm() ** 2
            if "J" in tests:
                wJ = max(wJ, _single_sheet_defect(psi, spec, u, m, chi, mult_J, tol))
            if "tilde_J" not in tests:
                continue
            xt, kt = kappa_affine(m, (np.asarray(q.x, float), np.asarray(q.xi, float)))
            v = coherent_state(grid, h, PhasePoint(tuple(xt), tuple(kt)), normalize=True)
            vv = apply_U_affine(apply_U_adjoint(v, m, chi), m, chi)
            vs = fourier.forward(v)
            ref_t = fourier.inverse(fourier.Spectrum(grid, h, vs.values * mult_T))
            wT = max(wT, (vv - ref_t).norm())
        dJ.append(float(wJ))
        dT.append(float(wT))
        ratios.append(float(first_ratio))
    xi0 = np.asarray(probes[0].xi, dtype=float)[None, :]
    expected = float(abs(1.0 / det_dg(G, xi0)[0]))

    def slope(v):
        return fit_slope(hbars, [max(r, 1e-300) for r in v]) if any(r > 0 for r in v) else float("nan")

    return UnitarityReport(
        map=m.describe(),
        hbars=hbars,
        defect_J=dJ if "J" in tests else [],
        defect_tilde_J=dT if "tilde_J" in tests else [],
        slope_J=slope(dJ) if "J" in tests else float("nan"),
        slope_tilde_J=slope(dT) if "tilde_J" in tests else float("nan"),
        norm_ratios=ratios,
        expected_ratio=expected,
        probes=[[float(q.x[0]), float(q.xi[0])] for q in probes],
    )


def _single_sheet_defect(psi, spec, u, m, chi, mult_J, tol) -> float:
    frac = _cross_sheet_fraction(m.G, spec, chi)
    if frac > tol:
        raise MicrolocalSupportError(
            f"{frac:.2e} of the probe's mass maps onto frequencies with two live preimages; "
            "the single-sheet J identity does not apply",
            fraction=frac,
        )
    uu = apply_U_adjoint(u, m, chi)
    ref = fourier.inverse(fourier.Spectrum(psi.grid, psi.hbar, spec.values * mult_J))
    return (uu - ref).norm()


# ---------------------------------------------------------------------------
# kernel expansions

def _support_box(fn: Callable, rel: float = 1e-13, xlim=(-12.0, 12.0), klim=(-1.0, 1.0), n: int = 601):
    """Bounding box of ``{|fn| > rel max|fn|}``, padded by one sample."""
    xs = np.linspace(*xlim, n)
    ks = np.linspace(*klim, n)
    X, K = np.meshgrid(xs, ks, indexing="ij")
    v = np.abs(fn(X, K))
    top = v.max()
    if top == 0:
        raise ConfigError("symbol vanishes on the sampling box")
    ix, ik = np.nonzero(v > rel * top)
    dx, dk = xs[1] - xs[0], ks[1] - ks[0]
    return (xs[ix.min()] - dx, xs[ix.max()] + dx, ks[ik.min()] - dk, ks[ik.max()] + dk)


def _trapezoid_2d(integrand: Callable, a: np.ndarray, b: np.ndarray, chunk: int = 256) -> complex:
    """Sum of ``integrand(A, B)`` over the tensor grid with uniform weights."""
    da = a[1] - a[0]
    db = b[1] - b[0]
    total = 0j
    for s in range(0, a.size, chunk):
        A = a[s:s + chunk, None]
        total += complex(np.sum(integrand(A, b[None, :])))
    return total * da * db


def kpv_kernel(p: Callable, x: float, eta: float, G, hbar: float, box=None) -> complex:
    """``2 pi hbar exp(-i x g(eta) / hbar) K_{P V}(x, eta)`` by direct quadrature.

    Equals ``(2 pi hbar)^-1 iint exp(i v (xi - xi0) / hbar) p(x - v/2, xi) dv dxi``
    with ``xi0 = g(eta)``.
    """
    G = np.asarray(getattr(G, "G", G), dtype=float)
    xi0 = float(g_map(G, np.array([eta]))[0])
    x0, x1, k0, k1 = box if box is not None else _support_box(p)
    vmax = 2 * max(abs(x - x0), abs(x - x1))
    kmax = max(abs(k0 - xi0), abs(k1 - xi0))
    dk = math.pi * hbar / (2 * vmax)
    dv = math.pi * hbar / (2 * kmax)
    ks = np.arange(k0, k1 + dk, dk)
    vs = 2 * np.arange(x - x1, x - x0 + dv, dv)
    vs = np.arange(vs[0], vs[-1] + dv, dv)
    def integrand(V, K):
        return np.exp(1j * V * (K - xi0) / hbar) * p(x - 0.5 * V, K)
    return _trapezoid_2d(integrand, vs, ks) / (2 * math.pi * hbar)


def kvq_kernel(q: Callable, y: float, xi: float, G, hbar: float, box=None, eta_max: float = 0.995) -> complex:
    """``2 pi hbar exp(-i y g(xi) / hbar) K_{V Q}(y, xi)`` by direct quadrature.

    ``q(x~, xi)`` is the symbol of an operator on the spectral side. Equals
    ``(2 pi hbar)^-1 iint exp(i ((eta - xi) x~ + y (g(eta) - g(xi))) / hbar)
    q(x~, (eta + xi) / 2) deta dx~`` over ``|eta| < 1``.
    """
    G = np.asarray(getattr(G, "G", G), dtype=float)
    x0, x1, k0, k1 = box if box is not None else _support_box(q)
    e0 = max(2 * k0 - xi, -eta_max)
    e1 = min(2 * k1 - xi, eta_max)
    edge = np.array([e0, e1])
    xs_probe = np.linspace(x0, x1, 401)
    edge_val = np.max(np.abs(q(xs_probe[:, None], 0.5 * (edge[None, :] + xi))))
    peak = np.max(np.abs(q(xs_probe[:, None], np.linspace(k0, k1, 401)[None, :])))
    if edge_val > 1e-6 * peak:
        raise SingularityError("symbol support reaches the caustic |eta| = 1", margin=float(edge_val / peak))
    gxi = float(g_map(G, np.array([xi]))[0])
    etas_c = np.linspace(e0, e1, 2001)
    slope_max = np.max(np.abs(dg(G, etas_c[:, None])[:, 0, 0]))
    phase_rate_eta = max(abs(x0), abs(x1)) + abs(y) * slope_max
    phase_rate_x = max(abs(e0 - xi), abs(e1 - xi))
    de = math.pi * hbar / (2 * phase_rate_eta)
    dx = math.pi * hbar / (2 * phase_rate_x)
    etas = np.arange(e0, e1 + de, de)
    xs = np.arange(x0, x1 + dx, dx)

    def integrand(E, X):
        ge = g_map(G, E[:, :1])
        return np.exp(1j * ((E - xi) * X + y * (ge - gxi)) / hbar) * q(X, 0.5 * (E + xi))
    return _trapezoid_2d(integrand, etas, xs) / (2 * math.pi * hbar)


def _kpv_prediction(p: Callable, x, xi0, hbar, first_order=True):
    val = p(np.asarray(x), np.asarray(xi0))
    if first_order:
        val = val + hbar / 2j * _d_mixed(p, np.asarray(x, float), np.asarray(xi0, float))
    return complex(val)


def kvq_corrections(q: Callable, y: float, xi: float, G) -> dict:
    """Pieces of the order-hbar KVQ expansion at ``(y, xi)``.

    Returns ``q0 = q(x~0, xi)`` with ``x~0 = -g'(xi) y``, the transport
    term ``d_x~ d_xi q`` and the curvature term
    ``alpha (1/f + xi^2/f^3) d_x~^2 q`` with ``alpha = y G[0, 1]``.
    """
    G = np.asarray(getattr(G, "G", G), dtype=float)
    k = np.array([[xi]])
    slope = float(dg(G, k)[0, 0, 0])
    xt = -slope * y
    f = math.sqrt(1 - xi * xi)
    alpha = y * float(G[0, 1])
    q0 = complex(q(np.asarray(xt), np.asarray(xi)))
    transport = complex(_d_mixed(q, np.asarray(xt, float), np.asarray(xi, float)))
    curv = alpha * (1 / f + xi * xi / f**3) * complex(_d_second(q, np.asarray(xt, float), np.asarray(xi, float), 0))
    return {"q0": q0, "transport": transport, "curvature": curv, "alpha": alpha, "x_tilde": xt}


@dataclass
class KernelReport:
    which: str
    map: str
    hbars: list
    residuals: list
    slope: float
    ablation_residuals: list
    ablation_slope: float
    curvature_max: float
    samples: list

    def to_dict(self) -> dict:
        return asdict(self)


def kernel_expansion_check(which: str, symbol, G, hbars: Sequence[float] = DEFAULT_HBARS,
                           samples: Sequence[tuple] = ((0.2, 0.1),)) -> KernelReport:
    """Compare direct-quadrature kernels with their order-hbar expansions.

    ``which='KPV'``: samples are ``(x, eta)``; the prediction is
    ``p + (hbar/2i) d_x d_xi p`` at ``(x, g(eta))`` and the ablation drops
    the hbar term. ``which='KVQ'``: samples are ``(y, xi)``; the prediction
    is ``q0 + (i hbar/2)(transport + curvature)`` and the ablation drops the
    curvature term (which vanishes identically when ``G[0, 1] = 0``).
    """
    fn = _callable(symbol)
    G = np.asarray(getattr(G, "G", G), dtype=float)
    if G.shape != (2, 2):
        raise ConfigError("kernel expansions are one-dimensional")
    hbars = [float(h) for h in hbars]
    if len(hbars) < 3:
        raise ConfigError("an hbar sweep needs at least 3 values")
    for s in samples:
        k = np.array([[s[1]]])
        if abs(s[1]) >= 1 - CAUSTIC_MARGIN or abs(float(degeneracy_margin(G, k)[0])) <= CAUSTIC_MARGIN:
            raise SingularityError(f"sample {tuple(s)} is degenerate", margin=float(degeneracy_margin(G, k)[0]))
    box = _support_box(fn)
    res, abl = [], []
    curv_max = 0.0
    for h in hbars:
        worst = worst_abl = 0.0
        for a, b in samples:
            if which == "KPV":
                exact = kpv_kernel(fn, a, b, G, h, box)
                xi0 = float(g_map(G, np.array([b]))[0])
                full = _kpv_prediction(fn, a, xi0, h)
                lead = _kpv_prediction(fn, a, xi0, h, first_order=False)
            elif which == "KVQ":
                exact = kvq_kernel(fn, a, b, G, h, box)
                c = kvq_corrections(fn, a, b, G)
                curv_max = max(curv_max, abs(c["curvature"]))
                full = c["q0"] + 0.5j * h * (c["transport"] + c["curvature"])
                lead = c["q0"] + 0.5j * h * c["transport"]
            else:
                raise ConfigError("which must be 'KPV' or 'KVQ'")
            worst = max(worst, abs(exact - full))
            worst_abl = max(worst_abl, abs(exact - lead))
        res.append(float(worst))
        abl.append(float(worst_abl))
    return KernelReport(
        which=which,
        map=np.array2string(G, precision=6),
        hbars=hbars,
        residuals=res,
        slope=fit_slope(hbars, [max(r, 1e-300) for r in res]),
        ablation_residuals=abl,
        ablation_slope=fit_slope(hbars, [max(r, 1e-300) for r in abl]),
        curvature_max=float(curv_max),
        samples=[list(map(float, s)) for s in samples],
    )
