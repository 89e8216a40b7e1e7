"""Weyl quantization of phase-space symbols on 1D grids.

A symbol is sampled on ``x_i`` (the field grid) and on the frequency nodes
``xi_k = 2 pi hbar k / L``, ``k = -N/2 .. N/2 - 1``. With the standard
normalization the Weyl kernel is

    K(x, y) = (2 pi hbar)^-1 integral exp(i (x - y) xi / hbar) p((x + y) / 2, xi) dxi

and, treating the grid as periodic, the discrete kernel is

    K[i, j] = L^-1 sum_k exp(2 pi i (i - j) k / N) p(m_{i+j}, xi_k)

where ``m_s = x_0 + s dx / 2`` are nodes and half nodes. The matrix acting
on samples is ``dx * K``; ``p = 1`` gives the identity.

Midpoints pair ``s = i + j`` with offsets ``r = i - j`` of the same
parity, so the inverse transform (:func:`symbol_of`) recovers odd
offsets at integer midpoints by interpolating along ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, CoverageError, ShapeError, UsageError
from .fields import Grid, SampledField

__all__ = [
    "SymbolGrid",
    "OperatorMatrix",
    "symbol_xi_axis",
    "weyl_quantize",
    "symbol_of",
    "poisson_bracket",
    "derivative",
    "moyal_check",
    "MoyalReport",
    "fit_slope",
    "WRAP_TOL",
]

WRAP_TOL = 1e-6
_STENCIL = 8


def symbol_xi_axis(grid: Grid, hbar: float) -> np.ndarray:
    """Frequency nodes of the symbol grid, ascending."""
    n = grid.n[0]
    k = np.arange(-(n // 2), n - n // 2)
    return 2.0 * math.pi * hbar * k / grid.lengths[0]


def _check_1d(grid: Grid) -> None:
    if grid.d != 1:
        raise ShapeError("Weyl quantization is implemented for d = 1 only")


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """Samples ``values[i, k] = p(x_i, xi_k)``.

    ``func``, when present, is the callable the samples came from; it is
    used for exact half-node values during quantization.
    """

    grid: Grid
    hbar: float
    values: np.ndarray
    func: Callable | None = None

    def __post_init__(self):
        _check_1d(self.grid)
        v = np.asarray(self.values, dtype=np.complex128)
        n = self.grid.n[0]
        if v.shape != (n, n):
            raise ShapeError(f"symbol samples must have shape {(n, n)}, got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, hbar: float, func: Callable) -> "SymbolGrid":
        """Sample ``func(x, xi)`` (vectorized, broadcasting) on the symbol grid."""
        _check_1d(grid)
        X, XI = np.meshgrid(grid.axis(0), symbol_xi_axis(grid, hbar), indexing="ij")
        vals = np.broadcast_to(np.asarray(func(X, XI), dtype=np.complex128), X.shape)
        return cls(grid, hbar, vals, func)

    @property
    def x(self) -> np.ndarray:
        return self.grid.axis(0)

    @property
    def xi(self) -> np.ndarray:
        return symbol_xi_axis(self.grid, self.hbar)

    def with_values(self, values) -> "SymbolGrid":
        return SymbolGrid(self.grid, self.hbar, values)

    def evaluate(self, x, xi) -> np.ndarray:
        """Values at arbitrary points: the source callable if known, else
        8x8 Lagrange interpolation (zero outside the sampled box)."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(x, xi), dtype=np.complex128) * np.ones(np.broadcast(x, xi).shape)
        xb, xib = np.broadcast_arrays(x, xi)
        pts = np.stack([xb.ravel(), xib.ravel()], axis=-1)
        h = np.array([self.grid.spacing[0], 2 * math.pi * self.hbar / self.grid.lengths[0]])
        start = np.array([self.x[0], self.xi[0]])
        out = _kernels.lagrange_interp_2d(self.values, start, h, pts)
        return np.where(np.isnan(out), 0.0, out).reshape(xb.shape)

    def __add__(self, other):
        if isinstance(other, SymbolGrid):
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __mul__(self, other):
        if isinstance(other, SymbolGrid):
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __sub__(self, other):
        if isinstance(other, SymbolGrid):
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)


class OperatorMatrix:
    """Dense matrix acting on the sample vector of a 1D field."""

    __slots__ = ("matrix", "grid", "hbar")

    def __init__(self, matrix, grid: Grid, hbar: float):
        _check_1d(grid)
        A = np.asarray(matrix, dtype=np.complex128)
        n = grid.n[0]
        if A.shape != (n, n):
            raise ShapeError(f"operator must be {n}x{n}, got {A.shape}")
        self.matrix = A
        self.grid = grid
        self.hbar = float(hbar)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            self._compatible(other)
            return OperatorMatrix(self.matrix @ other.matrix, self.grid, self.hbar)
        if isinstance(other, SampledField):
            return self.apply(other)
        return self.matrix @ other

    def _compatible(self, other: "OperatorMatrix") -> None:
        if other.grid != self.grid or other.hbar != self.hbar:
            raise ShapeError("operators act on different grids or hbar")

    def apply(self, f: SampledField) -> SampledField:
        if f.grid != self.grid:
            raise ShapeError("field and operator grids differ")
        return f.with_samples(self.matrix @ f.samples)

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conj().T, self.grid, self.hbar)

    def hermiticity_defect(self) -> float:
        scale = max(np.max(np.abs(self.matrix)), 1e-300)
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)) / scale)

    @classmethod
    def identity(cls, grid: Grid, hbar: float) -> "OperatorMatrix":
        return cls(np.eye(grid.n[0]), grid, hbar)

    @classmethod
    def from_linear_map(cls, fun: Callable[[SampledField], SampledField], grid: Grid,
                        hbar: float) -> "OperatorMatrix":
        """Matrix of a linear field map, one basis vector at a time."""
        n = grid.n[0]
        cols = np.empty((n, n), dtype=np.complex128)
        for j in range(n):
            e = np.zeros(n, dtype=np.complex128)
            e[j] = 1.0
            cols[:, j] = fun(SampledField(grid, hbar, e)).samples
        return cls(cols, grid, hbar)


def _lagrange_weights(t: float) -> np.ndarray:
    nodes = np.arange(-3, 5, dtype=float)
    w = np.ones(_STENCIL)
    for m in range(_STENCIL):
        for q in range(_STENCIL):
            if q != m:
                w[m] *= (t - nodes[q]) / (nodes[m] - nodes[q])
    return w


def _half_node_values(values: np.ndarray) -> np.ndarray:
    """Interpolate rows ``values[i]`` to midpoints ``i + 1/2`` (8 points).

    Stencils are shifted inward near the ends, so polynomials of degree up
    to 7 are reproduced exactly everywhere.
    """
    n = values.shape[0]
    if n < _STENCIL:
        raise CoverageError(f"need at least {_STENCIL} grid points for midpoint interpolation")
    out = np.empty((n - 1,) + values.shape[1:], dtype=np.complex128)
    for i in range(n - 1):
        start = min(max(i - 3, 0), n - _STENCIL)
        w = _lagrange_weights(i + 0.5 - start - 3)
        out[i] = np.tensordot(w, values[start:start + _STENCIL], axes=(0, 0))
    return out


def _midpoint_samples(p: SymbolGrid) -> np.ndarray:
    """``P[s, k] = p(x_0 + s dx / 2, xi_k)`` for ``s = 0 .. 2N - 2``."""
    n = p.grid.n[0]
    xs = p.x[0] + 0.5 * p.grid.spacing[0] * np.arange(2 * n - 1)
    P = np.empty((2 * n - 1, n), dtype=np.complex128)
    if p.func is not None:
        X, XI = np.meshgrid(xs, p.xi, indexing="ij")
        P[:] = np.broadcast_to(np.asarray(p.func(X, XI), dtype=np.complex128), X.shape)
        return P
    P[0::2] = p.values
    P[1::2] = _half_node_values(p.values)
    return P


def weyl_quantize(p: SymbolGrid) -> OperatorMatrix:
    """Dense Weyl quantization; see the module docstring for the formula."""
    n = p.grid.n[0]
    P = _midpoint_samples(p)
    # Reorder frequency samples to FFT order so that ifft sums exp(2 pi i r k / N).
    P_fft = np.fft.ifftshift(P, axes=1)
    phat = np.fft.ifft(P_fft, axis=1) * n
    K = _kernels.weyl_assemble(phat, n) / p.grid.lengths[0]
    return OperatorMatrix(K * p.grid.spacing[0], p.grid, p.hbar)


def _kernel_by_offset(K: np.ndarray) -> np.ndarray:
    """``Kbar[s, r] = K[a, b]`` with ``a + b = s``, ``a - b = r (mod N)``.

    Among the admissible pairs the smallest physical offset is used. Entries
    of the wrong parity, or whose pair falls off the grid, are zero.
    """
    n = K.shape[0]
    s = np.arange(2 * n - 1)[:, None]
    r = np.arange(-(n // 2), n - n // 2)[None, :]
    out = np.zeros((2 * n - 1, n), dtype=np.complex128)
    filled = np.zeros(out.shape, dtype=bool)
    for shift in sorted((0, -n, n), key=abs):
        rr = r + shift
        ok = ((s + rr) % 2 == 0) & ~filled
        a = (s + rr) // 2
        b = (s - rr) // 2
        ok &= (a >= 0) & (a < n) & (b >= 0) & (b < n)
        aa = np.where(ok, a, 0)
        bb = np.where(ok, b, 0)
        out[ok] = K[aa, bb][ok]
        filled |= ok
    return out


def _nyquist_offset(K: np.ndarray) -> np.ndarray:
    """Mean of the on-grid entries with offsets -N/2 and +N/2 at each midpoint.

    The two offsets alias; averaging them keeps Hermitian kernels' symbols real.
    """
    n = K.shape[0]
    s = np.arange(2 * n - 1)
    total = np.zeros(s.shape, dtype=np.complex128)
    count = np.zeros(s.shape)
    for rr in (-(n // 2), n // 2):
        ok = (s + rr) % 2 == 0
        a = (s + rr) // 2
        b = (s - rr) // 2
        ok &= (a >= 0) & (a < n) & (b >= 0) & (b < n)
        total[ok] += K[a[ok], b[ok]]
        count[ok] += 1
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def symbol_of(A: OperatorMatrix, wrap_tol: float = WRAP_TOL) -> SymbolGrid:
    """Weyl symbol of a dense operator on the symbol grid.

    ``p(x_i, xi_k) = dx sum_r exp(-2 pi i r k / N) Kbar(x_i, r)`` where odd
    offsets are brought to integer midpoints by interpolation along the
    midpoint index. Raises :class:`CoverageError` (reason ``wraparound``)
    if the kernel carries more than ``wrap_tol`` of its mass at offsets
    within 10% of the periodic boundary.
    """
    n = A.grid.n[0]
    dx = A.grid.spacing[0]
    K = A.matrix / dx
    kbar = _kernel_by_offset(K)
    if n % 2 == 0:
        kbar[:, 0] = _nyquist_offset(K)
    r = np.arange(-(n // 2), n - n // 2)
    far = np.abs(r) >= 0.9 * (n // 2)
    mass = np.sum(np.abs(kbar) ** 2)
    if mass > 0:
        frac = np.sum(np.abs(kbar[:, far]) ** 2) / mass
        if frac > wrap_tol:
            err = CoverageError(
                f"kernel mass {frac:.2e} near the periodic boundary exceeds {wrap_tol:g}", fraction=frac
            )
            err.reason = "wraparound"
            raise err
    rows = np.empty((n, n), dtype=np.complex128)
    even = r % 2 == 0
    rows[:, even] = kbar[0::2][:, even]
    odd_cols = np.where(~even)[0]
    half = kbar[1::2][:, odd_cols]  # values at midpoints i + 1/2, i = 0..n-2
    # half-node samples sit at positions 0.5, 1.5, ...; interpolate to 0..n-1
    rows[:, odd_cols] = _interp_to_nodes(half)
    # sum over r with exp(-2 pi i r k / N); k ascending from -N/2
    k = np.arange(-(n // 2), n - n // 2)
    phase = np.exp(-2j * math.pi * np.outer(r, k) / n)
    vals = dx * rows @ phase
    return SymbolGrid(A.grid, A.hbar, vals)


def _interp_to_nodes(half: np.ndarray) -> np.ndarray:
    """Samples at ``j + 1/2`` (j = 0..n-2) to nodes ``0..n-1`` (8-point, one-sided at the ends)."""
    m = half.shape[0]
    n = m + 1
    out = np.empty((n,) + half.shape[1:], dtype=np.complex128)
    for i in range(n):
        # node i sits at position i - 1/2 in the half-node index
        t = i - 0.5
        start = min(max(int(math.floor(t)) - 3, 0), m - _STENCIL)
        w = _lagrange_weights(t - start - 3)
        out[i] = np.tensordot(w, half[start:start + _STENCIL], axes=(0, 0))
    return out


# ---------------------------------------------------------------------------
# derivatives and brackets

def derivative(p: SymbolGrid, axis: str, method: str = "spectral") -> SymbolGrid:
    """``d/dx`` or ``d/dxi`` of a sampled symbol.

    ``spectral`` assumes the symbol decays (is periodic) along the axis;
    ``fd`` uses second-order finite differences, suitable for polynomials.
    """
    if axis not in ("x", "xi"):
        raise ConfigError("axis must be 'x' or 'xi'")
    ax = 0 if axis == "x" else 1
    step = p.grid.spacing[0] if ax == 0 else 2 * math.pi * p.hbar / p.grid.lengths[0]
    v = p.values
    n = v.shape[ax]
    if method == "fd":
        return p.with_values(np.gradient(v, step, axis=ax, edge_order=2))
    if method != "spectral":
        raise ConfigError(f"unknown derivative method {method!r}")
    w = 2 * math.pi * np.fft.fftfreq(n, step)
    if n % 2 == 0:
        w[n // 2] = 0.0
    shape = [1, 1]
    shape[ax] = -1
    spec = np.fft.fft(v, axis=ax) * (1j * w).reshape(shape)
    return p.with_values(np.fft.ifft(spec, axis=ax))


def poisson_bracket(a: SymbolGrid, b: SymbolGrid, method: str = "spectral") -> SymbolGrid:
    """``{a, b} = d_xi a d_x b - d_x a d_xi b``."""
    return a.with_values(
        derivative(a, "xi", method).values * derivative(b, "x", method).values
        - derivative(a, "x", method).values * derivative(b, "xi", method).values
    )


def fit_slope(hbars: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(hbars)``."""
    h = np.log(np.asarray(hbars, dtype=float))
    v = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(h, v, 1)[0])


@dataclass
class MoyalReport:
    hbars: list
    residuals: list
    slope: float


def moyal_check(a: Callable, b: Callable, hbars: Sequence[float], length: float = 8.0,
                points_per_unit: float | None = None, window: tuple | None = None,
                method: str = "spectral") -> MoyalReport:
    """Residual of ``sigma(Op(a) Op(b)) - (ab + hbar/(2i) {a, b})`` over an hbar sweep.

    ``a`` and ``b`` are vectorized callables ``(x, xi) -> value``. The sup
    norm is taken over ``window = (xmin, xmax, ximin, ximax)`` (default:
    the middle half in x and ``|xi| <= 1.5``).
    """
    hbars = [float(h) for h in hbars]
    if len(hbars) < 3:
        raise ConfigError("an hbar sweep needs at least 3 values")
    res = []
    for h in hbars:
        grid = _sweep_grid(h, length, points_per_unit)
        A = weyl_quantize(SymbolGrid.from_function(grid, h, a))
        B = weyl_quantize(SymbolGrid.from_function(grid, h, b))
        prod = symbol_of(A @ B)
        sa = SymbolGrid.from_function(grid, h, a)
        sb = SymbolGrid.from_function(grid, h, b)
        pred = sa.values * sb.values + h / 2j * poisson_bracket(sa, sb, method).values
        mask = _window_mask(prod, window)
        res.append(float(np.max(np.abs(prod.values - pred)[mask])))
    floor = 1e-300
    slope = fit_slope(hbars, [max(r, floor) for r in res])
    return MoyalReport(hbars, res, slope)


def _sweep_grid(hbar: float, length: float, points_per_unit: float | None, xi_max: float = 2.0) -> Grid:
    if points_per_unit is None:
        need = length * xi_max / (math.pi * hbar)
        n = 1 << int(math.ceil(math.log2(need)))
    else:
        n = int(math.ceil(length * points_per_unit))
        n += n % 2
    return Grid.centered(n, length)


def _window_mask(p: SymbolGrid, window) -> np.ndarray:
    x, xi = p.x, p.xi
    if window is None:
        L = p.grid.lengths[0]
        c = p.grid.center[0]
        window = (c - L / 4, c + L / 4, -1.5, 1.5)
    x0, x1, k0, k1 = window
    mx = (x >= x0) & (x <= x1)
    mk = (xi >= k0) & (xi <= k1)
    if not (mx.any() and mk.any()):
        raise UsageError("evaluation window contains no symbol nodes")
    return mx[:, None] & mk[None, :]
