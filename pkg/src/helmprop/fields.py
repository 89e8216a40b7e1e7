"""Uniform grids, sampled fields and reference wave functions.

Fields are complex samples on an axis-aligned uniform grid and always carry
the semiclassical parameter ``hbar`` they were built for. Reference states
are produced exactly from their closed forms at each node, un-normalized
unless ``normalize=True`` is passed.

The on-disk format (HLF1) is little-endian::

    b"HLF1" | u32 d | u32 n[d] | f64 spacing[d] | f64 origin[d] | f64 hbar
    | complex samples as (f64 re, f64 im), row-major

with no padding anywhere.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CoverageError, FormatError, ShapeError

__all__ = [
    "Grid",
    "SampledField",
    "PhasePoint",
    "coherent_state",
    "hermite_state",
    "plane_wave",
    "inner_product",
    "norm",
    "save_field",
    "load_field",
    "MAGIC",
]

MAGIC = b"HLF1"
COVERAGE_WIDTHS = 5.0


def _as_tuple(v, d, cast):
    if np.ndim(v) == 0:
        return (cast(v),) * d
    out = tuple(cast(x) for x in np.asarray(v).ravel())
    if len(out) != d:
        raise ShapeError(f"expected {d} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform grid; ``origin`` is the coordinate of sample index 0."""

    n: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        d = len(n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "spacing", _as_tuple(self.spacing, d, float))
        object.__setattr__(self, "origin", _as_tuple(self.origin, d, float))
        if d < 1:
            raise ShapeError("grid needs at least one axis")
        if any(v < 2 for v in n):
            raise ShapeError(f"each axis needs at least 2 samples, got {n}")
        if any(not (h > 0 and math.isfinite(h)) for h in self.spacing):
            raise ShapeError(f"spacing must be positive, got {self.spacing}")
        if any(not math.isfinite(o) for o in self.origin):
            raise ShapeError("origin must be finite")

    @classmethod
    def centered(cls, n, length) -> "Grid":
        """Grid of ``n`` points per axis over ``[-length/2, length/2)``."""
        n = np.atleast_1d(n).astype(int)
        length = np.broadcast_to(np.asarray(length, dtype=float), n.shape)
        spacing = length / n
        return cls(tuple(n), tuple(spacing), tuple(-length / 2))

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.n) * np.asarray(self.spacing)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * (np.asarray(self.n) - 1) * np.asarray(self.spacing)

    def axis(self, j: int) -> np.ndarray:
        return self.origin[j] + self.spacing[j] * np.arange(self.n[j])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(j) for j in range(self.d)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes as an (N, d) array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin)
        hi = lo + (np.asarray(self.n) - 1) * np.asarray(self.spacing)
        return lo, hi

    def covers(self, x, margin: float = 0.0) -> bool:
        lo, hi = self.bounds()
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x - margin >= lo) and np.all(x + margin <= hi))


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, xi) of the reduced phase space."""

    x: tuple[float, ...]
    xi: tuple[float, ...]

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        xi = tuple(float(v) for v in np.atleast_1d(self.xi))
        if len(x) != len(xi):
            raise ShapeError("x and xi must have the same dimension")
        if not all(math.isfinite(v) for v in x + xi):
            raise ShapeError("phase point components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def d(self) -> int:
        return len(self.x)

    @property
    def physical(self) -> bool:
        """True inside the propagating region, ``|xi| < 1``."""
        return float(np.dot(self.xi, self.xi)) < 1.0

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.x), np.asarray(self.xi)


class SampledField:
    """Complex samples on a :class:`Grid` together with ``hbar``.

    The sample array is copied on construction and made read-only.
    """

    __slots__ = ("grid", "hbar", "samples")

    def __init__(self, grid: Grid, hbar: float, samples):
        hbar = float(hbar)
        if not (hbar > 0 and math.isfinite(hbar)):
            raise ShapeError(f"hbar must be positive, got {hbar}")
        arr = np.array(samples, dtype=np.complex128, copy=True)
        if arr.size != grid.size:
            raise ShapeError(f"{arr.size} samples for a grid of {grid.size} nodes")
        arr = arr.reshape(grid.shape)
        arr.setflags(write=False)
        self.grid = grid
        self.hbar = hbar
        self.samples = arr

    def __repr__(self) -> str:
        return f"SampledField(n={self.grid.n}, hbar={self.hbar:g}, norm={self.norm():.6g})"

    def with_samples(self, samples) -> "SampledField":
        return SampledField(self.grid, self.hbar, samples)

    def norm(self) -> float:
        return norm(self)

    def normalized(self) -> "SampledField":
        nrm = self.norm()
        if nrm == 0:
            raise ShapeError("cannot normalize a zero field")
        return self.with_samples(self.samples / nrm)

    def __add__(self, other: "SampledField") -> "SampledField":
        _check_compatible(self, other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "SampledField") -> "SampledField":
        _check_compatible(self, other)
        return self.with_samples(self.samples - other.samples)

    def __mul__(self, c) -> "SampledField":
        return self.with_samples(self.samples * complex(c))

    __rmul__ = __mul__


def _check_compatible(a: SampledField, b: SampledField) -> None:
    if a.grid != b.grid:
        raise ShapeError("fields live on different grids")
    if a.hbar != b.hbar:
        raise ShapeError(f"fields carry different hbar ({a.hbar} vs {b.hbar})")


def inner_product(a: SampledField, b: SampledField) -> complex:
    """Riemann sum of ``conj(a) * b``; conjugate-linear in ``a``."""
    _check_compatible(a, b)
    return complex(np.vdot(a.samples, b.samples) * a.grid.cell_volume)


def norm(f: SampledField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.samples) ** 2) * f.grid.cell_volume))


# ---------------------------------------------------------------------------
# reference states

def coherent_state(grid: Grid, hbar: float, center: PhasePoint, normalize: bool = False) -> SampledField:
    """Gaussian packet ``exp(-|x - x0|^2 / 2 hbar) exp(i <x, xi0> / hbar)``.

    With ``normalize`` the packet is scaled by ``(pi hbar)^(-d/4)`` to unit
    L2 norm. The centre must sit at least five widths inside the grid.
    """
    x0, xi0 = center.as_arrays()
    if center.d != grid.d:
        raise ShapeError(f"{center.d}-dimensional centre on a {grid.d}-dimensional grid")
    if not grid.covers(x0, COVERAGE_WIDTHS * math.sqrt(hbar)):
        raise CoverageError(f"centre x={tuple(x0)} is not covered with a 5*sqrt(hbar) margin")
    mesh = grid.mesh()
    r2 = sum((m - c) ** 2 for m, c in zip(mesh, x0))
    phase = sum(m * k for m, k in zip(mesh, xi0))
    psi = np.exp(-r2 / (2.0 * hbar)) * np.exp(1j * phase / hbar)
    if normalize:
        psi = psi * (math.pi * hbar) ** (-grid.d / 4.0)
    return SampledField(grid, hbar, psi)


def _hermite_function(u: np.ndarray, index: int) -> np.ndarray:
    """L2-normalized Hermite function h_index(u) by the stable recurrence."""
    prev = np.zeros_like(u)
    cur = math.pi ** -0.25 * np.exp(-0.5 * u * u)
    for k in range(index):
        prev, cur = cur, math.sqrt(2.0 / (k + 1)) * u * cur - math.sqrt(k / (k + 1)) * prev
    return cur


def hermite_state(grid: Grid, hbar: float, index) -> SampledField:
    """Hermite function in semiclassical scaling, argument ``x / sqrt(hbar)``.

    The result has unit L2 norm. On a 2D grid ``index`` may be a pair and
    the state is the tensor product.
    """
    idx = _as_tuple(index, grid.d, int)
    if any(k < 0 for k in idx):
        raise ShapeError("Hermite index must be non-negative")
    lo, hi = grid.bounds()
    psi = np.ones(grid.shape)
    for j, k in enumerate(idx):
        turning = math.sqrt((2 * k + 1) * hbar)
        reach = turning + COVERAGE_WIDTHS * math.sqrt(hbar)
        if -reach < lo[j] or reach > hi[j]:
            raise CoverageError(
                f"classical ellipse of radius {turning:.4g} plus margin exceeds axis {j} "
                f"[{lo[j]:.4g}, {hi[j]:.4g}]"
            )
        u = grid.axis(j) / math.sqrt(hbar)
        h = _hermite_function(u, k) * hbar ** -0.25
        shape = [1] * grid.d
        shape[j] = -1
        psi = psi * h.reshape(shape)
    return SampledField(grid, hbar, psi)


def _plateau(t: np.ndarray) -> np.ndarray:
    """Smooth step, 0 for t <= 0 and 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def plane_wave(grid: Grid, hbar: float, xi, support: float = 0.8, ramp: float = 0.1) -> SampledField:
    """Plane wave ``exp(i <x, xi> / hbar)`` truncated by a smooth plateau.

    The plateau is 1 on the central ``support`` fraction of every axis
    and falls to 0 over a further ``ramp`` fraction on each side.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != grid.d:
        raise ShapeError("frequency dimension does not match grid")
    if not (0 < support and support + 2 * ramp <= 1 and ramp > 0):
        raise ShapeError("need 0 < support, ramp > 0 and support + 2 ramp <= 1")
    mesh = grid.mesh()
    center = grid.center
    env = np.ones(grid.shape)
    phase = np.zeros(grid.shape)
    for j, m in enumerate(mesh):
        half = 0.5 * grid.lengths[j]
        s = np.abs(m - center[j]) / half
        env = env * (1.0 - _plateau((s - support) / (2 * ramp)))
        phase = phase + m * xi[j]
    return SampledField(grid, hbar, env * np.exp(1j * phase / hbar))


# ---------------------------------------------------------------------------
# HLF1 files

def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def field_to_bytes(f: SampledField) -> bytes:
    g = f.grid
    head = MAGIC + struct.pack("<I", g.d)
    head += struct.pack(f"<{g.d}I", *g.n)
    head += struct.pack(f"<{g.d}d", *g.spacing)
    head += struct.pack(f"<{g.d}d", *g.origin)
    head += struct.pack("<d", f.hbar)
    return head + np.ascontiguousarray(f.samples).astype("<c16").tobytes()


def field_from_bytes(raw: bytes) -> SampledField:
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (d,) = struct.unpack_from("<I", raw, 4)
    if d not in (1, 2):
        raise FormatError(f"unsupported dimension d={d} (only 1 and 2)")
    head = 8 + 4 * d + 16 * d + 8
    if len(raw) < head:
        raise FormatError(f"truncated header: expected {head} bytes, got {len(raw)}")
    n = struct.unpack_from(f"<{d}I", raw, 8)
    spacing = struct.unpack_from(f"<{d}d", raw, 8 + 4 * d)
    origin = struct.unpack_from(f"<{d}d", raw, 8 + 12 * d)
    (hbar,) = struct.unpack_from("<d", raw, 8 + 20 * d)
    try:
        grid = Grid(n, spacing, origin)
    except ShapeError as exc:
        raise FormatError(f"invalid grid in header: {exc.args[0]}") from None
    expected = grid.size * 16
    actual = len(raw) - head
    if actual != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes, found {actual}")
    samples = np.frombuffer(raw, dtype="<c16", offset=head).reshape(grid.shape)
    try:
        return SampledField(grid, hbar, samples)
    except ShapeError as exc:
        raise FormatError(f"invalid field: {exc.args[0]}") from None


def save_field(f: SampledField, path) -> None:
    """Write ``f`` as HLF1, atomically (temp file then rename)."""
    _atomic_write(Path(path), field_to_bytes(f))


def load_field(path) -> SampledField:
    """Read an HLF1 file. I/O failures propagate as :class:`OSError`."""
    return field_from_bytes(Path(path).read_bytes())


def stack_points(points: Sequence[PhasePoint]) -> tuple[np.ndarray, np.ndarray]:
    """(M, d) arrays of positions and frequencies."""
    x = np.array([p.x for p in points], dtype=float)
    xi = np.array([p.xi for p in points], dtype=float)
    return x, xi
