import math

import numpy as np
import pytest

from helmprop import Grid, PhasePoint, SampledField, coherent_state, fourier
from helmprop.errors import ConfigError, CoverageError, ShapeError
from helmprop.weyl import (OperatorMatrix, SymbolGrid, derivative, fit_slope, moyal_check, poisson_bracket,
                           symbol_of, weyl_quantize)

H = 1 / 40
GRID = Grid.centered(256, 8.0)


def bump(x0, k0, wx, wk):
    return lambda x, xi: np.exp(-((x - x0) ** 2) / (2 * wx * wx) - ((xi - k0) ** 2) / (2 * wk * wk))


def spectral_derivative(f: SampledField) -> np.ndarray:
    # Oracle: (hbar / i) d/dx through the FFT.
    s = fourier.forward(f)
    return fourier.inverse(fourier.Spectrum(f.grid, f.hbar, s.values * s.axes()[0])).samples


def test_constant_symbol_is_identity():
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, lambda x, xi: np.ones_like(x)))
    assert np.max(np.abs(A.matrix - np.eye(256))) < 1e-10


def test_position_symbol_is_diagonal():
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, lambda x, xi: x + 0 * xi))
    assert np.allclose(A.matrix, np.diag(GRID.axis(0)), rtol=0, atol=1e-12)
    sampled = SymbolGrid(GRID, H, np.broadcast_to(GRID.axis(0)[:, None], (256, 256)))
    assert np.allclose(weyl_quantize(sampled).matrix, np.diag(GRID.axis(0)), rtol=0, atol=1e-12)


def test_frequency_symbol_is_spectral_derivative():
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, lambda x, xi: xi + 0 * x))
    f = coherent_state(GRID, H, PhasePoint(0.3, 0.4), normalize=True)
    assert np.max(np.abs(A.apply(f).samples - spectral_derivative(f))) < 1e-8


def test_real_symbol_gives_hermitian_matrix():
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, bump(0.2, 0.1, 0.7, 0.3)))
    assert A.hermiticity_defect() < 1e-10


def test_round_trip_bump():
    p = SymbolGrid.from_function(GRID, H, bump(0.2, 0.1, 0.5, 0.3))
    back = symbol_of(weyl_quantize(p))
    assert np.max(np.abs(back.values - p.values)) < 1e-8
    sampled = SymbolGrid(GRID, H, p.values)
    assert np.max(np.abs(symbol_of(weyl_quantize(sampled)).values - p.values)) < 1e-8


def test_symbol_of_identity_and_reality():
    one = symbol_of(OperatorMatrix.identity(GRID, H))
    assert np.max(np.abs(one.values - 1)) < 1e-10
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, bump(-0.4, 0.2, 0.5, 0.25)))
    assert np.max(np.abs(symbol_of(A).values.imag)) < 1e-10


def test_symbol_of_reports_wraparound():
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, lambda x, xi: xi + 0 * x))
    with pytest.raises(CoverageError) as err:
        symbol_of(A)
    assert "wraparound" in str(err.value)


def test_operator_algebra(rng):
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, bump(0.0, 0.0, 1.0, 0.5)))
    B = OperatorMatrix.identity(GRID, H)
    assert np.array_equal((A @ B).matrix, A.matrix)
    v = rng.normal(size=256)
    assert np.allclose(A @ v, A.matrix @ v)
    with pytest.raises(ShapeError):
        A @ OperatorMatrix.identity(Grid.centered(128, 8.0), H)


def test_from_linear_map_recovers_matrix():
    A = weyl_quantize(SymbolGrid.from_function(GRID, H, bump(0.0, 0.0, 1.0, 0.5)))
    B = OperatorMatrix.from_linear_map(A.apply, GRID, H)
    assert np.max(np.abs(B.matrix - A.matrix)) < 1e-14


def test_commutator_of_position_and_frequency():
    X = weyl_quantize(SymbolGrid.from_function(GRID, H, lambda x, xi: x + 0 * xi))
    XI = weyl_quantize(SymbolGrid.from_function(GRID, H, lambda x, xi: xi + 0 * x))
    f = coherent_state(GRID, H, PhasePoint(0.1, 0.2), normalize=True)
    comm = (X @ XI).apply(f).samples - (XI @ X).apply(f).samples
    assert np.max(np.abs(comm - 1j * H * f.samples)) < 1e-8


def test_derivatives_and_poisson_bracket():
    a = SymbolGrid.from_function(GRID, H, bump(0.1, 0.05, 0.5, 0.3))
    x, xi = np.meshgrid(GRID.axis(0), a.xi, indexing="ij")
    dx_exact = -(x - 0.1) / 0.25 * a.values
    for method, tol in (("spectral", 1e-8), ("fd", 5e-3)):
        assert np.max(np.abs(derivative(a, "x", method).values - dx_exact)) < tol
    # {x, xi} = d_xi x d_x xi - d_x x d_xi xi = -1
    X = SymbolGrid.from_function(GRID, H, lambda x, xi: x + 0 * xi)
    XI = SymbolGrid.from_function(GRID, H, lambda x, xi: xi + 0 * x)
    pb = poisson_bracket(X, XI, "fd").values
    assert np.allclose(pb[4:-4, 4:-4], -1.0, atol=1e-9)
    with pytest.raises(ConfigError):
        derivative(a, "t")


def test_moyal_position_squared_is_exact():
    rep = moyal_check(lambda x, xi: x + 0 * xi, lambda x, xi: x + 0 * xi, [1 / 20, 1 / 40, 1 / 80],
                      window=(-1.0, 1.0, -1.0, 1.0))
    assert max(rep.residuals) < 1e-10


def test_moyal_bumps_second_order():
    rep = moyal_check(bump(0.2, 0.1, 0.8, 0.4), bump(-0.1, -0.05, 0.7, 0.35), [1 / 40, 1 / 80, 1 / 160])
    assert rep.slope >= 1.8


def test_moyal_needs_three_hbars():
    with pytest.raises(ConfigError):
        moyal_check(bump(0, 0, 1, 1), bump(0, 0, 1, 1), [0.1, 0.05])


def test_fit_slope():
    h = np.array([0.1, 0.05, 0.025])
    assert fit_slope(h, 3 * h**2) == pytest.approx(2.0)
