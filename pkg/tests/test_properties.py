"""Property-based checks of the geometric and serialization invariants."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helmprop import Grid, SampledField
from helmprop.errors import UsageError
from helmprop.fields import field_from_bytes, field_to_bytes
from helmprop.geometry import AffineMap, degeneracy_margin, g_inverse_batch, g_map, rotation_matrix, sheet_labels, sigma
from helmprop.symbols import parse_symbol
from helmprop.symplectic import CanonicalMap, kappa_affine, kappa_translation, symplectic_defect

finite = st.floats(-2.0, 2.0, allow_nan=False)
inside = st.floats(-0.95, 0.95, allow_nan=False)
angles = st.floats(-85.0, 85.0, allow_nan=False)
settings.register_profile("helmprop", max_examples=60, deadline=None)
settings.load_profile("helmprop")


@given(st.lists(inside, min_size=1, max_size=2))
def test_sigma_is_a_unit_vector(xi):
    xi = np.array(xi)
    assume(xi @ xi < 1)
    assert abs(np.linalg.norm(sigma(xi)) - 1) < 1e-14


@given(finite, inside, finite, finite, finite, finite)
def test_translation_canonical_maps_compose(x, xi, a0, a1, b0, b1):
    a0, b0 = abs(a0), abs(b0)
    p = (np.array([x]), np.array([xi]))
    ab = kappa_translation([b0, b1], kappa_translation([a0, a1], p))
    direct = kappa_translation([a0 + b0, a1 + b1], p)
    assert np.allclose(ab[0], direct[0], atol=1e-12, rtol=1e-12)
    assert np.array_equal(ab[1], direct[1])


@given(angles, finite, inside, finite, finite)
def test_affine_canonical_map_is_symplectic(deg, x, xi, g0, g1):
    m = AffineMap(rotation_matrix(deg), (abs(g0), g1))
    xi1 = kappa_translation(m.gamma, (np.array([x]), np.array([xi])))[1]
    assume(abs(degeneracy_margin(m.G, xi1)) > 0.05)
    assert symplectic_defect(CanonicalMap.of(m), x, xi) < 1e-5


@given(angles, inside)
def test_sheet_inverse_recovers_the_frequency(deg, xi):
    G = rotation_matrix(deg)
    point = np.array([[xi]])
    assume(abs(degeneracy_margin(G, point)[0]) > 1e-3)
    sheet = int(sheet_labels(G, point)[0])
    back, ok = g_inverse_batch(G, g_map(G, point), sheet)
    assert ok[0]
    assert abs(back[0, 0] - xi) < 1e-10


@given(angles, finite, inside)
def test_rotation_composes_with_its_inverse_on_the_plus_sheet(deg, x, xi):
    p = (np.array([x]), np.array([xi]))
    fwd = AffineMap.rotation(deg)
    assume(abs(degeneracy_margin(fwd.G, p[1][None])[0]) > 0.05)
    assume(sheet_labels(fwd.G, p[1][None])[0] == 1)
    y = kappa_affine(fwd, p)
    assume(abs(degeneracy_margin(rotation_matrix(-deg), y[1][None])[0]) > 0.05)
    z = kappa_affine(AffineMap.rotation(-deg), y)
    assert np.allclose(z[0], p[0], atol=1e-9) and np.allclose(z[1], p[1], atol=1e-12)


@given(st.integers(2, 40), st.floats(0.01, 5.0), st.floats(-3.0, 3.0), st.floats(1e-4, 1.0), st.data())
def test_field_bytes_round_trip(n, dx, x0, hbar, data):
    grid = Grid((n,), (dx,), (x0,))
    parts = st.floats(-1e6, 1e6, allow_nan=False)
    re = np.array(data.draw(st.lists(parts, min_size=n, max_size=n)))
    im = np.array(data.draw(st.lists(parts, min_size=n, max_size=n)))
    f = SampledField(grid, hbar, re + 1j * im)
    g = field_from_bytes(field_to_bytes(f))
    assert g.grid == f.grid and g.hbar == f.hbar
    assert np.array_equal(g.samples, f.samples)


@given(st.floats(0.0, 1e6, allow_nan=False), finite, finite)
def test_parsed_number_is_constant(value, x, xi):
    assert parse_symbol(repr(value))(x, xi) == pytest.approx(value, rel=1e-15)


@given(finite, finite, st.floats(0.1, 3.0))
def test_parsed_gaussian_matches_formula(x, xi, w):
    p = parse_symbol(f"gaussian(0.1, -0.2, {w!r})")
    ref = math.exp(-((x - 0.1) ** 2 + (xi + 0.2) ** 2) / (2 * w * w))
    assert abs(p(x, xi) - ref) <= 1e-14


@given(st.text(max_size=30))
def test_parser_rejects_with_usage_error_only(text):
    try:
        parse_symbol(text)
    except UsageError:
        pass
