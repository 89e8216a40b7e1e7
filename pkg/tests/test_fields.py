import math

import numpy as np
import pytest
from numpy.polynomial import hermite as npherm

from helmprop import (Grid, PhasePoint, SampledField, coherent_state, hermite_state, inner_product,
                      load_field, norm, save_field)
from helmprop.errors import CoverageError, FormatError, ShapeError
from helmprop.fields import MAGIC, field_to_bytes, plane_wave


def test_grid_rejects_bad_axes():
    with pytest.raises(ShapeError):
        Grid((1,), (0.1,), (0.0,))
    with pytest.raises(ShapeError):
        Grid((8,), (0.0,), (0.0,))
    with pytest.raises(ShapeError):
        Grid((8,), (0.1,), (float("nan"),))


def test_grid_origin_is_index_zero():
    g = Grid.centered(8, 4.0)
    assert g.axis(0)[0] == -2.0
    assert g.spacing == (0.5,)
    assert g.points().shape == (8, 1)


def test_sampled_field_checks_shape_and_hbar(grid_1d):
    with pytest.raises(ShapeError):
        SampledField(grid_1d, 0.01, np.zeros(10))
    with pytest.raises(ShapeError):
        SampledField(grid_1d, -1.0, np.zeros(512))


def test_collision_packet_peak():
    g = Grid.centered(4096, 8.0)
    psi = coherent_state(g, 0.005, PhasePoint(-0.25, 0.0))
    i = int(np.argmax(np.abs(psi.samples)))
    assert g.axis(0)[i] == pytest.approx(-0.25, abs=g.spacing[0])
    assert abs(psi.samples[i]) == pytest.approx(1.0, abs=1e-12)


def test_coherent_state_closed_form_at_nodes(grid_1d):
    h = 0.02
    psi = coherent_state(grid_1d, h, PhasePoint(0.3, -0.4))
    x = grid_1d.axis(0)
    exact = np.exp(-((x - 0.3) ** 2) / (2 * h)) * np.exp(1j * x * (-0.4) / h)
    assert np.array_equal(psi.samples, exact)


def test_centered_coherent_state_is_real_and_even():
    g = Grid((1025,), (8.0 / 1024,), (-4.0,))
    psi = coherent_state(g, 0.01, PhasePoint(0.0, 0.0))
    assert np.all(psi.samples.imag == 0)
    assert np.allclose(psi.samples.real, psi.samples.real[::-1], rtol=0, atol=1e-15)


def test_coherent_state_norm_matches_gaussian_integral(grid_1d):
    h = 0.01
    psi = coherent_state(grid_1d, h, PhasePoint(0.1, 0.2))
    assert norm(psi) ** 2 == pytest.approx(math.sqrt(math.pi * h), rel=1e-6)
    unit = coherent_state(grid_1d, h, PhasePoint(0.1, 0.2), normalize=True)
    assert norm(unit) == pytest.approx(1.0, rel=1e-6)


def test_coherent_state_coverage_error(grid_1d):
    with pytest.raises(CoverageError):
        coherent_state(grid_1d, 0.01, PhasePoint(3.9, 0.0))


def test_hermite_zero_is_normalized_gaussian(grid_1d):
    h = 0.02
    a = hermite_state(grid_1d, h, 0)
    b = coherent_state(grid_1d, h, PhasePoint(0.0, 0.0), normalize=True)
    assert np.max(np.abs(a.samples - b.samples)) < 1e-12


def test_hermite_family_orthonormal():
    h = 1 / 50
    g = Grid.centered(1024, 8.0)
    states = [hermite_state(g, h, k) for k in range(21)]
    gram = np.array([[inner_product(a, b) for b in states] for a in states])
    assert np.max(np.abs(gram - np.eye(21))) < 1e-8


def test_hermite_matches_polynomial_oracle():
    # Oracle: physicists' Hermite polynomial from numpy, normalized in closed form.
    h = 1 / 50
    g = Grid.centered(1024, 8.0)
    k = 12
    u = g.axis(0) / math.sqrt(h)
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    ref = npherm.hermval(u, coef) * np.exp(-u * u / 2)
    ref /= math.sqrt(2.0**k * math.factorial(k) * math.sqrt(math.pi)) * h**0.25
    assert np.max(np.abs(hermite_state(g, h, k).samples - ref)) < 1e-10 * np.max(np.abs(ref))


def test_hermite_coverage_error():
    with pytest.raises(CoverageError):
        hermite_state(Grid.centered(256, 2.0), 1 / 50, 50)


def test_inner_product_conventions(grid_1d, rng):
    h = 0.02
    a = SampledField(grid_1d, h, rng.normal(size=512) + 1j * rng.normal(size=512))
    b = SampledField(grid_1d, h, rng.normal(size=512) + 1j * rng.normal(size=512))
    aa = inner_product(a, a)
    assert aa.imag == 0 and aa.real >= 0
    assert aa.real == pytest.approx(norm(a) ** 2, rel=1e-14)
    assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)), rel=1e-15)
    # conjugate-linear in the first slot
    assert inner_product(a * 1j, b) == pytest.approx(-1j * inner_product(a, b), rel=1e-14)


def test_separated_packets_are_nearly_orthogonal(grid_1d):
    h = 0.01
    d = 10 * math.sqrt(h)
    a = coherent_state(grid_1d, h, PhasePoint(-d / 2, 0.0))
    b = coherent_state(grid_1d, h, PhasePoint(d / 2, 0.0))
    bound = math.exp(-(d**2) / (4 * h))
    assert abs(inner_product(a, b)) < 1e-9 * norm(a) * norm(b)
    assert abs(inner_product(a, b)) / (norm(a) * norm(b)) == pytest.approx(bound, rel=1e-6)


def test_inner_product_grid_mismatch(grid_1d):
    a = coherent_state(grid_1d, 0.02, PhasePoint(0.0, 0.0))
    b = coherent_state(Grid.centered(256, 8.0), 0.02, PhasePoint(0.0, 0.0))
    with pytest.raises(ShapeError):
        inner_product(a, b)


def test_save_load_bit_exact(tmp_path, rng):
    for grid in (Grid.centered(64, 3.0), Grid((16, 8), (0.1, 0.2), (-0.8, 0.3))):
        f = SampledField(grid, 0.0137, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
        p = tmp_path / f"f{grid.d}.hlf"
        save_field(f, p)
        g = load_field(p)
        assert g.grid == f.grid and g.hbar == f.hbar
        assert g.samples.tobytes() == f.samples.astype(np.complex128).tobytes()


def test_hlf_header_layout(grid_1d):
    raw = field_to_bytes(coherent_state(grid_1d, 0.02, PhasePoint(0.0, 0.0)))
    assert raw[:4] == MAGIC
    assert len(raw) == 4 + 4 + 4 + 8 + 8 + 8 + 16 * 512


def test_load_rejects_dimension_three(tmp_path):
    import struct
    p = tmp_path / "d3.hlf"
    p.write_bytes(MAGIC + struct.pack("<I", 3) + b"\0" * 64)
    with pytest.raises(FormatError, match="unsupported dimension"):
        load_field(p)


def test_load_reports_truncation(tmp_path, grid_1d):
    raw = field_to_bytes(coherent_state(grid_1d, 0.02, PhasePoint(0.0, 0.0)))
    p = tmp_path / "cut.hlf"
    p.write_bytes(raw[:-100])
    with pytest.raises(FormatError, match=r"expected 8192 bytes, found 8092"):
        load_field(p)


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.hlf"
    p.write_bytes(b"NOPE" + b"\0" * 40)
    with pytest.raises(FormatError, match="bad magic"):
        load_field(p)


def test_plane_wave_is_windowed(grid_1d):
    f = plane_wave(grid_1d, 0.02, 0.3, support=0.6, ramp=0.1)
    x = grid_1d.axis(0)
    assert np.allclose(np.abs(f.samples[np.abs(x) <= 0.6 * 4]), 1.0)
    assert np.all(f.samples[np.abs(x) >= 0.8 * 4] == 0)
