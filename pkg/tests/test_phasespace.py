import math

import numpy as np
import pytest

from helmprop import Grid, PhasePoint, SampledField, coherent_state, hermite_state
from helmprop.errors import ConfigError, ResolutionError, RidgeError, ShapeError
from helmprop.geometry import AffineMap
from helmprop.phasespace import (WINDOW_CONSTANT, extract_ridge, gabor_spectrogram, hausdorff, peak_find,
                                 transport_compare, write_csv, write_pgm)
from helmprop.propagate import apply_U_affine

H = 1 / 50
GRID = Grid.centered(512, 8.0)


@pytest.mark.parametrize("hbar, n", [(1 / 50, 512), (1 / 100, 1024), (1 / 200, 2048)])
def test_coherent_state_peak_at_centre(hbar, n):
    center = PhasePoint(0.3, -0.2)
    s = gabor_spectrogram(coherent_state(Grid.centered(n, 8.0), hbar, center))
    top = s.argmax()
    assert abs(top.x[0] - 0.3) <= s.dx / 2 + 1e-12 and abs(top.xi[0] + 0.2) <= s.dxi / 2 + 1e-12
    rep = peak_find(s, 1)
    assert rep.complete and len(rep) == 1
    assert math.hypot(rep.peaks[0].x - 0.3, rep.peaks[0].xi + 0.2) < math.sqrt(hbar) / 2


def test_mass_is_field_independent(rng):
    ratios = []
    for _ in range(2):
        # Broadband random samples under an envelope that vanishes before the grid edges.
        envelope = np.exp(-GRID.axis(0) ** 2 / 2)
        f = SampledField(GRID, H, envelope * (rng.normal(size=512) + 1j * rng.normal(size=512)))
        s = gabor_spectrogram(f, xi_max=None)
        ratios.append(s.mass() / f.norm() ** 2)
    assert ratios[0] == pytest.approx(ratios[1], rel=1e-6)
    assert ratios[0] == pytest.approx(WINDOW_CONSTANT * H, rel=1e-6)


def test_mass_matches_expected_for_coherent_state():
    f = coherent_state(GRID, H, PhasePoint(0.0, 0.4))
    s = gabor_spectrogram(f, xi_max=None)
    assert s.mass() == pytest.approx(s.expected_mass(f), rel=1e-6)
    assert np.all(s.intensity >= 0)


def test_frequency_band_restriction():
    s = gabor_spectrogram(coherent_state(GRID, H, PhasePoint(0.0, 0.0)), xi_max=0.5)
    assert s.xi.min() >= -0.5 and s.xi.max() <= 0.5
    assert np.all(np.diff(s.xi) > 0)


def test_resolution_and_shape_errors():
    coarse = coherent_state(Grid.centered(64, 8.0), H, PhasePoint(0.0, 0.0))
    with pytest.raises(ResolutionError):
        gabor_spectrogram(coarse)
    with pytest.raises(ResolutionError):
        gabor_spectrogram(coherent_state(GRID, H, PhasePoint(0.0, 0.0)), window_width=0.05)
    flat = SampledField(Grid.centered((32, 32), (4.0, 4.0)), H, np.zeros((32, 32)))
    with pytest.raises(ShapeError):
        gabor_spectrogram(flat)


def test_two_packets_two_peaks():
    f = coherent_state(GRID, H, PhasePoint(-1.0, 0.0)) + coherent_state(GRID, H, PhasePoint(1.0, 0.3))
    rep = peak_find(gabor_spectrogram(f), 3)
    assert len(rep) == 2 and not rep.complete
    got = sorted((round(p.x, 1), round(p.xi, 1)) for p in rep.peaks)
    assert got == [(-1.0, 0.0), (1.0, 0.3)]
    with pytest.raises(ConfigError):
        peak_find(gabor_spectrogram(f), 0)


def test_hermite_ridge_is_the_unit_circle():
    s = gabor_spectrogram(hermite_state(GRID, H, 50))
    ridge = extract_ridge(s)
    radius = np.hypot(ridge[:, 0], ridge[:, 1])
    # Classical energy of level n is (2n + 1) hbar.
    assert np.median(radius) == pytest.approx(math.sqrt(101 * H), abs=0.05)
    assert radius.std() < 0.06


def test_ridge_errors(rng):
    zero = SampledField(GRID, H, np.zeros(512))
    with pytest.raises(RidgeError):
        extract_ridge(gabor_spectrogram(zero))
    noise = SampledField(GRID, H, rng.normal(size=512))
    with pytest.raises(RidgeError) as err:
        extract_ridge(gabor_spectrogram(noise, xi_max=None), threshold=1e-4)
    assert "diffuse" in str(err.value)


def test_hausdorff_oracle():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
    assert hausdorff(a, b) == pytest.approx(2.0)
    assert hausdorff(b, a) == pytest.approx(2.0)
    assert hausdorff(a, a) == 0.0
    with pytest.raises(RidgeError):
        hausdorff(a, np.empty((0, 2)))


def test_transport_identity_within_one_cell():
    f = hermite_state(GRID, H, 50)
    rep = transport_compare(f, AffineMap.identity(1), f)
    s = gabor_spectrogram(f)
    assert rep.distance <= math.hypot(s.dx, s.dxi)
    assert rep.passed


def test_transport_rejects_wrong_map():
    f = hermite_state(GRID, H, 50)
    good = AffineMap(AffineMap.rotation(10).G, (0.3, 0.0))
    out = apply_U_affine(f, good)
    assert transport_compare(f, good, out).passed
    wrong = AffineMap(AffineMap.rotation(-10).G, (0.3, 0.0))
    rep = transport_compare(f, wrong, out)
    assert not rep.passed and rep.distance > 2 * rep.tolerance
    assert rep.to_dict()["distance_in_sqrt_hbar"] == pytest.approx(rep.distance / math.sqrt(H))


def test_writers(tmp_path):
    s = gabor_spectrogram(coherent_state(Grid.centered(256, 8.0), H, PhasePoint(0.0, 0.0)), xi_max=0.3)
    write_csv(s, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "x\\xi"
    assert len(lines) == s.x.size + 1 and len(lines[1].split(",")) == s.xi.size + 1
    write_pgm(s, tmp_path / "s.pgm")
    raw = (tmp_path / "s.pgm").read_bytes()
    header = f"P5\n{s.x.size} {s.xi.size}\n255\n".encode()
    assert raw.startswith(header) and len(raw) == len(header) + s.x.size * s.xi.size
    assert max(raw[len(header):]) == 255
