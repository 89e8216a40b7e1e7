import math

import numpy as np
import pytest

from conftest import SQRT3_2, random_ball, random_invertible
from helmprop.errors import ConfigError, DomainError, NotInRangeError, SingularityError, UsageError
from helmprop.geometry import (AffineMap, SheetLabel, degeneracy_locus, degeneracy_margin, degeneracy_test, det_dg,
                               dg, g_inverse_batch, g_inverse_on_sheet, g_map, grad_J, jacobian_J, parse_affine, rotation_matrix,
                               sheet_classify, sheet_labels, sheet_preimages, sigma, tilde_J, tilde_J_batch)

ALPHA10 = math.radians(10)


def fd_dg(G, xi, h=1e-6):
    cols = []
    for k in range(xi.size):
        e = np.zeros_like(xi)
        e[k] = h
        cols.append((g_map(G, xi + e) - g_map(G, xi - e)) / (2 * h))
    return np.stack(cols, axis=-1)


# sigma ----------------------------------------------------------------------

def test_sigma_pole_equator_and_norm(rng):
    assert np.array_equal(sigma(np.zeros(2)), [1.0, 0.0, 0.0])
    assert np.allclose(sigma(np.array([0.6, 0.8])), [0.0, 0.6, 0.8])
    xi = random_ball(rng, 500, 2, 1.0)
    s = sigma(xi)
    assert np.max(np.abs(np.linalg.norm(s, axis=-1) - 1)) < 1e-14
    assert np.array_equal(s[:, 1:], xi)
    assert np.all(s[:, 0] >= 0)


def test_sigma_rejects_evanescent():
    with pytest.raises(DomainError):
        sigma(np.array([1.2]))


# g and dg -------------------------------------------------------------------

def test_g_identity(rng):
    xi = random_ball(rng, 50, 2)
    assert np.allclose(g_map(np.eye(3), xi), xi, atol=0)


def test_g_rotation_value():
    G = rotation_matrix(10)
    assert g_map(G, np.array([0.0]))[0] == pytest.approx(-0.1736481777, abs=1e-10)
    xi = np.linspace(-0.9, 0.9, 11)[:, None]
    closed = -np.sqrt(1 - xi**2) * math.sin(ALPHA10) + xi * math.cos(ALPHA10)
    assert np.allclose(g_map(G, xi), closed, atol=1e-15)


def test_collision_frequencies_share_an_image():
    G = rotation_matrix(60)
    assert g_map(G, np.array([0.0]))[0] == pytest.approx(-SQRT3_2, abs=1e-15)
    assert g_map(G, np.array([-SQRT3_2]))[0] == pytest.approx(-SQRT3_2, abs=1e-15)


def test_dg_rotation_closed_form():
    G = rotation_matrix(10)
    for x in (-0.7, 0.0, 0.4):
        expect = x * math.sin(ALPHA10) / math.sqrt(1 - x * x) + math.cos(ALPHA10)
        assert dg(G, np.array([x]))[0, 0] == pytest.approx(expect, rel=1e-14)
    assert np.allclose(dg(np.eye(3), np.array([0.2, -0.3])), np.eye(2))


@pytest.mark.parametrize("d", [1, 2])
def test_dg_matches_finite_differences(rng, d):
    worst = 0.0
    for _ in range(1000 // d):
        G = random_invertible(rng, d)
        xi = random_ball(rng, 1, d, 0.85)[0]
        if abs(degeneracy_margin(G, xi)) < 0.05:
            continue
        worst = max(worst, np.max(np.abs(dg(G, xi) - fd_dg(G, xi))))
    assert worst < 1e-6


@pytest.mark.parametrize("d", [1, 2])
def test_det_closed_form_matches_direct(rng, d):
    for _ in range(200):
        G = random_invertible(rng, d)
        xi = random_ball(rng, 1, d, 0.9)
        closed = det_dg(G, xi, method="closed")
        direct = det_dg(G, xi, method="direct")
        assert closed == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_det_vanishes_at_degeneracy():
    G = rotation_matrix(60)
    assert abs(det_dg(G, np.array([-0.5]))) < 1e-12
    assert abs(det_dg(G, np.array([-0.5 + 1e-6]))) < 1e-5
    assert det_dg(np.eye(2), np.array([0.3])) == 1.0


# J --------------------------------------------------------------------------

def test_jacobian_values(rng):
    assert jacobian_J(rotation_matrix(60), np.array([0.0])) == pytest.approx(2.0, rel=1e-14)
    assert np.all(jacobian_J(np.eye(3), random_ball(rng, 20, 2)) == 1.0)
    G = random_invertible(rng, 2)
    xi = random_ball(rng, 200, 2, 0.8)
    xi = xi[np.abs(degeneracy_margin(G, xi)) > 1e-3]
    assert np.max(np.abs(jacobian_J(G, xi) * det_dg(G, xi) - 1)) < 1e-12


def test_jacobian_singularity_error_carries_details():
    with pytest.raises(SingularityError) as err:
        jacobian_J(rotation_matrix(60), np.array([-0.5]))
    assert err.value.reason == "degenerate"
    assert err.value.details["xi"] == [-0.5]
    assert err.value.details["margin"] < 1e-9


def test_grad_J_matches_finite_differences(rng):
    G = random_invertible(rng, 2)
    xi = np.array([0.1, -0.2])
    if abs(degeneracy_margin(G, xi)) < 0.05:
        pytest.skip("sample too close to the degeneracy set")
    h = 1e-6
    fd = np.array([(jacobian_J(G, xi + e) - jacobian_J(G, xi - e)) / (2 * h) for e in np.eye(2) * h])
    assert np.allclose(grad_J(G, xi), fd, rtol=1e-6, atol=1e-7)


# degeneracy and sheets ------------------------------------------------------

def test_degeneracy_examples(rng):
    assert not np.any(degeneracy_test(np.eye(3), random_ball(rng, 100, 2, 0.999)))
    G = rotation_matrix(60)
    assert degeneracy_test(G, np.array([-0.5]))
    assert not degeneracy_test(G, np.array([-0.49]))


def test_degeneracy_criteria_agree(rng):
    # Oracle: the sign test against |det dg| scaled by the same geometry.
    mismatches = 0
    for _ in range(10_000):
        G = random_invertible(rng, 1, well_conditioned=False)
        xi = rng.uniform(-0.95, 0.95, 1)
        margin = float(degeneracy_margin(G, xi))
        det = abs(float(det_dg(G, xi, method="direct")))
        by_det = det <= 1e-6
        by_margin = abs(margin) <= 1e-6
        if by_det != by_margin and abs(margin) > 1e-4:
            mismatches += 1
    assert mismatches == 0


def test_sheet_classification():
    assert sheet_classify(np.eye(2), np.array([0.4])) == SheetLabel.PLUS
    G = rotation_matrix(60)
    a = sheet_classify(G, np.array([0.0]))
    b = sheet_classify(G, np.array([-SQRT3_2]))
    assert {a, b} == {SheetLabel.PLUS, SheetLabel.MINUS}
    assert sheet_classify(G, np.array([-0.5])) == SheetLabel.ZERO


def test_identity_has_no_minus_sheet(rng):
    assert np.all(sheet_labels(np.eye(3), random_ball(rng, 1000, 2, 0.999)) == 1)


def test_colliding_pairs_get_distinct_sheets(rng):
    for _ in range(200):
        G = random_invertible(rng, 1)
        xi = rng.uniform(-0.95, 0.95, 1)
        if abs(degeneracy_margin(G, xi)) < 1e-3:
            continue
        s = SheetLabel(int(sheet_labels(G, xi)))
        other, ok = g_inverse_batch(G, g_map(G, xi)[None], -int(s))
        if ok[0]:
            assert sheet_labels(G, other[0]) == -int(s)
            assert abs(other[0, 0] - xi[0]) > 1e-6


def test_perpendicular_planes_make_dg_singular_at_zero():
    # <e0, G^-1 e0> = 0 for a quarter turn.
    G = rotation_matrix(90)
    assert abs(np.linalg.inv(G)[0, 0]) < 1e-15
    assert abs(det_dg(G, np.array([0.0]))) < 1e-15


# inverse on sheets ----------------------------------------------------------

def test_inverse_collision_preimages():
    G = rotation_matrix(60)
    pre = sheet_preimages(G, np.array([-SQRT3_2]))
    values = sorted(float(v[0]) for v in pre.values())
    assert values[0] == pytest.approx(-SQRT3_2, abs=1e-12)
    assert values[1] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(g_inverse_on_sheet(np.eye(3), np.array([0.3, 0.2]), "plus"), [0.3, 0.2], atol=1e-15)


@pytest.mark.parametrize("d", [1, 2])
def test_inverse_round_trip(rng, d):
    count = 0
    while count < 1000 // d:
        G = random_invertible(rng, d)
        xi = random_ball(rng, 1, d, 0.9)[0]
        if abs(degeneracy_margin(G, xi)) < 1e-2:
            continue
        eta = g_map(G, xi)
        s = SheetLabel(int(sheet_labels(G, xi)))
        back = g_inverse_on_sheet(G, eta, s)
        assert np.max(np.abs(g_map(G, back) - eta)) < 1e-12
        assert sheet_classify(G, back) == s
        count += 1


def test_inverse_out_of_range():
    with pytest.raises(NotInRangeError):
        g_inverse_on_sheet(np.eye(2), np.array([0.5]), "minus")
    with pytest.raises(ConfigError):
        g_inverse_on_sheet(np.eye(2), np.array([0.5]), "zero")


def test_tilde_J():
    assert tilde_J(np.eye(3), np.array([0.2, 0.1])) == pytest.approx(1.0, abs=1e-12)
    G = rotation_matrix(60)
    eta = np.array([-SQRT3_2])
    both = tilde_J(G, eta)
    singles = [abs(float(jacobian_J(G, v))) for v in sheet_preimages(G, eta).values()]
    assert len(singles) == 2 and both > max(singles)
    assert both == pytest.approx(sum(singles), rel=1e-12)
    # g(0.9) under a 10 degree rotation has only the plus preimage
    G10 = rotation_matrix(10)
    eta = g_map(G10, np.array([0.9]))
    assert tilde_J(G10, eta) == pytest.approx(abs(float(jacobian_J(G10, np.array([0.9])))), rel=1e-12)
    assert tilde_J_batch(G10, eta[None])[0] == pytest.approx(tilde_J(G10, eta), rel=1e-12)
    with pytest.raises(NotInRangeError):
        tilde_J(G10, np.array([0.999]))


# affine map parsing ---------------------------------------------------------

def test_parse_affine_items():
    m = parse_affine("rot:10;trans:0.3,0")
    assert np.allclose(m.G, rotation_matrix(10))
    assert np.allclose(m.gamma, [0.3, 0.0])
    assert parse_affine("id").is_identity()
    m2 = parse_affine("mat:1,0,0,1")
    assert np.array_equal(m2.G, np.eye(2))
    assert parse_affine("rot:30:0", 2).G.shape == (3, 3)


def test_parse_affine_errors():
    for bad in ("", "rot:", "spin:3", "mat:1,2,3", "mat:0,0,0,0"):
        with pytest.raises((UsageError, ConfigError, SingularityError)):
            parse_affine(bad)


def test_rotation_sign_convention():
    assert g_map(AffineMap.rotation(25).G, np.array([0.0]))[0] == pytest.approx(-math.sin(math.radians(25)))


def test_degeneracy_locus():
    assert degeneracy_locus(rotation_matrix(60))[0] == pytest.approx(-0.5, abs=1e-12)
    assert degeneracy_locus(rotation_matrix(-30))[0] == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    assert degeneracy_locus(np.eye(2)).size == 0
    for deg in (10, 45, 120, 170):
        xi = degeneracy_locus(rotation_matrix(deg))
        assert abs(degeneracy_margin(rotation_matrix(deg), xi[:, None])[0]) < 1e-14
