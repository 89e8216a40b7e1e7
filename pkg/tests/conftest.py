import math

import numpy as np
import pytest

from helmprop import Grid, PhasePoint
from helmprop.geometry import AffineMap

SQRT3_2 = math.sqrt(3) / 2
# The two packets of the collision scene and their common image under a 60 degree rotation.
COLLISION_POINTS = (PhasePoint(-0.25, 0.0), PhasePoint(0.5, -SQRT3_2))
COLLISION_IMAGE = PhasePoint(-0.5, -SQRT3_2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid_1d():
    return Grid.centered(512, 8.0)


@pytest.fixture
def rot10():
    return AffineMap.rotation(10)


@pytest.fixture
def rot60():
    return AffineMap.rotation(60)


def random_invertible(rng, d, well_conditioned=True):
    """Random (1+d)x(1+d) matrix with singular values in [0.5, 2]."""
    while True:
        A = rng.normal(size=(d + 1, d + 1))
        u, _, vt = np.linalg.svd(A)
        s = rng.uniform(0.5, 2.0, d + 1)
        G = u @ np.diag(s) @ vt
        if not well_conditioned or np.linalg.cond(G) < 10:
            return G


def random_ball(rng, n, d, radius=0.9):
    v = rng.normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(size=(n, 1)) ** (1.0 / d)


def egorov_scene(m, width_xi=0.22):
    """Bump symbol on the output side and probes around (0.3, 0.2) for conjugation sweeps.

    The bump sits next to the image of the probe cluster so that ``p o kappa``
    has a sizeable x-gradient at the probes (the order-hbar term is visible).
    """
    from helmprop.symplectic import kappa_affine

    xc, kc = kappa_affine(m, (np.array([0.3]), np.array([0.2])))
    xc, kc = float(xc[0]) + 0.6, float(kc[0]) + 0.05

    def bump(x, xi):
        return np.exp(-((x - xc) ** 2) / 2.0 - ((xi - kc) ** 2) / (2 * width_xi**2))

    probes = [PhasePoint(0.3 + dx, 0.2 + dk) for dx in (-0.25, 0.0, 0.25) for dk in (-0.06, 0.06)]
    return bump, probes


ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


class Criterion:
    """Records one acceptance criterion's verdict and asserts it."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title

    def check(self, passed: bool, detail: str) -> None:
        line = f"criterion {self.number:2d} {'PASS' if passed else 'FAIL'}: {self.title} ({detail})"
        print(line)
        ACCEPTANCE_RESULTS.append((self.number, self.title, bool(passed), detail))
        assert passed, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
