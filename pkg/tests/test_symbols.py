import doctest
import math

import numpy as np
import pytest

import helmprop.symbols
from helmprop.errors import UsageError
from helmprop.symbols import parse_symbol, tokenize


def test_doctest():
    assert doctest.testmod(helmprop.symbols).failed == 0


@pytest.mark.parametrize(
    "text, x, xi, expected",
    [
        ("1 + 2 * 3", 0.0, 0.0, 7.0),
        ("(1 + 2) * 3", 0.0, 0.0, 9.0),
        ("x - xi / 2", 1.0, 4.0, -1.0),
        ("-x * -xi", 2.0, 3.0, 6.0),
        ("exp(x) * cos(xi) + sin(pi / 2)", 0.5, 0.3, math.exp(0.5) * math.cos(0.3) + 1.0),
        ("1e-1 * .5", 0.0, 0.0, 0.05),
        ("gaussian(0.1, 0.2, 0.5)", 0.6, 0.2, math.exp(-0.5)),
        ("gaussian(0, 0, 1, 0.5)", 0.0, 0.5, math.exp(-0.5)),
    ],
)
def test_evaluation(text, x, xi, expected):
    assert complex(parse_symbol(text)(x, xi)).real == pytest.approx(expected, rel=1e-14)


def test_broadcasting():
    x, xi = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(0, 1, 3), indexing="ij")
    out = parse_symbol("x * xi")(x, xi)
    assert out.shape == (5, 3) and out.dtype == np.complex128
    assert np.array_equal(out.real, x * xi)
    assert parse_symbol("2")(x, xi).shape == (5, 3)


def test_tokens_carry_positions():
    assert tokenize("x + 12.5") == [("name", "x", 0), ("op", "+", 2), ("num", "12.5", 4)]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("x $ 2", "position 2"),
        ("x + ", "end of input"),
        ("(x + 1", "expected ')'"),
        ("foo(x)", "unknown name 'foo' at position 0"),
        ("exp(x, xi)", "exp takes 1 arguments"),
        ("gaussian(0, 0)", "gaussian takes 3 to 4 arguments"),
        ("x xi", "unexpected 'xi' at position 2"),
    ],
)
def test_errors_name_the_position(text, fragment):
    with pytest.raises(UsageError) as err:
        parse_symbol(text)
    assert fragment in str(err.value)
