"""Text expressions for phase-space symbols.

Expressions are built from ``x``, ``xi``, ``pi``, numbers, ``+ - * /``,
parentheses and the functions ``exp``, ``cos``, ``sin`` and
``gaussian(x0, xi0, w[, w_xi])``. The Gaussian is
``exp(-(x - x0)^2 / (2 w^2) - (xi - xi0)^2 / (2 w_xi^2))`` with
``w_xi = w`` when omitted. See ``docs/symbol_grammar.md``.

>>> p = parse_symbol("gaussian(0, 0.2, 0.5) * (1 + x)")
>>> float(p(0.0, 0.2).real)
1.0
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UsageError

__all__ = ["Symbol", "parse_symbol", "tokenize"]

log = logging.getLogger(__name__)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),]))"
)

_FUNCS = {
    "exp": (1, 1, lambda a: np.exp(a[0])),
    "cos": (1, 1, lambda a: np.cos(a[0])),
    "sin": (1, 1, lambda a: np.sin(a[0])),
}


def tokenize(text: str) -> list[tuple[str, str, int]]:
    """Split into ``(kind, text, position)`` tokens."""
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = len(text) - len(text[pos:].lstrip())
            raise UsageError(f"unexpected character {text[bad]!r} at position {bad}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "", len(self.text))

    def take(self, expected: str | None = None):
        tok = self.peek()
        if expected is not None and tok[1] != expected:
            where = "end of input" if tok[0] == "end" else repr(tok[1])
            raise UsageError(f"expected {expected!r} at position {tok[2]}, found {where}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise UsageError(f"unexpected {tok[1]!r} at position {tok[2]}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = (op, node, self.factor())
        return node

    def factor(self):
        tok = self.peek()
        if tok[1] in ("+", "-"):
            self.take()
            inner = self.factor()
            return ("neg", inner) if tok[1] == "-" else inner
        return self.atom()

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return ("num", float(text))
        if kind == "name":
            if text in ("x", "xi"):
                return ("var", text)
            if text == "pi":
                return ("num", math.pi)
            if text in _FUNCS or text == "gaussian":
                self.take("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                lo, hi = (3, 4) if text == "gaussian" else _FUNCS[text][:2]
                if not lo <= len(args) <= hi:
                    raise UsageError(f"{text} takes {lo if lo == hi else f'{lo} to {hi}'} arguments, got {len(args)}")
                return ("call", text, args)
            raise UsageError(f"unknown name {text!r} at position {pos}")
        if text == "(":
            node = self.expr()
            self.take(")")
            return node
        where = "end of input" if kind == "end" else repr(text)
        raise UsageError(f"unexpected {where} at position {pos}")


def _eval(node, x, xi):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return x if node[1] == "x" else xi
    if tag == "neg":
        return -_eval(node[1], x, xi)
    if tag == "call":
        args = [_eval(a, x, xi) for a in node[2]]
        if node[1] == "gaussian":
            x0, k0, w = args[:3]
            wk = args[3] if len(args) == 4 else w
            return np.exp(-((x - x0) ** 2) / (2 * w * w) - ((xi - k0) ** 2) / (2 * wk * wk))
        return _FUNCS[node[1]][2](args)
    a = _eval(node[1], x, xi)
    b = _eval(node[2], x, xi)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    return a / b


@dataclass(frozen=True)
class Symbol:
    """A parsed symbol; call it as ``p(x, xi)`` with broadcasting arrays."""

    text: str
    tree: tuple

    def __call__(self, x, xi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _eval(self.tree, x, xi)
        return np.asarray(out, dtype=np.complex128) * np.ones(np.broadcast(x, xi).shape)

    def as_function(self) -> Callable:
        return self.__call__


def parse_symbol(text: str) -> Symbol:
    """Parse an expression; raises :class:`UsageError` with the offending position."""
    if not text or not text.strip():
        raise UsageError("empty symbol expression")
    tree = _Parser(text).parse()
    log.debug("parsed symbol %s", text)
    return Symbol(text.strip(), tree)
