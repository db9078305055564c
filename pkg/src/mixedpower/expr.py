"""Small arithmetic expression language for config files.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names: ``x``, ``y``, ``t``, ``pi``, ``e``.  Functions: ``sin``, ``cos``,
``exp``, ``abs``.  ``×``, ``÷`` and ``−`` are accepted as operator aliases.
"""
from __future__ import annotations

import operator
import re
from typing import Callable

import numpy as np

__all__ = ["ExprError", "Expression", "parse"]


class ExprError(ValueError):
    pass


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_CONSTS = {"pi": np.float64(np.pi), "e": np.float64(np.e)}
_VARS = ("x", "y", "t")
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")
_BINOPS = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}
_ALIAS = {"×": "*", "÷": "/", "−": "-", "**": "^"}


def _tokenize(text: str) -> list[tuple[str, str]]:
    text = text.replace("**", "^")
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        pos = m.end()
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("name", name))
        elif op is not None and not op.isspace():
            op = _ALIAS.get(op, op)
            if op not in "+-*/^()":
                raise ExprError(f"unexpected character {op!r}")
            out.append(("op", op))
    out.append(("end", ""))
    return out


def _binary(fn, left, right):
    return lambda v: fn(left(v), right(v))


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str) -> None:
        kind, val = self.take()
        if (kind, val) != ("op", op):
            raise ExprError(f"expected {op!r}, found {val or 'end of input'!r}")

    def parse(self) -> Callable:
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExprError(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = _binary(_BINOPS[op], node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = _binary(_BINOPS[op], node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            inner = self.unary()
            return lambda v: -inner(v)
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            ex = self.unary()
            return lambda v: np.power(base(v), ex(v))
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            c = np.float64(val)
            return lambda v: c
        if kind == "name":
            if val in _FUNCS:
                fn = _FUNCS[val]
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return lambda v: fn(arg(v))
            if val in _CONSTS:
                c = _CONSTS[val]
                return lambda v: c
            if val in _VARS:
                return lambda v: v[val]
            raise ExprError(f"unknown name {val!r}")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise ExprError(f"unexpected {val or 'end of input'!r}")


class Expression:
    """Parsed expression; call with arrays (or scalars) ``x``, ``y``, ``t``."""

    def __init__(self, text: str) -> None:
        self.text = text
        self._fn = _Parser(text).parse()

    def __call__(self, x, y, t=0.0) -> np.ndarray:
        with np.errstate(all="ignore"):
            out = self._fn({"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float),
                            "t": np.asarray(t, dtype=float)})
        out = np.broadcast_to(np.asarray(out, dtype=float),
                              np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(t)))
        if not np.all(np.isfinite(out)):
            raise ExprError(f"expression {self.text!r} is not finite on the grid")
        return out

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"


def parse(text: str) -> Expression:
    return Expression(text)
