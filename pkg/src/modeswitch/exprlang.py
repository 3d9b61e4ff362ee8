"""Tiny arithmetic expression language for model coefficient functions.

Drift, volatility, profit and switching-cost functions are all written as
one-variable expressions in this language, e.g. ``"0.5*x^2 - 0.3*x + 1"`` or
``"0.5*|x| + 0.1"``.

Grammar (precedence from loosest to tightest binding)::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := '-' factor | power
    power  := atom ('^' INTEGER)*
    atom   := NUMBER | 'x' | '(' expr ')' | '|' expr '|'

There is deliberately no division, no exp/log and no non-integer power:
every expression is polynomial in (x, |x|).  That keeps evaluation total on
the whole real line and makes the growth exponent of an expression a purely
syntactic quantity (see :func:`growth_degree`).  Numbers are decimal
literals with an optional fraction and an optional exponent part
(``"1.5e-3"`` is accepted).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Abs",
    "Pow",
    "Add",
    "Sub",
    "Mul",
    "Neg",
    "ParseError",
    "parse",
    "evaluate",
    "growth_degree",
    "to_source",
]


class ParseError(ValueError):
    """Syntax error carrying the byte offset of the offending character."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Abs:
    child: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 0:
            raise ValueError("pow exponent must be a non-negative integer")


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    child: "Expr"


Expr = Union[Const, Var, Abs, Pow, Add, Sub, Mul, Neg]

# ---------------------------------------------------------------------------
# lexer

_DIGITS = "0123456789"


def _tokenize(text: str):
    """Yield (kind, value, offset) triples.  kinds: num, x, op, end."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c in _DIGITS:
            j = i
            while j < n and text[j] in _DIGITS:
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j] in _DIGITS:
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k] in _DIGITS:
                    j = k
                    while j < n and text[j] in _DIGITS:
                        j += 1
            tokens.append(("num", text[i:j], i))
            i = j
            continue
        if c == "x":
            tokens.append(("x", c, i))
            i += 1
            continue
        if c in "+-*^()|":
            tokens.append(("op", c, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, value, offset = self.peek()
        if kind != "op" or value != op:
            raise ParseError(f"expected {op!r}", offset)
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {value!r}", offset)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if value == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "*":
                self.advance()
                node = Mul(node, self.factor())
            else:
                return node

    def factor(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        node = self.atom()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "^":
                self.advance()
                node = Pow(node, self.exponent_literal())
            else:
                return node

    def exponent_literal(self) -> int:
        kind, value, offset = self.peek()
        if kind == "op" and value == "-":
            raise ParseError("negative exponent not allowed", offset)
        if kind != "num":
            raise ParseError("expected integer exponent", offset)
        if any(c in value for c in ".eE"):
            raise ParseError("exponent must be a non-negative integer", offset)
        self.advance()
        return int(value)

    def atom(self) -> Expr:
        kind, value, offset = self.peek()
        if kind == "num":
            self.advance()
            return Const(float(value))
        if kind == "x":
            self.advance()
            return Var()
        if kind == "op" and value == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and value == "|":
            self.advance()
            node = self.expr()
            self.expect_op("|")
            return Abs(node)
        raise ParseError(f"expected a number, 'x', '(' or '|', got {value!r}", offset)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ParseError` (with byte offset) on malformed input,
    including non-integer or negative powers.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# evaluation and analysis

def evaluate(node: Expr, x):
    """Evaluate the tree at ``x`` (a float or a numpy array).

    Total for every finite input: the grammar admits only +, -, *, abs and
    integer powers, so no operation can fault.  Scalar inputs are coerced
    to IEEE doubles (overflow saturates to inf instead of raising, which
    plain Python floats would do under ``**``).
    """
    if isinstance(x, (int, float)):
        x = np.float64(x)
    return _evaluate(node, x)


def _evaluate(node: Expr, x):
    if isinstance(node, Const):
        return node.value if not hasattr(x, "shape") else node.value + 0.0 * x
    if isinstance(node, Var):
        return x
    if isinstance(node, Abs):
        return abs(_evaluate(node.child, x))
    if isinstance(node, Pow):
        return _evaluate(node.base, x) ** node.exponent
    if isinstance(node, Add):
        return _evaluate(node.left, x) + _evaluate(node.right, x)
    if isinstance(node, Sub):
        return _evaluate(node.left, x) - _evaluate(node.right, x)
    if isinstance(node, Mul):
        return _evaluate(node.left, x) * _evaluate(node.right, x)
    if isinstance(node, Neg):
        return -_evaluate(node.child, x)
    raise TypeError(f"not an expression node: {node!r}")


def growth_degree(node: Expr) -> int:
    """Syntactic total degree of the expression in x.

    |x| counts as degree 1, products add degrees, sums take the max.  The
    result upper-bounds the true asymptotic degree, so ``|f(x)| <=
    C * (1 + |x|**growth_degree(f))`` for a suitable constant C.
    """
    if isinstance(node, Const):
        return 0
    if isinstance(node, Var):
        return 1
    if isinstance(node, (Abs, Neg)):
        return growth_degree(node.child)
    if isinstance(node, Pow):
        return node.exponent * growth_degree(node.base)
    if isinstance(node, (Add, Sub)):
        return max(growth_degree(node.left), growth_degree(node.right))
    if isinstance(node, Mul):
        return growth_degree(node.left) + growth_degree(node.right)
    raise TypeError(f"not an expression node: {node!r}")


def _atomic(node: Expr) -> bool:
    return isinstance(node, (Var, Abs)) or (isinstance(node, Const) and node.value >= 0)


def to_source(node: Expr) -> str:
    """Render the tree back to parseable source.

    Round-trip contract: ``evaluate(parse(to_source(t)), x) == evaluate(t, x)``
    for every finite x (exact float equality; tree shape may differ, e.g.
    negative constants print through unary minus).
    """
    if isinstance(node, Const):
        if node.value < 0:
            return f"-{_fmt_number(-node.value)}"
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Abs):
        return f"|{to_source(node.child)}|"
    if isinstance(node, Pow):
        base = to_source(node.base)
        if not _atomic(node.base):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Add):
        return f"{to_source(node.left)} + {_wrap_additive(node.right)}"
    if isinstance(node, Sub):
        return f"{to_source(node.left)} - {_wrap_additive(node.right)}"
    if isinstance(node, Mul):
        return f"{_wrap_term(node.left)}*{_wrap_term(node.right)}"
    if isinstance(node, Neg):
        child = to_source(node.child)
        if isinstance(node.child, (Add, Sub)):
            child = f"({child})"
        return f"-{child}"
    raise TypeError(f"not an expression node: {node!r}")


def _fmt_number(v: float) -> str:
    # repr gives the shortest decimal that round-trips the double
    s = repr(float(v))
    return s


def _wrap_additive(node: Expr) -> str:
    s = to_source(node)
    if isinstance(node, (Add, Sub)) or s.startswith("-"):
        return f"({s})"
    return s


def _wrap_term(node: Expr) -> str:
    s = to_source(node)
    if isinstance(node, (Add, Sub)):
        return f"({s})"
    return s
