"""Scalar expressions in the variables ``s``, ``v`` and ``w``.

``w`` stands for the self-composed value ``v(v(s))``; the solver decides how
that value is computed, so expressions never spell out a composition.

Grammar (whitespace is insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

so ``^`` binds tightest and is right-associative, ``-2^2 == -4`` and
``2^-1 == 0.5``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import FihdeError

VARIABLES = ("s", "v", "w")

_UNARY_FUNCS = {
    "sin": (math.sin, np.sin),
    "cos": (math.cos, np.cos),
    "exp": (math.exp, np.exp),
    "log": (math.log, np.log),
    "sqrt": (math.sqrt, np.sqrt),
    "abs": (abs, np.abs),
    "tanh": (math.tanh, np.tanh),
}
_VARIADIC_FUNCS = {"min": (min, np.minimum), "max": (max, np.maximum)}
FUNCTIONS = tuple(sorted(_UNARY_FUNCS) + sorted(_VARIADIC_FUNCS))


class ExprError(FihdeError, ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, text: str, offset: int, expected: str, found: str):
        self.text = text
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(f"syntax error at offset {offset}: expected {expected}, found {found}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class EvalError(ExprError, ArithmeticError):
    """Domain fault while evaluating; ``node`` is the failing subexpression."""

    def __init__(self, node: "Expr", reason: str):
        self.node = node
        self.reason = reason
        super().__init__(f"{reason} in {to_text(node)!r}")


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


# -- tokenizer / parser --------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


@dataclass
class _Tok:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(text: str):
    toks = []
    pos = 0
    byte_pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None:
            rest = text[pos:]
            stripped = rest.lstrip()
            lead = len(rest) - len(stripped)
            at = byte_pos + len(rest[:lead].encode())
            if not stripped:
                toks.append(_Tok("end", "", at))
                return toks
            raise ExprSyntaxError(text, at, "a number, name, operator or parenthesis", repr(stripped[0]))
        kind = m.lastgroup
        start = m.start(kind)
        offset = byte_pos + len(text[pos:start].encode())
        toks.append(_Tok(kind, m.group(kind), offset))
        byte_pos += len(text[pos:m.end()].encode())
        pos = m.end()


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, expected: str):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(self.text, t.offset, expected, found)

    def _accept(self, op: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == op:
            self.i += 1
            return True
        return False

    def _expect(self, op: str):
        if not self._accept(op):
            self._fail(repr(op))

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail("an operator or end of input")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "name":
            self.i += 1
            if t.text in VARIABLES:
                return Var(t.text)
            if t.text in _UNARY_FUNCS or t.text in _VARIADIC_FUNCS:
                self._expect("(")
                args = [self.expr()]
                while self._accept(","):
                    args.append(self.expr())
                self._expect(")")
                if t.text in _UNARY_FUNCS and len(args) != 1:
                    raise ExprSyntaxError(self.text, t.offset, f"1 argument to {t.text}", f"{len(args)}")
                if t.text in _VARIADIC_FUNCS and len(args) < 2:
                    raise ExprSyntaxError(self.text, t.offset, f"at least 2 arguments to {t.text}", "1")
                return Call(t.text, tuple(args))
            raise UnknownIdentifierError(t.text, t.offset)
        if self._accept("("):
            node = self.expr()
            self._expect(")")
            return node
        self._fail("a number, variable, function call or '('")


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


# -- printing ------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def _fmt_num(x: float) -> str:
    if x < 0 or not math.isfinite(x):
        raise ExprError(f"cannot print literal {x!r}")
    text = repr(x)
    return text[:-2] if text.endswith(".0") else text


def to_text(node: Expr) -> str:
    """Render with the fewest parentheses that re-parse to the same tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        if _prec(node.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}" if p == 1 else f"{left}*{right}" if node.op == "*" else f"{left}/{right}"


def variables(node: Expr) -> frozenset:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        return frozenset().union(*(variables(a) for a in node.args))
    return frozenset()


# -- evaluation ----------------------------------------------------------------


def _scalar(node: Expr, env: dict) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_scalar(node.operand, env)
    if isinstance(node, BinOp):
        a = _scalar(node.left, env)
        b = _scalar(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise EvalError(node, "division by zero")
            return a / b
        try:
            r = a**b
        except ZeroDivisionError:
            raise EvalError(node, "zero raised to a negative power") from None
        except OverflowError:
            return math.inf if a > 0 or float(b).is_integer() and b % 2 == 0 else -math.inf
        if isinstance(r, complex):
            raise EvalError(node, "negative base with non-integer exponent")
        return r
    args = [_scalar(a, env) for a in node.args]
    name = node.func
    if name in _VARIADIC_FUNCS:
        return float(_VARIADIC_FUNCS[name][0](args))
    x = args[0]
    if name == "log" and x <= 0:
        raise EvalError(node, "log of non-positive value")
    if name == "sqrt" and x < 0:
        raise EvalError(node, "sqrt of negative value")
    if name == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    try:
        return float(_UNARY_FUNCS[name][0](x))
    except ValueError:
        raise EvalError(node, f"{name} undefined at {x!r}") from None


def _array(node: Expr, env: dict) -> np.ndarray:
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_array(node.operand, env)
    if isinstance(node, BinOp):
        a = _array(node.left, env)
        b = _array(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(b == 0):
                raise EvalError(node, "division by zero")
            return a / b
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = np.power(a, b)
        if np.any((a == 0) & (b < 0)):
            raise EvalError(node, "zero raised to a negative power")
        if np.any(np.isnan(r) & ~np.isnan(a) & ~np.isnan(b)):
            raise EvalError(node, "negative base with non-integer exponent")
        return r
    args = [_array(a, env) for a in node.args]
    name = node.func
    if name in _VARIADIC_FUNCS:
        fn = _VARIADIC_FUNCS[name][1]
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out
    x = args[0]
    if name == "log" and np.any(x <= 0):
        raise EvalError(node, "log of non-positive value")
    if name == "sqrt" and np.any(x < 0):
        raise EvalError(node, "sqrt of negative value")
    with np.errstate(over="ignore", invalid="ignore"):
        r = _UNARY_FUNCS[name][1](x)
    if np.any(np.isnan(r) & ~np.isnan(x)):
        raise EvalError(node, f"{name} undefined")
    return r


def evaluate(node: Expr, s, v, w):
    """Evaluate ``node`` at ``(s, v, w)``.

    Plain floats go through the :mod:`math` path and return a float; any
    array argument switches to elementwise numpy evaluation and the result is
    broadcast to the common shape.
    """
    if all(isinstance(x, (int, float)) for x in (s, v, w)):
        return float(_scalar(node, {"s": float(s), "v": float(v), "w": float(w)}))
    s_, v_, w_ = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (s, v, w)))
    out = _array(node, {"s": s_, "v": v_, "w": w_})
    return np.broadcast_to(np.asarray(out, dtype=float), s_.shape).copy()


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with its source text."""

    text: str
    tree: Expr

    @classmethod
    def parse(cls, text: str) -> "Expression":
        return cls(text, parse(text))

    def __call__(self, s, v, w):
        return evaluate(self.tree, s, v, w)

    def __str__(self) -> str:
        return to_text(self.tree)

    @property
    def is_constant(self) -> bool:
        return not variables(self.tree)
