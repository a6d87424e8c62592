"""A small expression language for Lagrangians and constraints.

Expressions are built from the variables ``x``, ``y1 .. yn`` and
``Dy1 .. Dyn`` (``Dyk`` stands for the fractional derivative of ``yk``),
numeric literals, ``alpha`` (replaced by the order when parsing), the
operators ``+ - * / ^`` and the functions ``sqrt sin cos exp ln gamma``.
``gamma`` only accepts arguments that fold to a positive constant.

Evaluation works on scalars or numpy arrays alike, so a whole grid is
evaluated in one pass.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from jumarie.fraccalc import gamma as _gamma

__all__ = [
    "Binary",
    "Const",
    "Environment",
    "EvaluationError",
    "Expression",
    "ExpressionSyntaxError",
    "GammaCall",
    "Unary",
    "Var",
    "diff",
    "evaluate",
    "parse",
    "to_text",
    "variables",
]


class ExpressionSyntaxError(ValueError):
    """Raised for malformed expression text; ``offset`` is a byte offset."""

    def __init__(self, message: str, text: str = "", offset: int = 0) -> None:
        self.text = text
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class EvaluationError(ArithmeticError):
    """Raised when an expression leaves its domain.

    ``offset`` locates the offending AST node in the source text and
    ``index`` is the first array position where it failed (``None`` for
    scalar evaluation).
    """

    def __init__(self, message: str, offset: int = -1, index: int | None = None) -> None:
        self.offset = offset
        self.index = index
        where = f" at byte {offset}" if offset >= 0 else ""
        if index is not None:
            where += f", node {index}"
        super().__init__(message + where)


# {{{ AST

@dataclass(frozen=True)
class Const:
    value: float
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var:
    #: one of ``"x"``, ``"y"``, ``"Dy"``
    kind: str
    #: 1-based variable index; 0 for ``x``
    index: int = 0
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expression"
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class GammaCall:
    arg: "Expression"
    pos: int = field(default=-1, compare=False)


Expression = Union[Const, Var, Unary, Binary, GammaCall]

X = Var("x")


def Y(k: int) -> Var:
    return Var("y", k)


def DY(k: int) -> Var:
    return Var("Dy", k)


UNARY_FUNCTIONS = ("sqrt", "sin", "cos", "exp", "ln")


def children(e: Expression) -> tuple[Expression, ...]:
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, (Unary, GammaCall)):
        return (e.arg,)
    return ()


def walk(e: Expression) -> Iterator[Expression]:
    yield e
    for c in children(e):
        yield from walk(c)


def variables(e: Expression) -> set[Var]:
    return {Var(v.kind, v.index) for v in walk(e) if isinstance(v, Var)}


def contains(e: Expression, var: Var) -> bool:
    return any(
        isinstance(v, Var) and v.kind == var.kind and v.index == var.index for v in walk(e)
    )


def is_constant(e: Expression) -> bool:
    return not any(isinstance(v, Var) for v in walk(e))

# }}}


# {{{ parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(
                f"unexpected character {text[bad]!r}", text, _byte_offset(text, bad)
            )
        kind = m.lastgroup
        start = m.start(kind)
        value = m.group(kind)
        if value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, n_vars: int, alpha: float) -> None:
        self.text = text
        self.n_vars = n_vars
        self.alpha = alpha
        self.tokens = _tokenize(text)
        self.i = 0

    def error(self, message: str, at: int | None = None) -> ExpressionSyntaxError:
        at = self.tokens[self.i][2] if at is None else at
        return ExpressionSyntaxError(message, self.text, _byte_offset(self.text, at))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, tok, _ = self.peek()
        if tok != value or kind == "end":
            found = "end of input" if kind == "end" else repr(tok)
            raise self.error(f"expected {value!r}, found {found}")
        self.take()

    def parse(self) -> Expression:
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        e = self.expr()
        kind, tok, _ = self.peek()
        if kind != "end":
            raise self.error(f"unexpected {tok!r}")
        return e

    def expr(self) -> Expression:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            left = Binary(op, left, self.term(), pos=_byte_offset(self.text, pos))
        return left

    def term(self) -> Expression:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            left = Binary(op, left, self.unary(), pos=_byte_offset(self.text, pos))
        return left

    def unary(self) -> Expression:
        kind, tok, pos = self.peek()
        if kind == "op" and tok in ("-", "+"):
            self.take()
            arg = self.unary()
            return arg if tok == "+" else Unary("neg", arg, pos=_byte_offset(self.text, pos))
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, tok, pos = self.peek()
        if kind == "op" and tok == "^":
            self.take()
            # right associative; the exponent may carry its own sign
            return Binary("^", base, self.unary(), pos=_byte_offset(self.text, pos))
        return base

    def atom(self) -> Expression:
        kind, tok, pos = self.take()
        bpos = _byte_offset(self.text, pos)
        if kind == "num":
            return Const(float(tok), pos=bpos)
        if kind == "op" and tok == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(tok, pos)
            return self.name(tok, pos)
        self.i -= 1
        found = "end of input" if kind == "end" else repr(tok)
        raise self.error(f"unexpected {found}")

    def call(self, name: str, pos: int) -> Expression:
        bpos = _byte_offset(self.text, pos)
        self.expect("(")
        arg = self.expr()
        self.expect(")")
        if name == "log":
            name = "ln"
        if name in UNARY_FUNCTIONS:
            return Unary(name, arg, pos=bpos)
        if name == "gamma":
            if not is_constant(arg):
                raise self.error("gamma() needs a constant argument", pos)
            value = evaluate(arg, Environment(0.0, [], []))
            if not value > 0:
                raise self.error(f"gamma() argument must be positive, got {value!r}", pos)
            return GammaCall(arg, pos=bpos)
        raise self.error(f"unknown function {name!r}", pos)

    def name(self, name: str, pos: int) -> Expression:
        bpos = _byte_offset(self.text, pos)
        if name == "x":
            return Var("x", 0, pos=bpos)
        if name == "alpha":
            return Const(self.alpha, pos=bpos)
        if name == "pi":
            return Const(math.pi, pos=bpos)
        m = re.fullmatch(r"(Dy|y)(\d*)", name)
        if m is None:
            raise self.error(f"unknown identifier {name!r}", pos)
        kind, digits = m.groups()
        if digits == "":
            if self.n_vars != 1:
                raise self.error(f"{name!r} is only allowed with one dependent variable", pos)
            index = 1
        else:
            index = int(digits)
        if not (1 <= index <= self.n_vars):
            raise self.error(
                f"variable {name!r} out of range for {self.n_vars} dependent variable(s)", pos
            )
        return Var(kind, index, pos=bpos)


def parse(text: str, n_vars: int = 1, alpha: float = 0.5) -> Expression:
    """Parse ``text`` into an expression over ``n_vars`` dependent variables."""
    if n_vars < 1:
        raise ValueError("n_vars must be positive")
    return _Parser(text, n_vars, float(alpha)).parse()

# }}}


# {{{ evaluation

@dataclass(frozen=True)
class Environment:
    x: float | np.ndarray
    y: Sequence[float | np.ndarray]
    Dy: Sequence[float | np.ndarray]

    def __post_init__(self) -> None:
        if len(self.y) != len(self.Dy):
            raise ValueError("y and Dy must have the same number of variables")


def _check(value, node: Expression, what: str):
    arr = np.asarray(value)
    finite = np.isfinite(arr)
    if not np.all(finite):
        index = None if arr.ndim == 0 else int(np.flatnonzero(~finite.ravel())[0])
        raise EvaluationError(what, getattr(node, "pos", -1), index)
    return value


def _first(mask) -> int | None:
    mask = np.asarray(mask)
    return None if mask.ndim == 0 else int(np.flatnonzero(mask.ravel())[0])


def evaluate(e: Expression, env: Environment):
    """Evaluate ``e``; arrays in ``env`` are broadcast elementwise."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.kind == "x":
            return env.x
        values = env.y if e.kind == "y" else env.Dy
        if not (1 <= e.index <= len(values)):
            raise EvaluationError(f"variable {e.kind}{e.index} is not bound", e.pos)
        return values[e.index - 1]
    if isinstance(e, GammaCall):
        return _gamma(evaluate(e.arg, env))
    if isinstance(e, Unary):
        a = evaluate(e.arg, env)
        if e.op == "neg":
            return -a
        if e.op == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise EvaluationError("sqrt of a negative number", e.pos, _first(np.asarray(a) < 0))
            return np.sqrt(a)
        if e.op == "ln":
            if np.any(np.asarray(a) <= 0):
                raise EvaluationError("ln of a nonpositive number", e.pos, _first(np.asarray(a) <= 0))
            return np.log(a)
        with np.errstate(all="ignore"):
            out = {"sin": np.sin, "cos": np.cos, "exp": np.exp}[e.op](a)
        return _check(out, e, f"{e.op} overflowed")
    if isinstance(e, Binary):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvaluationError("division by zero", e.pos, _first(np.asarray(b) == 0))
            return a / b
        if e.op == "^":
            with np.errstate(all="ignore"):
                out = np.power(np.asarray(a, dtype=float), b)
            out = _check(out, e, "power outside its domain")
            return float(out) if np.ndim(out) == 0 else out
    raise TypeError(f"not an expression node: {e!r}")

# }}}


# {{{ symbolic differentiation

def _c(e: Expression) -> float | None:
    return e.value if isinstance(e, Const) else None


def add(a: Expression, b: Expression) -> Expression:
    if _c(a) is not None and _c(b) is not None:
        return Const(a.value + b.value)
    if _c(a) == 0.0:
        return b
    if _c(b) == 0.0:
        return a
    return Binary("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if _c(a) is not None and _c(b) is not None:
        return Const(a.value - b.value)
    if _c(b) == 0.0:
        return a
    if _c(a) == 0.0:
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if _c(a) is not None and _c(b) is not None:
        return Const(a.value * b.value)
    if _c(a) == 0.0 or _c(b) == 0.0:
        return Const(0.0)
    if _c(a) == 1.0:
        return b
    if _c(b) == 1.0:
        return a
    return Binary("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _c(a) is not None and _c(b) not in (None, 0.0):
        return Const(a.value / b.value)
    if _c(a) == 0.0:
        return Const(0.0)
    if _c(b) == 1.0:
        return a
    return Binary("/", a, b)


def power(a: Expression, b: Expression) -> Expression:
    if _c(b) == 0.0:
        return Const(1.0)
    if _c(b) == 1.0:
        return a
    return Binary("^", a, b)


def neg(a: Expression) -> Expression:
    if _c(a) is not None:
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def diff(e: Expression, var: Var) -> Expression:
    """Partial derivative of ``e`` with respect to ``var``, constant folded."""
    var = Var(var.kind, var.index)
    if not contains(e, var):
        return Const(0.0)
    return _diff(e, var)


def _diff(e: Expression, v: Var) -> Expression:
    if not contains(e, v):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, Unary):
        u = e.arg
        du = _diff(u, v)
        if e.op == "neg":
            return neg(du)
        if e.op == "sqrt":
            return div(du, mul(Const(2.0), e))
        if e.op == "sin":
            return mul(Unary("cos", u), du)
        if e.op == "cos":
            return neg(mul(Unary("sin", u), du))
        if e.op == "exp":
            return mul(e, du)
        if e.op == "ln":
            return div(du, u)
    if isinstance(e, Binary):
        a, b = e.left, e.right
        if e.op == "+":
            return add(_diff(a, v), _diff(b, v))
        if e.op == "-":
            return sub(_diff(a, v), _diff(b, v))
        if e.op == "*":
            return add(mul(_diff(a, v), b), mul(a, _diff(b, v)))
        if e.op == "/":
            return div(sub(mul(_diff(a, v), b), mul(a, _diff(b, v))), power(b, Const(2.0)))
        if e.op == "^":
            if not contains(b, v):
                # d(a^b) = b a^(b-1) da
                return mul(mul(b, power(a, sub(b, Const(1.0)))), _diff(a, v))
            if not contains(a, v):
                return mul(mul(e, Unary("ln", a)), _diff(b, v))
            return mul(
                e, add(mul(_diff(b, v), Unary("ln", a)), div(mul(b, _diff(a, v)), a))
            )
    raise TypeError(f"cannot differentiate {e!r}")

# }}}


# {{{ printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM = 5


def _prec(e: Expression) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC["neg"]
    return _ATOM


def to_text(e: Expression) -> str:
    """Render ``e`` so that :func:`parse` rebuilds an equivalent tree."""
    if isinstance(e, Const):
        if not math.isfinite(e.value):
            raise ValueError(f"cannot print non-finite constant {e.value!r}")
        text = repr(float(abs(e.value)))
        return f"-{text}" if math.copysign(1.0, e.value) < 0 else text
    if isinstance(e, Var):
        return "x" if e.kind == "x" else f"{e.kind}{e.index}"
    if isinstance(e, GammaCall):
        return f"gamma({to_text(e.arg)})"
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_text(e.arg)
            return f"-({inner})" if _prec(e.arg) <= _PREC["neg"] else f"-{inner}"
        return f"{e.op}({to_text(e.arg)})"

    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        # keep both operands atomic, which also keeps the tree shape exact
        if _prec(e.left) < _ATOM:
            left = f"({left})"
        if _prec(e.right) < _ATOM:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        # parenthesize equal precedence on the right so float association is kept
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}"

# }}}
