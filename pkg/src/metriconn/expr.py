"""Symbolic scalar expressions in the two chart variables ``x`` and ``y``.

Grammar accepted by :func:`parse` (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' base)?
    base   := number | 'x' | 'y' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')' | '-' base
    func   in {sin, cos, tan, exp, ln, sqrt, sinh, cosh}

Numbers are decimals with an optional exponent (``1.5e-3``).  ``pi`` and
``e`` are reserved constants.  The exponent of ``^`` must reduce to a
constant at parse time, so every derivative stays inside the grammar.

Expressions are immutable trees.  Simplification is deliberately limited to
constant folding, absorption of additive zeros and multiplicative
zeros/ones, and removal of double negation; the folded tree evaluates to the
same value as the unfolded one wherever both are defined.  Derivatives are
cached per node, so repeated differentiation builds a shared DAG rather
than an exponentially growing tree.
"""

from __future__ import annotations

import math
import re

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "ParseError", "DomainError",
    "parse", "evaluate", "differentiate", "to_source",
    "const", "var", "sin", "cos", "tan", "exp", "ln", "sqrt", "sinh", "cosh",
    "X", "Y", "ZERO", "ONE",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "sinh", "cosh")


class ParseError(ValueError):
    """Malformed expression text; ``offset`` is a byte offset into the input."""

    def __init__(self, offset: int, message: str, token: str = ""):
        detail = f"{message} at offset {offset}"
        if token:
            detail += f" (near {token!r})"
        super().__init__(detail)
        self.offset = offset
        self.message = message
        self.token = token


class DomainError(ArithmeticError):
    """Evaluation hit a point outside the expression's domain.

    Carries the offending point, the failing node, and the reason
    (division by zero, ln of a non-positive value, sqrt of a negative
    value, power of a non-positive base, overflow).
    """

    def __init__(self, x: float, y: float, node: "Expr", reason: str):
        super().__init__(f"{reason} at ({x:.6g}, {y:.6g}) while evaluating {node}")
        self.point = (x, y)
        self.node = node
        self.reason = reason


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class for expression nodes.  Instances are immutable and pure."""

    __slots__ = ("_dcache",)

    # evaluation -----------------------------------------------------------

    def eval(self, x: float, y: float) -> float:
        """Evaluate at a point; raises :class:`DomainError` out of domain."""
        raise NotImplementedError

    def eval_grid(self, xs, ys, memo=None):
        """Vectorised evaluation on numpy arrays, without domain checks.

        Out-of-domain points surface as non-finite entries; callers needing a
        located error fall back to :meth:`eval` at the offending point.  A
        shared ``memo`` dict makes common subtrees evaluate once.
        """
        if memo is None:
            memo = {}
        key = id(self)
        hit = memo.get(key)
        if hit is None:
            hit = self._grid(xs, ys, memo)
            memo[key] = hit
        return hit

    def _grid(self, xs, ys, memo):
        raise NotImplementedError

    # differentiation ------------------------------------------------------

    def diff(self, variable: str) -> "Expr":
        """Exact derivative with respect to ``'x'`` or ``'y'``."""
        if variable not in ("x", "y"):
            raise ValueError(f"unknown variable {variable!r}")
        try:
            cache = self._dcache
        except AttributeError:
            cache = {}
            self._dcache = cache
        hit = cache.get(variable)
        if hit is None:
            hit = self._diff(variable)
            cache[variable] = hit
        return hit

    def _diff(self, variable: str) -> "Expr":
        raise NotImplementedError

    # operator sugar -------------------------------------------------------

    def __add__(self, other):
        return _add(self, _wrap(other))

    def __radd__(self, other):
        return _add(_wrap(other), self)

    def __sub__(self, other):
        return _sub(self, _wrap(other))

    def __rsub__(self, other):
        return _sub(_wrap(other), self)

    def __mul__(self, other):
        return _mul(self, _wrap(other))

    def __rmul__(self, other):
        return _mul(_wrap(other), self)

    def __truediv__(self, other):
        return _div(self, _wrap(other))

    def __rtruediv__(self, other):
        return _div(_wrap(other), self)

    def __pow__(self, exponent):
        return _pow(self, exponent)

    def __neg__(self):
        return _neg(self)

    def __str__(self):
        return to_source(self)

    def __repr__(self):
        return f"<{type(self).__name__} {to_source(self)!r}>"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def eval(self, x, y):
        return self.value

    def _grid(self, xs, ys, memo):
        return self.value

    def _diff(self, variable):
        return ZERO


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if name not in ("x", "y"):
            raise ValueError(f"variable must be 'x' or 'y', got {name!r}")
        self.name = name

    def eval(self, x, y):
        return x if self.name == "x" else y

    def _grid(self, xs, ys, memo):
        return xs if self.name == "x" else ys

    def _diff(self, variable):
        return ONE if variable == self.name else ZERO


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg

    def eval(self, x, y):
        return -self.arg.eval(x, y)

    def _grid(self, xs, ys, memo):
        return -self.arg.eval_grid(xs, ys, memo)

    def _diff(self, variable):
        return _neg(self.arg.diff(variable))


class Add(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def eval(self, x, y):
        return self.left.eval(x, y) + self.right.eval(x, y)

    def _grid(self, xs, ys, memo):
        return self.left.eval_grid(xs, ys, memo) + self.right.eval_grid(xs, ys, memo)

    def _diff(self, variable):
        return _add(self.left.diff(variable), self.right.diff(variable))


class Sub(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def eval(self, x, y):
        return self.left.eval(x, y) - self.right.eval(x, y)

    def _grid(self, xs, ys, memo):
        return self.left.eval_grid(xs, ys, memo) - self.right.eval_grid(xs, ys, memo)

    def _diff(self, variable):
        return _sub(self.left.diff(variable), self.right.diff(variable))


class Mul(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def eval(self, x, y):
        return self.left.eval(x, y) * self.right.eval(x, y)

    def _grid(self, xs, ys, memo):
        return self.left.eval_grid(xs, ys, memo) * self.right.eval_grid(xs, ys, memo)

    def _diff(self, variable):
        return _add(
            _mul(self.left.diff(variable), self.right),
            _mul(self.left, self.right.diff(variable)),
        )


class Div(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def eval(self, x, y):
        den = self.right.eval(x, y)
        if den == 0.0:
            raise DomainError(x, y, self, "division by zero")
        return self.left.eval(x, y) / den

    def _grid(self, xs, ys, memo):
        return self.left.eval_grid(xs, ys, memo) / self.right.eval_grid(xs, ys, memo)

    def _diff(self, variable):
        # (l/r)' = l'/r - l*r'/r^2, assembled to share the quotient node
        return _div(
            _sub(
                _mul(self.left.diff(variable), self.right),
                _mul(self.left, self.right.diff(variable)),
            ),
            _mul(self.right, self.right),
        )


class Pow(Expr):
    """``base ^ exponent`` with a constant real exponent.

    Integer exponents act on any base; non-integer exponents require a
    positive base (evaluated as ``exp(exponent * ln(base))``).
    """

    __slots__ = ("base", "exponent", "_int_exponent")

    def __init__(self, base: Expr, exponent: float):
        self.base = base
        self.exponent = float(exponent)
        self._int_exponent = (
            int(self.exponent)
            if self.exponent.is_integer() and abs(self.exponent) < 2**31
            else None
        )

    def eval(self, x, y):
        b = self.base.eval(x, y)
        n = self._int_exponent
        if n is not None:
            if b == 0.0 and n < 0:
                raise DomainError(x, y, self, "zero base with negative exponent")
            try:
                return b ** n
            except OverflowError:
                raise DomainError(x, y, self, "overflow") from None
        if b <= 0.0:
            raise DomainError(x, y, self, "non-positive base with non-integer exponent")
        try:
            return math.pow(b, self.exponent)
        except OverflowError:
            raise DomainError(x, y, self, "overflow") from None

    def _grid(self, xs, ys, memo):
        b = self.base.eval_grid(xs, ys, memo)
        n = self._int_exponent
        if n is not None:
            return np.power(b, n, dtype=float) if isinstance(b, np.ndarray) else float(b) ** n
        return np.power(b, self.exponent)

    def _diff(self, variable):
        return _mul(
            _mul(Const(self.exponent), _pow(self.base, self.exponent - 1.0)),
            self.base.diff(variable),
        )


class Call(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        self.name = name
        self.arg = arg

    def eval(self, x, y):
        v = self.arg.eval(x, y)
        name = self.name
        if name == "ln" and v <= 0.0:
            raise DomainError(x, y, self, "ln of a non-positive value")
        if name == "sqrt" and v < 0.0:
            raise DomainError(x, y, self, "sqrt of a negative value")
        try:
            return _SCALAR_FUNCS[name](v)
        except OverflowError:
            raise DomainError(x, y, self, "overflow") from None

    def _grid(self, xs, ys, memo):
        return _GRID_FUNCS[self.name](self.arg.eval_grid(xs, ys, memo))

    def _diff(self, variable):
        u = self.arg
        du = u.diff(variable)
        name = self.name
        if name == "sin":
            return _mul(Call("cos", u), du)
        if name == "cos":
            return _neg(_mul(Call("sin", u), du))
        if name == "tan":
            return _div(du, _pow(Call("cos", u), 2.0))
        if name == "exp":
            return _mul(self, du)
        if name == "ln":
            return _div(du, u)
        if name == "sqrt":
            return _div(du, _mul(Const(2.0), self))
        if name == "sinh":
            return _mul(Call("cosh", u), du)
        # cosh
        return _mul(Call("sinh", u), du)


_SCALAR_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "exp": math.exp, "ln": math.log, "sqrt": math.sqrt,
    "sinh": math.sinh, "cosh": math.cosh,
}

_GRID_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "exp": np.exp, "ln": np.log, "sqrt": np.sqrt,
    "sinh": np.sinh, "cosh": np.cosh,
}


ZERO = Const(0.0)
ONE = Const(1.0)
X = Var("x")
Y = Var("y")


# ---------------------------------------------------------------------------
# smart constructors (constant folding, 0/1 absorption, double negation)


def _wrap(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(float(value))


def _is_const(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(base: Expr, exponent: float) -> Expr:
    e = float(exponent)
    if e == 0.0:
        return ONE
    if e == 1.0:
        return base
    if isinstance(base, Const):
        node = Pow(base, e)
        try:
            return Const(node.eval(0.0, 0.0))
        except DomainError:
            return node
    return Pow(base, e)


def _call(name: str, arg: Expr) -> Expr:
    if isinstance(arg, Const):
        node = Call(name, arg)
        try:
            return Const(node.eval(0.0, 0.0))
        except DomainError:
            return node
    return Call(name, arg)


# public constructor helpers

def const(value) -> Expr:
    return Const(float(value))


def var(name: str) -> Expr:
    return X if name == "x" else Var(name)


def sin(e) -> Expr:
    return _call("sin", _wrap(e))


def cos(e) -> Expr:
    return _call("cos", _wrap(e))


def tan(e) -> Expr:
    return _call("tan", _wrap(e))


def exp(e) -> Expr:
    return _call("exp", _wrap(e))


def ln(e) -> Expr:
    return _call("ln", _wrap(e))


def sqrt(e) -> Expr:
    return _call("sqrt", _wrap(e))


def sinh(e) -> Expr:
    return _call("sinh", _wrap(e))


def cosh(e) -> Expr:
    return _call("cosh", _wrap(e))


# ---------------------------------------------------------------------------
# spec-level operation wrappers


def evaluate(e: Expr, x: float, y: float) -> float:
    return e.eval(x, y)


def differentiate(e: Expr, variable: str) -> Expr:
    return e.diff(variable)


# ---------------------------------------------------------------------------
# printing

# precedence levels: 0 = additive, 1 = multiplicative, 2 = power, 3 = base
_LEVEL = {Add: 0, Sub: 0, Mul: 1, Div: 1, Pow: 2, Const: 3, Var: 3, Call: 3, Neg: 3}


def _level(e: Expr) -> int:
    return _LEVEL[type(e)]


def _src(e: Expr, min_level: int) -> str:
    text = _render(e)
    if _level(e) < min_level:
        return f"({text})"
    return text


def _render(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({_render(e.arg)})"
    if isinstance(e, Neg):
        return "-" + _src(e.arg, 3)
    if isinstance(e, Pow):
        exp_text = repr(e.exponent)
        if e.exponent < 0:
            exp_text = f"({exp_text})"
        return f"{_src(e.base, 3)}^{exp_text}"
    if isinstance(e, Add):
        return f"{_src(e.left, 0)} + {_src(e.right, 1)}"
    if isinstance(e, Sub):
        return f"{_src(e.left, 0)} - {_src(e.right, 1)}"
    if isinstance(e, Mul):
        return f"{_src(e.left, 1)}*{_src(e.right, 2)}"
    if isinstance(e, Div):
        return f"{_src(e.left, 1)}/{_src(e.right, 2)}"
    raise TypeError(f"cannot render {type(e).__name__}")


def to_source(e: Expr) -> str:
    """Render an expression in the input grammar.

    Parenthesisation preserves the tree shape, so re-parsing evaluates to
    bit-identical values.
    """
    return _render(e)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)

_CONSTANTS = {"pi": math.pi, "e": math.e}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        n = len(text)
        while pos < n:
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ParseError(pos, "illegal character", text[pos])
            kind = m.lastgroup
            self.tokens.append((kind, m.group(), pos))
            pos = m.end()
        self.tokens.append(("end", "", n))
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        tok = self.tokens[self.index]
        if tok[0] != "end":
            self.index += 1
        return tok

    def expect_op(self, op: str):
        kind, text, offset = self.peek()
        if kind != "op" or text != op:
            raise ParseError(offset, f"expected {op!r}", text)
        return self.advance()

    # grammar ---------------------------------------------------------------

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.parse_term()
                node = _add(node, rhs) if text == "+" else _sub(node, rhs)
            else:
                return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.parse_factor()
                node = _mul(node, rhs) if text == "*" else _div(node, rhs)
            else:
                return node

    def parse_factor(self) -> Expr:
        base = self.parse_base()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            _, _, exp_offset = self.peek()
            exponent = self.parse_base()
            if not isinstance(exponent, Const):
                raise ParseError(exp_offset, "exponent must be a constant")
            return _pow(base, exponent.value)
        return base

    def parse_base(self) -> Expr:
        kind, text, offset = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if text in ("x", "y"):
                return X if text == "x" else Y
            if text in _CONSTANTS:
                return Const(_CONSTANTS[text])
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.parse_expr()
                self.expect_op(")")
                return _call(text, arg)
            raise ParseError(offset, "unknown identifier", text)
        if kind == "op":
            if text == "-":
                return _neg(self.parse_base())
            if text == "(":
                inner = self.parse_expr()
                self.expect_op(")")
                return inner
        raise ParseError(offset, "expected a number, variable, function, or '('", text)


def parse(text: str) -> Expr:
    """Parse expression text; raises :class:`ParseError` with an offset."""
    if not isinstance(text, str):
        raise TypeError("expression source must be a string")
    parser = _Parser(text)
    kind, _, offset = parser.peek()
    if kind == "end":
        raise ParseError(offset, "empty expression")
    node = parser.parse_expr()
    kind, trailing, offset = parser.peek()
    if kind != "end":
        raise ParseError(offset, "unexpected trailing input", trailing)
    return node
