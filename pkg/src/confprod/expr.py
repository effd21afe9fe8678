"""Closed-form scalar expressions over split product coordinates and their
evaluation as exact truncated jets.

Coordinates are split into an x-group (factor 1, ``x1..x{n1}``) and a y-group
(factor 2, ``y1..y{n2}``).  Expressions are parsed from a small grammar into an
AST and evaluated either as plain values (vectorized over many points) or as
truncated multivariate Taylor jets, which supply every partial derivative the
curvature formulas consume.  Derivatives are exact up to floating round-off;
finite differences are used only in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as _iproduct

import numpy as np

__all__ = [
    "CoordSplit",
    "ProductPoint",
    "ScalarExpr",
    "Jet",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "CoordIndexError",
    "EvalDomainError",
    "parse",
    "to_text",
    "eval_jet",
    "eval_values",
    "eval_value",
    "split_differential",
    "mixed_d1d2",
    "const",
    "coord",
    "call",
]


# ---------------------------------------------------------------------------
# errors

class ExprError(ValueError):
    """Base class for expression parsing/evaluation errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class CoordIndexError(ExprSyntaxError):
    """A coordinate name refers to an index outside the declared split."""


class EvalDomainError(ExprError):
    """Evaluation hit a domain error (log of nonpositive value, division by
    zero); carries the offending subexpression."""

    def __init__(self, message: str, subexpr: str):
        super().__init__(f"{message} in subexpression '{subexpr}'")
        self.subexpr = subexpr


# ---------------------------------------------------------------------------
# coordinate split and points

@dataclass(frozen=True)
class CoordSplit:
    """Dimensions (n1, n2) of the two factors; global coordinate order is
    x1..x{n1}, y1..y{n2}."""

    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("factor dimensions must be >= 1")

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def var_name(self, i: int) -> str:
        if i < self.n1:
            return f"x{i + 1}"
        return f"y{i - self.n1 + 1}"

    def is_x(self, i: int) -> bool:
        return i < self.n1


class ProductPoint:
    """A point (x, y) of the product chart; coordinates stored read-only."""

    __slots__ = ("x", "y")

    def __init__(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
        y = np.atleast_1d(np.asarray(y, dtype=float)).copy()
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __setattr__(self, *_):
        raise AttributeError("ProductPoint is immutable")

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    def check(self, split: CoordSplit) -> None:
        if len(self.x) != split.n1 or len(self.y) != split.n2:
            raise ValueError(
                f"point dims ({len(self.x)},{len(self.y)}) do not match "
                f"split ({split.n1},{split.n2})"
            )

    @staticmethod
    def from_full(v, split: CoordSplit) -> "ProductPoint":
        v = np.asarray(v, dtype=float)
        return ProductPoint(v[: split.n1], v[split.n1:])

    def __repr__(self):
        return f"ProductPoint(x={list(self.x)}, y={list(self.y)})"


# ---------------------------------------------------------------------------
# AST

FUNCTIONS = ("sin", "cos", "exp", "log", "sinh", "cosh")


class _Node:
    __slots__ = ()


class _Const(_Node):
    __slots__ = ("v",)

    def __init__(self, v: float):
        self.v = float(v)


class _Coord(_Node):
    __slots__ = ("i",)  # global coordinate index

    def __init__(self, i: int):
        self.i = i


class _Bin(_Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b


class _Add(_Bin):
    __slots__ = ()


class _Sub(_Bin):
    __slots__ = ()


class _Mul(_Bin):
    __slots__ = ()


class _Div(_Bin):
    __slots__ = ()


class _Pow(_Node):
    __slots__ = ("a", "k")

    def __init__(self, a, k: int):
        self.a = a
        self.k = int(k)


class _Neg(_Node):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a


class _Call(_Node):
    __slots__ = ("fn", "a")

    def __init__(self, fn: str, a):
        self.fn = fn
        self.a = a


class ScalarExpr:
    """A parsed closed-form function of the split coordinates.

    Immutable; supports arithmetic operators for building derived expressions
    (all operands must share the same CoordSplit).
    """

    __slots__ = ("root", "split")

    def __init__(self, root: _Node, split: CoordSplit):
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "split", split)

    def __setattr__(self, *_):
        raise AttributeError("ScalarExpr is immutable")

    # -- builders ----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, ScalarExpr):
            if other.split != self.split:
                raise ValueError("mixed coordinate splits in expression")
            return other.root
        return _Const(float(other))

    def __add__(self, other):
        return ScalarExpr(_Add(self.root, self._coerce(other)), self.split)

    def __radd__(self, other):
        return ScalarExpr(_Add(self._coerce(other), self.root), self.split)

    def __sub__(self, other):
        return ScalarExpr(_Sub(self.root, self._coerce(other)), self.split)

    def __rsub__(self, other):
        return ScalarExpr(_Sub(self._coerce(other), self.root), self.split)

    def __mul__(self, other):
        return ScalarExpr(_Mul(self.root, self._coerce(other)), self.split)

    def __rmul__(self, other):
        return ScalarExpr(_Mul(self._coerce(other), self.root), self.split)

    def __truediv__(self, other):
        return ScalarExpr(_Div(self.root, self._coerce(other)), self.split)

    def __rtruediv__(self, other):
        return ScalarExpr(_Div(self._coerce(other), self.root), self.split)

    def __neg__(self):
        return ScalarExpr(_Neg(self.root), self.split)

    def __pow__(self, k: int):
        return ScalarExpr(_Pow(self.root, k), self.split)

    # -- queries -----------------------------------------------------------
    def free_coords(self) -> frozenset:
        """Global indices of coordinates appearing in the expression."""
        out = set()
        stack = [self.root]
        while stack:
            nd = stack.pop()
            if isinstance(nd, _Coord):
                out.add(nd.i)
            elif isinstance(nd, _Bin):
                stack.append(nd.a)
                stack.append(nd.b)
            elif isinstance(nd, (_Neg, _Call, _Pow)):
                stack.append(nd.a)
        return frozenset(out)

    def depends_on_x(self) -> bool:
        return any(i < self.split.n1 for i in self.free_coords())

    def depends_on_y(self) -> bool:
        return any(i >= self.split.n1 for i in self.free_coords())

    def substitute(self, values: dict) -> "ScalarExpr":
        """Replace coordinates (by global index) with constants."""
        def rec(nd):
            if isinstance(nd, _Coord):
                if nd.i in values:
                    return _Const(float(values[nd.i]))
                return nd
            if isinstance(nd, _Const):
                return nd
            if isinstance(nd, _Add):
                return _Add(rec(nd.a), rec(nd.b))
            if isinstance(nd, _Sub):
                return _Sub(rec(nd.a), rec(nd.b))
            if isinstance(nd, _Mul):
                return _Mul(rec(nd.a), rec(nd.b))
            if isinstance(nd, _Div):
                return _Div(rec(nd.a), rec(nd.b))
            if isinstance(nd, _Pow):
                return _Pow(rec(nd.a), nd.k)
            if isinstance(nd, _Neg):
                return _Neg(rec(nd.a))
            if isinstance(nd, _Call):
                return _Call(nd.fn, rec(nd.a))
            raise TypeError(nd)

        return ScalarExpr(rec(self.root), self.split)

    def __repr__(self):
        return f"ScalarExpr({to_text(self)!r}, split=({self.split.n1},{self.split.n2}))"


def const(v: float, split: CoordSplit) -> ScalarExpr:
    return ScalarExpr(_Const(v), split)


def coord(i: int, split: CoordSplit) -> ScalarExpr:
    """Expression for the coordinate with global index i."""
    if not 0 <= i < split.n:
        raise ValueError(f"coordinate index {i} out of range")
    return ScalarExpr(_Coord(i), split)


def call(fn: str, arg: ScalarExpr) -> ScalarExpr:
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function {fn!r}")
    return ScalarExpr(_Call(fn, arg.root), arg.split)


# ---------------------------------------------------------------------------
# parser

_NUM_CHARS = set("0123456789")


class _Parser:
    def __init__(self, text: str, split: CoordSplit):
        self.text = text
        self.split = split
        self.pos = 0

    def error(self, msg, cls=ExprSyntaxError):
        raise cls(msg, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        if self.pos < len(self.text):
            return self.text[self.pos]
        return ""

    def parse(self) -> _Node:
        node = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected character {self.text[self.pos]!r}")
        return node

    def expr(self) -> _Node:
        node = self.term()
        while True:
            c = self.peek()
            if c == "+":
                self.pos += 1
                node = _Add(node, self.term())
            elif c == "-":
                self.pos += 1
                node = _Sub(node, self.term())
            else:
                return node

    def term(self) -> _Node:
        node = self.factor()
        while True:
            c = self.peek()
            if c == "*":
                self.pos += 1
                node = _Mul(node, self.factor())
            elif c == "/":
                self.pos += 1
                node = _Div(node, self.factor())
            else:
                return node

    def factor(self) -> _Node:
        node = self.base()
        if self.peek() == "^":
            self.pos += 1
            node = _Pow(node, self.integer())
        return node

    def integer(self) -> int:
        self.skip_ws()
        start = self.pos
        if self.pos < len(self.text) and self.text[self.pos] == "-":
            self.pos += 1
        if self.pos >= len(self.text) or self.text[self.pos] not in _NUM_CHARS:
            self.pos = start
            self.error("integer exponent expected")
        while self.pos < len(self.text) and self.text[self.pos] in _NUM_CHARS:
            self.pos += 1
        return int(self.text[start:self.pos])

    def base(self) -> _Node:
        c = self.peek()
        if c == "":
            self.error("unexpected end of input")
        if c == "-":
            self.pos += 1
            return _Neg(self.base())
        if c == "(":
            self.pos += 1
            node = self.expr()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return node
        if c in _NUM_CHARS or c == ".":
            return self.number()
        if c.isalpha():
            return self.ident()
        self.error(f"unexpected character {c!r}")

    def number(self) -> _Node:
        start = self.pos
        t = self.text
        while self.pos < len(t) and t[self.pos] in _NUM_CHARS:
            self.pos += 1
        if self.pos < len(t) and t[self.pos] == ".":
            self.pos += 1
            while self.pos < len(t) and t[self.pos] in _NUM_CHARS:
                self.pos += 1
        if self.pos < len(t) and t[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(t) and t[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(t) and t[self.pos] in _NUM_CHARS:
                while self.pos < len(t) and t[self.pos] in _NUM_CHARS:
                    self.pos += 1
            else:
                self.pos = mark  # 'e' belongs to an identifier, not allowed here
        try:
            return _Const(float(t[start:self.pos]))
        except ValueError:
            self.pos = start
            self.error("malformed number")

    def ident(self) -> _Node:
        start = self.pos
        t = self.text
        while self.pos < len(t) and (t[self.pos].isalnum()):
            self.pos += 1
        name = t[start:self.pos]
        if name[0] in "xy" and name[1:].isdigit():
            idx = int(name[1:])
            if name[0] == "x":
                if not 1 <= idx <= self.split.n1:
                    self.pos = start
                    self.error(
                        f"coordinate {name} out of range (n1={self.split.n1})",
                        CoordIndexError,
                    )
                return _Coord(idx - 1)
            if not 1 <= idx <= self.split.n2:
                self.pos = start
                self.error(
                    f"coordinate {name} out of range (n2={self.split.n2})",
                    CoordIndexError,
                )
            return _Coord(self.split.n1 + idx - 1)
        if name in FUNCTIONS:
            if self.peek() != "(":
                self.error(f"expected '(' after {name}")
            self.pos += 1
            arg = self.expr()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return _Call(name, arg)
        self.pos = start
        self.error(f"unknown identifier {name!r}", UnknownIdentifierError)


def parse(text: str, split: CoordSplit) -> ScalarExpr:
    """Parse an expression string against a coordinate split.

    Grammar: expr := term (('+'|'-') term)*; term := factor (('*'|'/')
    factor)*; factor := base ('^' integer)?; base := number | ident '(' expr
    ')' | coord | '(' expr ')' | '-' base; coord := 'x' digits | 'y' digits
    (1-based); ident in {sin, cos, exp, log, sinh, cosh}.
    """
    return ScalarExpr(_Parser(text, split).parse(), split)


# ---------------------------------------------------------------------------
# printer

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _print(nd, split: CoordSplit, prec: int) -> str:
    if isinstance(nd, _Const):
        s = repr(nd.v)
        if s.startswith("-"):
            return f"({s})" if prec > _PREC_MUL else s
        return s
    if isinstance(nd, _Coord):
        return split.var_name(nd.i)
    if isinstance(nd, _Add):
        s = f"{_print(nd.a, split, _PREC_ADD)}+{_print(nd.b, split, _PREC_ADD + 1)}"
        return f"({s})" if prec > _PREC_ADD else s
    if isinstance(nd, _Sub):
        s = f"{_print(nd.a, split, _PREC_ADD)}-{_print(nd.b, split, _PREC_ADD + 1)}"
        return f"({s})" if prec > _PREC_ADD else s
    if isinstance(nd, _Mul):
        s = f"{_print(nd.a, split, _PREC_MUL)}*{_print(nd.b, split, _PREC_MUL + 1)}"
        return f"({s})" if prec > _PREC_MUL else s
    if isinstance(nd, _Div):
        s = f"{_print(nd.a, split, _PREC_MUL)}/{_print(nd.b, split, _PREC_MUL + 1)}"
        return f"({s})" if prec > _PREC_MUL else s
    if isinstance(nd, _Neg):
        s = f"-{_print(nd.a, split, _PREC_ATOM)}"
        return f"({s})" if prec > _PREC_MUL else s
    if isinstance(nd, _Pow):
        return f"{_print(nd.a, split, _PREC_ATOM)}^{nd.k}"
    if isinstance(nd, _Call):
        return f"{nd.fn}({_print(nd.a, split, _PREC_ADD)})"
    raise TypeError(nd)


def to_text(expr: ScalarExpr) -> str:
    """Print an expression; parse(to_text(e)) evaluates identically to e."""
    return _print(expr.root, expr.split, _PREC_ADD)


# ---------------------------------------------------------------------------
# truncated multivariate Taylor arithmetic (the jet engine)

class _JetSpace:
    """Index tables for dense truncated Taylor polynomials in `nvars`
    variables up to total degree `order`.  Coefficients are stored in a flat
    array ordered by (degree, lexicographic exponent)."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        monos = []
        for deg in range(order + 1):
            monos.extend(sorted(_exponents(nvars, deg)))
        self.monos = monos
        self.size = len(monos)
        self.index = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos])
        # multiplication gather tables
        I, J, T = [], [], []
        for i, mi in enumerate(monos):
            di = sum(mi)
            for j, mj in enumerate(monos):
                if di + sum(mj) <= order:
                    I.append(i)
                    J.append(j)
                    T.append(self.index[tuple(a + b for a, b in zip(mi, mj))])
        self._mi = np.array(I)
        self._mj = np.array(J)
        self._mt = np.array(T)
        # factorial products per monomial (coefficient -> partial derivative)
        self.fact = np.array(
            [math.prod(math.factorial(e) for e in m) for m in monos], dtype=float
        )

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        c = np.zeros(self.size)
        np.add.at(c, self._mt, a[self._mi] * b[self._mj])
        return c

    def const(self, v: float) -> np.ndarray:
        c = np.zeros(self.size)
        c[0] = v
        return c

    def var(self, i: int, value: float) -> np.ndarray:
        c = np.zeros(self.size)
        c[0] = value
        if self.order >= 1:
            e = [0] * self.nvars
            e[i] = 1
            c[self.index[tuple(e)]] = 1.0
        return c

    def compose(self, series: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate sum_k series[k] * (u - u[0])^k, truncated."""
        tail = u.copy()
        tail[0] = 0.0
        out = self.const(series[self.order])
        for k in range(self.order - 1, -1, -1):
            out = self.mul(out, tail)
            out[0] += series[k]
        return out


def _exponents(nvars, deg):
    if nvars == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _exponents(nvars - 1, deg - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _space(nvars: int, order: int) -> _JetSpace:
    return _JetSpace(nvars, order)


def _series_exp(u0, order):
    e = math.exp(u0)
    return np.array([e / math.factorial(k) for k in range(order + 1)])


def _series_log(u0, order):
    s = np.empty(order + 1)
    s[0] = math.log(u0)
    for k in range(1, order + 1):
        s[k] = (-1.0) ** (k - 1) / (k * u0**k)
    return s


def _series_sin(u0, order):
    cyc = [math.sin(u0), math.cos(u0), -math.sin(u0), -math.cos(u0)]
    return np.array([cyc[k % 4] / math.factorial(k) for k in range(order + 1)])


def _series_cos(u0, order):
    cyc = [math.cos(u0), -math.sin(u0), -math.cos(u0), math.sin(u0)]
    return np.array([cyc[k % 4] / math.factorial(k) for k in range(order + 1)])


def _series_sinh(u0, order):
    cyc = [math.sinh(u0), math.cosh(u0)]
    return np.array([cyc[k % 2] / math.factorial(k) for k in range(order + 1)])


def _series_cosh(u0, order):
    cyc = [math.cosh(u0), math.sinh(u0)]
    return np.array([cyc[k % 2] / math.factorial(k) for k in range(order + 1)])


_SERIES = {
    "exp": _series_exp,
    "log": _series_log,
    "sin": _series_sin,
    "cos": _series_cos,
    "sinh": _series_sinh,
    "cosh": _series_cosh,
}


def _recip(sp: _JetSpace, u: np.ndarray, where) -> np.ndarray:
    u0 = u[0]
    if u0 == 0.0:
        raise EvalDomainError("division by zero", where())
    s = np.array([(-1.0) ** k / u0 ** (k + 1) for k in range(sp.order + 1)])
    return sp.compose(s, u)


def _eval_taylor(nd, sp: _JetSpace, point: np.ndarray, split: CoordSplit):
    if isinstance(nd, _Const):
        return sp.const(nd.v)
    if isinstance(nd, _Coord):
        return sp.var(nd.i, point[nd.i])
    if isinstance(nd, _Add):
        return _eval_taylor(nd.a, sp, point, split) + _eval_taylor(nd.b, sp, point, split)
    if isinstance(nd, _Sub):
        return _eval_taylor(nd.a, sp, point, split) - _eval_taylor(nd.b, sp, point, split)
    if isinstance(nd, _Mul):
        return sp.mul(
            _eval_taylor(nd.a, sp, point, split), _eval_taylor(nd.b, sp, point, split)
        )
    if isinstance(nd, _Div):
        a = _eval_taylor(nd.a, sp, point, split)
        b = _eval_taylor(nd.b, sp, point, split)
        return sp.mul(a, _recip(sp, b, lambda: _print(nd, split, _PREC_ADD)))
    if isinstance(nd, _Neg):
        return -_eval_taylor(nd.a, sp, point, split)
    if isinstance(nd, _Pow):
        a = _eval_taylor(nd.a, sp, point, split)
        k = nd.k
        if k < 0:
            a = _recip(sp, a, lambda: _print(nd, split, _PREC_ADD))
            k = -k
        out = sp.const(1.0)
        base = a
        while k:
            if k & 1:
                out = sp.mul(out, base)
            k >>= 1
            if k:
                base = sp.mul(base, base)
        return out
    if isinstance(nd, _Call):
        u = _eval_taylor(nd.a, sp, point, split)
        if nd.fn == "log" and u[0] <= 0.0:
            raise EvalDomainError(
                f"log of nonpositive value {u[0]}", _print(nd, split, _PREC_ADD)
            )
        return sp.compose(_SERIES[nd.fn](u[0], sp.order), u)
    raise TypeError(nd)


# ---------------------------------------------------------------------------
# jets

class Jet:
    """Value plus all partial derivatives up to `order` at a point.

    `partials` maps canonical multi-indices (nondecreasing tuples of global
    coordinate indices; () is the value) to derivative values.
    """

    __slots__ = ("order", "split", "partials", "_coeffs", "_sp")

    def __init__(self, order: int, split: CoordSplit, coeffs: np.ndarray, sp: _JetSpace):
        self.order = order
        self.split = split
        self._coeffs = coeffs
        self._sp = sp
        partials = {}
        for idx, m in enumerate(sp.monos):
            key = tuple(
                i for i, e in enumerate(m) for _ in range(e)
            )
            partials[key] = coeffs[idx] * sp.fact[idx]
        self.partials = partials

    @property
    def value(self) -> float:
        return self.partials[()]

    def partial(self, *vars_) -> float:
        return self.partials[tuple(sorted(vars_))]

    def gradient(self) -> np.ndarray:
        return np.array([self.partials[(i,)] for i in range(self.split.n)])

    def hessian(self) -> np.ndarray:
        n = self.split.n
        h = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                h[i, j] = h[j, i] = self.partials[(i, j)]
        return h

    def d1(self) -> np.ndarray:
        """Components of the differential along the x-coordinates."""
        return np.array([self.partials[(i,)] for i in range(self.split.n1)])

    def d2(self) -> np.ndarray:
        n1, n = self.split.n1, self.split.n
        return np.array([self.partials[(i,)] for i in range((n1), n)])

    def mixed(self) -> np.ndarray:
        """Matrix of mixed second partials d^2/dx_i dy_j (n1 x n2)."""
        n1, n2 = self.split.n1, self.split.n2
        m = np.empty((n1, n2))
        for i in range(n1):
            for j in range(n2):
                m[i, j] = self.partials[(i, n1 + j)]
        return m


def eval_jet(expr: ScalarExpr, p: ProductPoint, order: int) -> Jet:
    """Exact truncated jet of an expression at a point.

    All partial derivatives of total degree <= order; exact up to round-off.
    Raises EvalDomainError on log of nonpositive values or division by zero.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    p.check(expr.split)
    sp = _space(expr.split.n, order)
    coeffs = _eval_taylor(expr.root, sp, p.full, expr.split)
    return Jet(order, expr.split, coeffs, sp)


def split_differential(expr: ScalarExpr, p: ProductPoint):
    """(d1 expr, d2 expr) as coordinate component vectors; their
    concatenation is the full differential at p."""
    j = eval_jet(expr, p, 1)
    return j.d1(), j.d2()


def mixed_d1d2(expr: ScalarExpr, p: ProductPoint) -> np.ndarray:
    """Coordinate matrix (n1 x n2) of d1 d2 expr at p."""
    return eval_jet(expr, p, 2).mixed()


# ---------------------------------------------------------------------------
# vectorized value evaluation

def _eval_values(nd, pts: np.ndarray, split: CoordSplit):
    if isinstance(nd, _Const):
        return np.full(pts.shape[0], nd.v)
    if isinstance(nd, _Coord):
        return pts[:, nd.i].copy()
    if isinstance(nd, _Add):
        return _eval_values(nd.a, pts, split) + _eval_values(nd.b, pts, split)
    if isinstance(nd, _Sub):
        return _eval_values(nd.a, pts, split) - _eval_values(nd.b, pts, split)
    if isinstance(nd, _Mul):
        return _eval_values(nd.a, pts, split) * _eval_values(nd.b, pts, split)
    if isinstance(nd, _Div):
        a = _eval_values(nd.a, pts, split)
        b = _eval_values(nd.b, pts, split)
        if np.any(b == 0.0):
            raise EvalDomainError("division by zero", _print(nd, split, _PREC_ADD))
        return a / b
    if isinstance(nd, _Neg):
        return -_eval_values(nd.a, pts, split)
    if isinstance(nd, _Pow):
        a = _eval_values(nd.a, pts, split)
        if nd.k < 0 and np.any(a == 0.0):
            raise EvalDomainError("division by zero", _print(nd, split, _PREC_ADD))
        return a ** float(nd.k)
    if isinstance(nd, _Call):
        u = _eval_values(nd.a, pts, split)
        if nd.fn == "log":
            if np.any(u <= 0.0):
                raise EvalDomainError(
                    "log of nonpositive value", _print(nd, split, _PREC_ADD)
                )
            return np.log(u)
        return getattr(np, nd.fn)(u)
    raise TypeError(nd)


def eval_values(expr: ScalarExpr, points: np.ndarray) -> np.ndarray:
    """Evaluate expr at many points at once; points has shape (P, n) with
    columns ordered x1..x{n1}, y1..y{n2}."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] != expr.split.n:
        raise ValueError("point array width does not match split")
    return _eval_values(expr.root, pts, expr.split)


def eval_value(expr: ScalarExpr, p: ProductPoint) -> float:
    return float(eval_values(expr, p.full[None, :])[0])


# ---------------------------------------------------------------------------
# generic evaluation over a custom scalar algebra

def eval_generic(expr: ScalarExpr, values, funcs: dict):
    """Evaluate the expression over an arbitrary scalar type.

    `values[i]` supplies the scalar for the coordinate with global index i;
    scalars must support +, -, *, /, ** with ints, and mixing with floats.
    `funcs` maps each of sin/cos/exp/log/sinh/cosh to a callable.  Used for
    independent derivative routes (nested dual numbers) in tests.
    """
    def rec(nd):
        if isinstance(nd, _Const):
            return nd.v
        if isinstance(nd, _Coord):
            return values[nd.i]
        if isinstance(nd, _Add):
            return rec(nd.a) + rec(nd.b)
        if isinstance(nd, _Sub):
            return rec(nd.a) - rec(nd.b)
        if isinstance(nd, _Mul):
            return rec(nd.a) * rec(nd.b)
        if isinstance(nd, _Div):
            return rec(nd.a) / rec(nd.b)
        if isinstance(nd, _Neg):
            return -rec(nd.a)
        if isinstance(nd, _Pow):
            return rec(nd.a) ** nd.k
        if isinstance(nd, _Call):
            return funcs[nd.fn](rec(nd.a))
        raise TypeError(nd)

    return rec(expr.root)
