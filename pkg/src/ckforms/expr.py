"""Scalar expressions over chart coordinates.

Expressions are immutable trees.  ``diff`` is exact and symbolic; ``evaluate``
walks the tree at a point, memoising subtrees so that shared structure (which
derivative trees have plenty of) is evaluated once per point.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Real
from typing import Sequence

__all__ = [
    "Expression",
    "Const",
    "Coord",
    "ExprSyntaxError",
    "ExprDomainError",
    "parse",
    "diff",
    "evaluate",
    "Evaluator",
    "const",
    "coord",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ExprSyntaxError(ValueError):
    """Malformed source string; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ArithmeticError):
    """Evaluation left the domain of a function; ``path`` locates the subtree."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} in subexpression {path}")
        self.path = path


def _wrap(x) -> "Expression":
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, Fraction)):
        return Const(Fraction(x))
    if isinstance(x, Real):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expression")


class Expression:
    """Base node.  Subclasses are value objects; never mutate them."""

    __slots__ = ("_dcache",)
    prec = 100

    def __init__(self):
        self._dcache: dict[int, Expression] = {}

    # arithmetic builds trees with light local folding only
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return mul(self, power(_wrap(other), Const(Fraction(-1))))

    def __rtruediv__(self, other):
        return mul(_wrap(other), power(self, Const(Fraction(-1))))

    def __pow__(self, other):
        return power(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def children(self) -> tuple["Expression", ...]:
        return ()

    def is_zero(self) -> bool:
        return False

    def __str__(self) -> str:
        return self.render(None)

    def __repr__(self) -> str:
        return f"Expression({self.render(None)!r})"

    def render(self, names: Sequence[str] | None) -> str:
        raise NotImplementedError


class Const(Expression):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        self.value = value

    def is_zero(self):
        return self.value == 0

    def render(self, names):
        v = self.value
        if isinstance(v, Fraction):
            s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
            if v < 0 or v.denominator != 1:
                return f"({s})"
            return s
        s = repr(float(v))
        return f"({s})" if v < 0 or "e" in s else s


class Coord(Expression):
    __slots__ = ("index",)

    def __init__(self, index: int):
        super().__init__()
        self.index = index

    def render(self, names):
        return names[self.index] if names else f"x{self.index + 1}"


class Sum(Expression):
    __slots__ = ("terms",)
    prec = 1

    def __init__(self, terms):
        super().__init__()
        self.terms = tuple(terms)

    def children(self):
        return self.terms

    def render(self, names):
        return " + ".join(_paren(t, names, 1) for t in self.terms)


class Product(Expression):
    __slots__ = ("factors",)
    prec = 2

    def __init__(self, factors):
        super().__init__()
        self.factors = tuple(factors)

    def children(self):
        return self.factors

    def render(self, names):
        return "*".join(_paren(f, names, 2) for f in self.factors)


class Neg(Expression):
    __slots__ = ("arg",)
    prec = 2

    def __init__(self, arg):
        super().__init__()
        self.arg = arg

    def children(self):
        return (self.arg,)

    def render(self, names):
        return f"-({self.arg.render(names)})"


class Power(Expression):
    __slots__ = ("base", "exponent")
    prec = 3

    def __init__(self, base, exponent):
        super().__init__()
        self.base = base
        self.exponent = exponent

    def children(self):
        return (self.base, self.exponent)

    def render(self, names):
        return f"{_paren(self.base, names, 4)}^{_paren(self.exponent, names, 4)}"


class Func(Expression):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expression):
        super().__init__()
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name}")
        self.name = name
        self.arg = arg

    def children(self):
        return (self.arg,)

    def render(self, names):
        return f"{self.name}({self.arg.render(names)})"


def _paren(e: Expression, names, prec: int) -> str:
    s = e.render(names)
    return f"({s})" if e.prec < prec else s


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def const(v) -> Expression:
    return _wrap(v)


def coord(i: int) -> Expression:
    return Coord(i)


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def add(a: Expression, b: Expression) -> Expression:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    terms = (a.terms if isinstance(a, Sum) else (a,)) + (b.terms if isinstance(b, Sum) else (b,))
    return Sum(terms)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Expression, b: Expression) -> Expression:
    if a.is_zero() or b.is_zero():
        return ZERO
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, -1):
        return neg(b)
    if _is_const(b, -1):
        return neg(a)
    factors = (a.factors if isinstance(a, Product) else (a,)) + (
        b.factors if isinstance(b, Product) else (b,)
    )
    return Product(factors)


def power(a: Expression, b: Expression) -> Expression:
    if b.is_zero():
        return ONE
    if _is_const(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        if isinstance(b.value, Fraction) and b.value.denominator == 1 and (a.value != 0 or b.value > 0):
            return Const(a.value ** int(b.value))
    return Power(a, b)


def _func(name):
    def f(x):
        return Func(name, _wrap(x))

    f.__name__ = name
    return f


sin, cos, exp, log, sqrt = (_func(nm) for nm in FUNCTIONS)


# ---------------------------------------------------------------- differentiation


def diff(e: Expression, i: int) -> Expression:
    """Exact partial derivative in coordinate ``i`` (cached on the node)."""
    hit = e._dcache.get(i)
    if hit is not None:
        return hit
    d = _diff(e, i)
    e._dcache[i] = d
    return d


def _diff(e: Expression, i: int) -> Expression:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Coord):
        return ONE if e.index == i else ZERO
    if isinstance(e, Sum):
        out = ZERO
        for t in e.terms:
            out = add(out, diff(t, i))
        return out
    if isinstance(e, Neg):
        return neg(diff(e.arg, i))
    if isinstance(e, Product):
        out = ZERO
        fs = e.factors
        for j, f in enumerate(fs):
            df = diff(f, i)
            if df.is_zero():
                continue
            term = df
            for m, g in enumerate(fs):
                if m != j:
                    term = mul(term, g)
            out = add(out, term)
        return out
    if isinstance(e, Power):
        u, c = e.base, e.exponent
        du = diff(u, i)
        if isinstance(c, Const):
            if du.is_zero():
                return ZERO
            return mul(mul(c, power(u, Const(c.value - 1))), du)
        # general exponent: u^c = exp(c log u)
        dc = diff(c, i)
        t1 = mul(mul(c, power(u, add(c, Const(Fraction(-1))))), du) if not du.is_zero() else ZERO
        t2 = mul(mul(e, Func("log", u)), dc) if not dc.is_zero() else ZERO
        return add(t1, t2)
    if isinstance(e, Func):
        u = e.arg
        du = diff(u, i)
        if du.is_zero():
            return ZERO
        name = e.name
        if name == "sin":
            outer = Func("cos", u)
        elif name == "cos":
            outer = neg(Func("sin", u))
        elif name == "exp":
            outer = e
        elif name == "log":
            outer = power(u, Const(Fraction(-1)))
        else:  # sqrt
            outer = mul(Const(Fraction(1, 2)), power(e, Const(Fraction(-1))))
        return mul(outer, du)
    raise TypeError(type(e).__name__)


# ---------------------------------------------------------------- evaluation


class Evaluator:
    """Evaluates many expressions at one point, sharing a subtree memo."""

    def __init__(self, point: Sequence[float]):
        self.point = tuple(float(x) for x in point)
        self._memo: dict[int, float] = {}
        self._keep: list[Expression] = []  # pins ids in the memo

    def __call__(self, e: Expression) -> float:
        return self._eval(e, "root")

    def _eval(self, e: Expression, path: str) -> float:
        key = id(e)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        v = self._compute(e, path)
        self._memo[key] = v
        self._keep.append(e)
        return v

    def _compute(self, e: Expression, path: str) -> float:
        if isinstance(e, Const):
            return float(e.value)
        if isinstance(e, Coord):
            if e.index >= len(self.point):
                raise IndexError(f"coordinate {e.index} outside point of length {len(self.point)}")
            return self.point[e.index]
        if isinstance(e, Sum):
            return math.fsum(self._eval(t, f"{path}.+{j}") for j, t in enumerate(e.terms))
        if isinstance(e, Product):
            out = 1.0
            for j, f in enumerate(e.factors):
                out *= self._eval(f, f"{path}.*{j}")
            return out
        if isinstance(e, Neg):
            return -self._eval(e.arg, f"{path}.-")
        if isinstance(e, Power):
            b = self._eval(e.base, f"{path}.base")
            c = self._eval(e.exponent, f"{path}.exp")
            if b == 0.0 and c < 0:
                raise ExprDomainError("division by zero", f"{path} = {e}")
            if b < 0 and not float(c).is_integer():
                raise ExprDomainError("non-integer power of negative base", f"{path} = {e}")
            return b**c
        if isinstance(e, Func):
            x = self._eval(e.arg, f"{path}.{e.name}")
            if e.name == "sin":
                return math.sin(x)
            if e.name == "cos":
                return math.cos(x)
            if e.name == "exp":
                return math.exp(x)
            if e.name == "log":
                if x <= 0:
                    raise ExprDomainError("log of nonpositive value", f"{path} = {e}")
                return math.log(x)
            if x < 0:
                raise ExprDomainError("sqrt of negative value", f"{path} = {e}")
            return math.sqrt(x)
        raise TypeError(type(e).__name__)


def evaluate(e: Expression, point: Sequence[float]) -> float:
    return Evaluator(point)(e)


# ---------------------------------------------------------------- parsing


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := unary (('*'|'/') unary)*
    # unary  := '-' unary | '+' unary | power
    # power  := atom ('^' unary)?
    # atom   := number | name | func '(' expr ')' | '(' expr ')'

    def __init__(self, src: str, coords: Sequence[str]):
        self.src = src
        self.coords = {name: j for j, name in enumerate(coords)}
        self.pos = 0

    def error(self, msg):
        offset = len(self.src[: self.pos].encode("utf-8"))
        raise ExprSyntaxError(msg, offset)

    def skip(self):
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.src[self.pos] if self.pos < len(self.src) else ""

    def take(self, ch):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def run(self) -> Expression:
        e = self.expr()
        if self.peek():
            self.error(f"unexpected {self.peek()!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek() in ("+", "-") and self.peek():
            op = self.src[self.pos]
            self.pos += 1
            t = self.term()
            e = e + t if op == "+" else e - t
        return e

    def term(self):
        e = self.unary()
        while self.peek() in ("*", "/") and self.peek():
            op = self.src[self.pos]
            self.pos += 1
            t = self.unary()
            e = e * t if op == "*" else e / t
        return e

    def unary(self):
        c = self.peek()
        if c == "-":
            self.pos += 1
            return neg(self.unary())
        if c == "+":
            self.pos += 1
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            return power(base, self.unary())
        return base

    def atom(self):
        c = self.peek()
        if not c:
            self.error("unexpected end of input")
        if c == "(":
            self.pos += 1
            e = self.expr()
            self.take(")")
            return e
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha() or c == "_":
            start = self.pos
            while self.pos < len(self.src) and (self.src[self.pos].isalnum() or self.src[self.pos] == "_"):
                self.pos += 1
            name = self.src[start : self.pos]
            if name in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Func(name, arg)
            if name in self.coords:
                return Coord(self.coords[name])
            if name == "pi":
                return Const(math.pi)
            self.pos = start
            self.error(f"unknown identifier {name!r}")
        self.error(f"unexpected {c!r}")

    def number(self):
        start = self.pos
        s = self.src
        while self.pos < len(s) and (s[self.pos].isdigit() or s[self.pos] == "."):
            self.pos += 1
        if self.pos < len(s) and s[self.pos] in "eE":
            j = self.pos + 1
            if j < len(s) and s[j] in "+-":
                j += 1
            if j < len(s) and s[j].isdigit():
                self.pos = j
                while self.pos < len(s) and s[self.pos].isdigit():
                    self.pos += 1
        text = s[start : self.pos]
        try:
            return Const(Fraction(text))
        except ValueError:
            self.pos = start
            self.error(f"bad number {text!r}")


def parse(src: str, coords: Sequence[str]) -> Expression:
    """Parse ``src`` over the coordinate names ``coords``."""
    return _Parser(src, coords).run()
