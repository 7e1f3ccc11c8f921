"""Truncated multivariate Taylor arithmetic ("jets") in three variables.

A :class:`Jet` carries the Taylor coefficients of a scalar function of
``(x, y, b)`` around a point, up to a fixed total degree. Coefficient
``(i, j, k)`` is ``d^(i+j+k) f / (dx^i dy^j db^k) / (i! j! k!)``.

Coefficients are stored densely, ordered by total degree first, so the
coefficient vector of an order-``M`` jet is a prefix of the order-``N`` one
for ``M <= N``; truncation is slicing.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ._backend import kernels

DEFAULT_ORDER = 6
DIV_FLOOR = 1e-13

VARIABLES = ("x", "y", "b")


class JetError(ArithmeticError):
    pass


class DivisionNearZero(JetError):
    pass


class DomainError(JetError):
    def __init__(self, fn, value):
        super().__init__(f"{fn} undefined at {value!r}")
        self.fn = fn
        self.value = value


class OrderExceeded(JetError):
    pass


class _Table:
    """Index bookkeeping and product tables for one truncation order."""

    def __init__(self, order):
        self.order = order
        idx = []
        for d in range(order + 1):
            for i in range(d, -1, -1):
                for j in range(d - i, -1, -1):
                    idx.append((i, j, d - i - j))
        self.multi = idx
        self.n = len(idx)
        self.pos = {m: p for p, m in enumerate(idx)}
        self.degree = np.array([sum(m) for m in idx], dtype=np.intp)

        ptr = [0]
        I, J = [], []
        for k, (a, b, c) in enumerate(idx):
            # (0, k) first: div relies on it
            I.append(0)
            J.append(k)
            for i in range(a + 1):
                for j in range(b + 1):
                    for l in range(c + 1):
                        if i == j == l == 0:
                            continue
                        I.append(self.pos[(i, j, l)])
                        J.append(self.pos[(a - i, b - j, c - l)])
            ptr.append(len(I))
        self.ptr = np.array(ptr, dtype=np.intp)
        self.I = np.array(I, dtype=np.intp)
        self.J = np.array(J, dtype=np.intp)

        blocks = []
        rows_of = np.repeat(np.arange(self.n), np.diff(self.ptr))
        lead = self.ptr[:-1]
        nonlead = np.ones(len(I), dtype=bool)
        nonlead[lead] = False
        for d in range(order + 1):
            ks = np.nonzero(self.degree == d)[0]
            start, stop = int(ks[0]), int(ks[-1]) + 1
            sel = nonlead & (rows_of >= start) & (rows_of < stop)
            blocks.append((start, stop, rows_of[sel] - start, self.I[sel], self.J[sel]))
        self.blocks = blocks

        # derivative maps: out[p] = factor[p] * coeff[src[p]] for the order-1 jet
        self.deriv = []
        for axis in range(3):
            src, fac = [], []
            for m in idx:
                if sum(m) == order:
                    break
                up = list(m)
                up[axis] += 1
                src.append(self.pos[tuple(up)])
                fac.append(float(up[axis]))
            self.deriv.append((np.array(src, dtype=np.intp), np.array(fac)))

        fact = [math.factorial(i) * math.factorial(j) * math.factorial(k) for i, j, k in idx]
        self.factorials = np.array(fact, dtype=float)


@lru_cache(maxsize=None)
def table(order: int) -> _Table:
    if order < 0:
        raise ValueError("order must be non-negative")
    return _Table(order)


def n_coefficients(order: int) -> int:
    return math.comb(order + 3, 3)


class Jet:
    """Immutable truncated Taylor expansion in ``(x, y, b)``.

    Mixing jets of different orders truncates to the lower order.
    """

    __slots__ = ("order", "c")
    __array_priority__ = 100

    def __init__(self, order: int, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (n_coefficients(order),):
            raise ValueError(f"expected {n_coefficients(order)} coefficients for order {order}")
        c.flags.writeable = False
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "c", c)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    @classmethod
    def constant(cls, value: float, order: int = DEFAULT_ORDER) -> Jet:
        c = np.zeros(n_coefficients(order))
        c[0] = value
        return cls(order, c)

    @classmethod
    def variable(cls, which, value: float, order: int = DEFAULT_ORDER) -> Jet:
        axis = VARIABLES.index(which) if isinstance(which, str) else int(which)
        c = np.zeros(n_coefficients(order))
        c[0] = value
        if order >= 1:
            c[1 + axis] = 1.0
        return cls(order, c)

    @property
    def value(self) -> float:
        return float(self.c[0])

    def coefficient(self, i: int, j: int, k: int) -> float:
        if i + j + k > self.order:
            raise OrderExceeded(f"index ({i},{j},{k}) beyond order {self.order}")
        return float(self.c[table(self.order).pos[(i, j, k)]])

    def partial(self, i: int = 0, j: int = 0, k: int = 0) -> float:
        """Raw mixed partial derivative d^(i+j+k)/dx^i dy^j db^k."""
        return self.coefficient(i, j, k) * math.factorial(i) * math.factorial(j) * math.factorial(k)

    def partials(self) -> dict:
        t = table(self.order)
        return {m: float(v) for m, v in zip(t.multi, self.c * t.factorials)}

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise OrderExceeded(f"cannot raise order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(order, self.c[: n_coefficients(order)])

    def d(self, axis) -> Jet:
        """Jet of the first partial along ``axis``; order drops by one."""
        if self.order == 0:
            raise OrderExceeded("cannot differentiate an order-0 jet")
        axis = VARIABLES.index(axis) if isinstance(axis, str) else axis
        src, fac = table(self.order).deriv[axis]
        return Jet(self.order - 1, self.c[src] * fac)

    # arithmetic -----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.order == self.order:
                return self, other
            m = min(self.order, other.order)
            return self.truncate(m), other.truncate(m)
        return self, Jet.constant(float(other), self.order)

    def __add__(self, other):
        if not isinstance(other, Jet):
            c = self.c.copy()
            c[0] += other
            return Jet(self.order, c)
        a, b = self._coerce(other)
        return Jet(a.order, a.c + b.c)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Jet):
            c = self.c.copy()
            c[0] -= other
            return Jet(self.order, c)
        a, b = self._coerce(other)
        return Jet(a.order, a.c - b.c)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet(self.order, -self.c)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.order, self.c * float(other))
        a, b = self._coerce(other)
        t = table(a.order)
        return Jet(a.order, kernels.mul(a.c, b.c, t.ptr, t.I, t.J))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = float(other)
            if abs(other) <= DIV_FLOOR:
                raise DivisionNearZero(f"divisor {other!r} below floor {DIV_FLOOR}")
            return Jet(self.order, self.c / other)
        a, b = self._coerce(other)
        if abs(b.c[0]) <= DIV_FLOOR:
            raise DivisionNearZero(f"divisor value {b.c[0]!r} below floor {DIV_FLOOR}")
        t = table(a.order)
        return Jet(a.order, kernels.div(a.c, b.c, t.ptr, t.I, t.J, t.blocks))

    def __rtruediv__(self, other):
        return Jet.constant(float(other), self.order) / self

    def __pow__(self, n):
        return pow_int(self, n)

    def __repr__(self):
        return f"Jet(order={self.order}, value={self.value!r})"

    def __eq__(self, other):
        return isinstance(other, Jet) and other.order == self.order and np.array_equal(self.c, other.c)

    __hash__ = None


def seed_variable(which, value: float, order: int = DEFAULT_ORDER) -> Jet:
    return Jet.variable(which, value, order)


def seed_point(x: float, y: float, b: float, order: int = DEFAULT_ORDER):
    return (Jet.variable(0, x, order), Jet.variable(1, y, order), Jet.variable(2, b, order))


def arithmetic(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown operation {op!r}")


def partial(a: Jet, i: int, j: int, k: int) -> float:
    return a.partial(i, j, k)


# elementary functions ------------------------------------------------------


def compose(a: Jet, series) -> Jet:
    """Jet of ``g(a)`` given the univariate Taylor coefficients of ``g`` at ``a.value``."""
    coeffs = np.asarray(series, dtype=float)
    if a.order == 0:
        return Jet.constant(coeffs[0], 0)
    h = a.c.copy()
    h[0] = 0.0
    t = table(a.order)
    return Jet(a.order, kernels.horner(coeffs[: a.order + 1], h, t.ptr, t.I, t.J))


def _exp_series(v, n):
    e = math.exp(v)
    return [e / math.factorial(k) for k in range(n + 1)]


def _log_series(v, n):
    if not v > 0:
        raise DomainError("log", v)
    return [math.log(v)] + [(-1) ** (k + 1) / (k * v**k) for k in range(1, n + 1)]


def _sin_series(v, n):
    s, c = math.sin(v), math.cos(v)
    cyc = (s, c, -s, -c)
    return [cyc[k % 4] / math.factorial(k) for k in range(n + 1)]


def _cos_series(v, n):
    s, c = math.sin(v), math.cos(v)
    cyc = (c, -s, -c, s)
    return [cyc[k % 4] / math.factorial(k) for k in range(n + 1)]


def _binomial_series(v, power, n):
    # (v + t)^power with generalized binomial coefficients
    out = []
    coef = 1.0
    for k in range(n + 1):
        if k > 0:
            coef *= (power - k + 1) / k
        if coef == 0.0:
            out.append(0.0)
        else:
            out.append(coef * v ** (power - k))
    return out


def _atan_series(v, n):
    # atan'(v + t) = 1 / (d0 + d1 t + t^2)
    d0, d1 = 1.0 + v * v, 2.0 * v
    s = [1.0 / d0]
    for k in range(1, n):
        prev2 = s[k - 2] if k >= 2 else 0.0
        s.append(-(d1 * s[k - 1] + prev2) / d0)
    return [math.atan(v)] + [s[k - 1] / k for k in range(1, n + 1)]


def exp(a: Jet) -> Jet:
    return compose(a, _exp_series(a.value, a.order))


def log(a: Jet) -> Jet:
    return compose(a, _log_series(a.value, a.order))


def sin(a: Jet) -> Jet:
    return compose(a, _sin_series(a.value, a.order))


def cos(a: Jet) -> Jet:
    return compose(a, _cos_series(a.value, a.order))


def tan(a: Jet) -> Jet:
    if abs(math.cos(a.value)) <= 1e-12:
        raise DomainError("tan", a.value)
    return sin(a) / cos(a)


def sqrt(a: Jet) -> Jet:
    v = a.value
    if not v > 0:
        raise DomainError("sqrt", v)
    root = math.sqrt(v)
    return compose(a, [root * c / v**k for k, c in enumerate(_binomial_series(1.0, 0.5, a.order))])


def atan(a: Jet) -> Jet:
    return compose(a, _atan_series(a.value, a.order))


def atan2(y: Jet, x: Jet) -> Jet:
    """Jet of the polar angle of ``(x, y)``; value in (-pi, pi]."""
    x0, y0 = x.value, y.value
    if x0 == 0.0 and y0 == 0.0:
        raise DomainError("atan2", (y0, x0))
    theta = math.atan2(y0, x0)
    c, s = math.cos(theta), math.sin(theta)
    # rotate so the expansion point sits on the positive axis
    u = x * c + y * s
    v = y * c - x * s
    angle = atan(v / u)
    c = angle.c.copy()
    c[0] = theta
    return Jet(angle.order, c)


def pow_int(a: Jet, n) -> Jet:
    if isinstance(n, float):
        if not n.is_integer():
            raise DomainError("pow", n)
        n = int(n)
    if n == 0:
        return Jet.constant(1.0, a.order)
    if n == 1:
        return a
    if n < 0 and abs(a.value) <= DIV_FLOOR:
        raise DivisionNearZero(f"negative power of {a.value!r}")
    return compose(a, _binomial_series(a.value, n, a.order))


ELEMENTARY = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "sqrt": sqrt,
    "atan": atan,
    "exp": exp,
    "log": log,
}


def elementary(a: Jet, fn: str, other=None) -> Jet:
    """Apply an elementary function by name; ``atan2`` takes ``(a=y, other=x)``."""
    if fn == "atan2":
        return atan2(a, other)
    if fn == "pow":
        return pow_int(a, other)
    try:
        f = ELEMENTARY[fn]
    except KeyError:
        raise ValueError(f"unknown function {fn!r}") from None
    return f(a)
