"""Forward-mode dual numbers and the scalar primitives shared by every evaluator.

A :class:`Dual` carries a value and a directional derivative.  Both parts may
themselves be duals, which gives truncated second-order Taylor pairs::

    x = Dual(Dual(x0, v), Dual(v, 0.0))
    f(x).der.der  ->  v^T (D^2 f) v

The primitive functions below (``tanh``, ``exp``, ...) accept plain floats or
duals and never raise on overflow or out-of-domain input for floats: the IEEE
result (``inf``/``nan``) is returned and the caller decides what to do with it.
"""

from __future__ import annotations

import math


class ExprDomainError(ValueError):
    """Raised when an operation is undefined for real arithmetic (e.g. (-1)^0.5)."""


class Dual:
    __slots__ = ("val", "der")

    def __init__(self, val, der=0.0):
        self.val = val
        self.der = der

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.der!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, self.der)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.der)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.val * other.der + self.der * other.val)
        return Dual(self.val * other, self.der * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = div(self.val, other.val)
            return Dual(q, div(self.der - q * other.der, other.val))
        return Dual(div(self.val, other), div(self.der, other))

    def __rtruediv__(self, other):
        q = div(other, self.val)
        return Dual(q, div(-q * self.der, self.val))


def real_part(a) -> float:
    """Innermost value of a (possibly nested) dual."""
    while isinstance(a, Dual):
        a = a.val
    return a


def div(a, b):
    if isinstance(a, Dual) or isinstance(b, Dual):
        return a / b if isinstance(a, Dual) else Dual(a) / b
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _is_integral(p) -> bool:
    return not isinstance(p, Dual) and math.isfinite(p) and float(p).is_integer()


def power(a, p):
    """``a ^ p``.  Non-integer exponents require a positive base."""
    if _is_integral(p):
        n = int(p)
        if isinstance(a, Dual):
            if n == 0:
                return Dual(power(a.val, 0.0), 0.0 * a.der)
            return Dual(power(a.val, float(n)), n * power(a.val, float(n - 1)) * a.der)
        try:
            return float(a) ** n
        except ZeroDivisionError:
            return math.inf if n % 2 == 0 or math.copysign(1.0, a) > 0 else -math.inf
        except OverflowError:
            return math.inf if n % 2 == 0 or a > 0 else -math.inf
    if real_part(a) <= 0.0:
        raise ExprDomainError(f"non-integer power of non-positive base: {real_part(a)!r}^{real_part(p)!r}")
    if isinstance(a, Dual) or isinstance(p, Dual):
        return exp(p * log(a))
    try:
        return float(a) ** float(p)
    except OverflowError:
        return math.inf


def exp(a):
    if isinstance(a, Dual):
        e = exp(a.val)
        return Dual(e, e * a.der)
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def log(a):
    if isinstance(a, Dual):
        return Dual(log(a.val), div(a.der, a.val))
    if a > 0:
        return math.log(a)
    if a == 0:
        return -math.inf
    return math.nan


def sqrt(a):
    if isinstance(a, Dual):
        s = sqrt(a.val)
        return Dual(s, div(a.der, 2.0 * s))
    return math.sqrt(a) if a >= 0 else math.nan


def tanh(a):
    if isinstance(a, Dual):
        t = tanh(a.val)
        return Dual(t, (1.0 - t * t) * a.der)
    return math.tanh(a)


def cosh(a):
    if isinstance(a, Dual):
        return Dual(cosh(a.val), sinh(a.val) * a.der)
    try:
        return math.cosh(a)
    except OverflowError:
        return math.inf


def sinh(a):
    if isinstance(a, Dual):
        return Dual(sinh(a.val), cosh(a.val) * a.der)
    try:
        return math.sinh(a)
    except OverflowError:
        return math.copysign(math.inf, a)


def sin(a):
    if isinstance(a, Dual):
        return Dual(sin(a.val), cos(a.val) * a.der)
    return math.sin(a) if math.isfinite(a) else math.nan


def cos(a):
    if isinstance(a, Dual):
        return Dual(cos(a.val), -sin(a.val) * a.der)
    return math.cos(a) if math.isfinite(a) else math.nan


def fabs(a):
    # derivative at 0 is taken from the right branch (+1)
    if isinstance(a, Dual):
        sign = -1.0 if real_part(a) < 0 else 1.0
        return Dual(fabs(a.val), sign * a.der)
    return abs(a)


def neg(a):
    return -a


UNARY_FUNCTIONS = {
    "tanh": tanh,
    "cosh": cosh,
    "sinh": sinh,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "sin": sin,
    "cos": cos,
    "abs": fabs,
}
