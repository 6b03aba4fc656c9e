"""Truncated multivariate Taylor arithmetic ("jets") up to order 4.

A jet stores Taylor-normalized coefficients ``c_alpha = d^alpha f / alpha!`` in
a dense vector indexed by graded-lexicographic rank, so a product is a plain
Cauchy convolution and ``partial`` multiplies back by ``alpha!``.  Per
``(nvars, order)`` the index tables are built once and cached.

The elementary functions accept plain floats as well as jets, which lets the
expression evaluator share one code path for real and jet semantics.
"""
from __future__ import annotations

import math
from functools import lru_cache
from numbers import Real
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, JetError

MAX_ORDER = 4

MultiIndex = tuple[int, ...]


def graded_lex_key(alpha: Sequence[int]) -> tuple:
    """Sort key: total degree first, then lexicographic with x0 dominant."""
    return (sum(alpha), tuple(-a for a in alpha))


def _compositions(deg: int, nvars: int) -> Iterable[MultiIndex]:
    if nvars == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _compositions(deg - first, nvars - 1):
            yield (first,) + rest


class _Tables:
    """Index tables shared by all jets of one shape."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        monos: list[MultiIndex] = []
        self.offsets = [0]
        for deg in range(order + 1):
            monos.extend(_compositions(deg, nvars))
            self.offsets.append(len(monos))
        self.monos = tuple(monos)
        self.size = len(monos)
        self.index = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos], dtype=np.int64)
        self.factorial = np.array(
            [math.prod(math.factorial(a) for a in m) for m in monos], dtype=float)

        ii, jj, kk = [], [], []
        index = self.index
        for i, a in enumerate(monos):
            room = order - sum(a)
            for j in range(self.offsets[room + 1]):
                b = monos[j]
                ii.append(i)
                jj.append(j)
                kk.append(index[tuple(x + y for x, y in zip(a, b))])
        self.mul_i = np.array(ii, dtype=np.int64)
        self.mul_j = np.array(jj, dtype=np.int64)
        self.mul_k = np.array(kk, dtype=np.int64)

        # positions of second-degree monomials as (row, col) pairs
        self.hess_pairs = []
        if order >= 2:
            for r in range(self.offsets[2], self.offsets[3]):
                m = monos[r]
                nz = [v for v, e in enumerate(m) for _ in range(e)]
                self.hess_pairs.append((r, nz[0], nz[1]))

    @lru_cache(maxsize=None)
    def derivative_map(self, var: int) -> tuple[np.ndarray, np.ndarray]:
        """Source ranks and factors producing d/dx_var as an order-1 lower jet."""
        low = tables(self.nvars, self.order - 1)
        src = np.empty(low.size, dtype=np.int64)
        fac = np.empty(low.size, dtype=float)
        for r, m in enumerate(low.monos):
            up = list(m)
            up[var] += 1
            src[r] = self.index[tuple(up)]
            fac[r] = up[var]
        return src, fac


@lru_cache(maxsize=None)
def tables(nvars: int, order: int) -> _Tables:
    return _Tables(nvars, order)


class Jet:
    """Immutable truncated Taylor expansion of a scalar function."""

    __slots__ = ("nvars", "order", "c")
    __array_ufunc__ = None  # numpy scalars defer to our reflected operators

    def __init__(self, nvars: int, order: int, c: np.ndarray):
        self.nvars = nvars
        self.order = order
        self.c = c

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value: float, nvars: int, order: int) -> "Jet":
        _check_shape(nvars, order)
        c = np.zeros(tables(nvars, order).size)
        c[0] = value
        return cls(nvars, order, c)

    @classmethod
    def from_coeffs(cls, coeffs: dict, nvars: int, order: int) -> "Jet":
        _check_shape(nvars, order)
        tab = tables(nvars, order)
        c = np.zeros(tab.size)
        for alpha, v in coeffs.items():
            alpha = _full_index(alpha, nvars)
            if sum(alpha) > order:
                raise JetError(f"multi-index {alpha} exceeds order {order}")
            c[tab.index[alpha]] = v
        return cls(nvars, order, c)

    # inspection ---------------------------------------------------------
    @property
    def value(self) -> float:
        return float(self.c[0])

    @property
    def coeffs(self) -> dict[MultiIndex, float]:
        """Nonzero Taylor coefficients keyed by multi-index."""
        monos = tables(self.nvars, self.order).monos
        return {monos[i]: float(v) for i, v in enumerate(self.c) if v != 0.0}

    def coeff(self, alpha: Sequence[int]) -> float:
        alpha = _full_index(alpha, self.nvars)
        if sum(alpha) > self.order:
            raise JetError(f"|alpha| = {sum(alpha)} exceeds jet order {self.order}")
        return float(self.c[tables(self.nvars, self.order).index[alpha]])

    def partial(self, alpha: Sequence[int]) -> float:
        alpha = _full_index(alpha, self.nvars)
        return math.prod(math.factorial(a) for a in alpha) * self.coeff(alpha)

    def gradient(self) -> np.ndarray:
        if self.order < 1:
            raise JetError("gradient needs order >= 1")
        return self.c[1:1 + self.nvars].copy()

    def hessian(self) -> np.ndarray:
        if self.order < 2:
            raise JetError("hessian needs order >= 2")
        out = np.zeros((self.nvars, self.nvars))
        for r, i, j in tables(self.nvars, self.order).hess_pairs:
            if i == j:
                out[i, i] = 2.0 * self.c[r]
            else:
                out[i, j] = out[j, i] = self.c[r]
        return out

    # structural ----------------------------------------------------------
    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetError("cannot raise the order of a jet")
        if order == self.order:
            return self
        return Jet(self.nvars, order, self.c[:tables(self.nvars, order).size].copy())

    def d(self, var: int) -> "Jet":
        """Partial derivative in variable ``var``; the order drops by one."""
        if not 0 <= var < self.nvars:
            raise JetError(f"variable index {var} out of range")
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        src, fac = tables(self.nvars, self.order).derivative_map(var)
        return Jet(self.nvars, self.order - 1, self.c[src] * fac)

    # arithmetic ----------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(self.nvars, self.order, -self.c)

    def __pos__(self) -> "Jet":
        return self

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = _align(self, other)
            return Jet(a.nvars, a.order, a.c + b.c)
        if isinstance(other, (Real, np.floating)):
            c = self.c.copy()
            c[0] += other
            return Jet(self.nvars, self.order, c)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = _align(self, other)
            return Jet(a.nvars, a.order, a.c - b.c)
        if isinstance(other, (Real, np.floating)):
            c = self.c.copy()
            c[0] -= other
            return Jet(self.nvars, self.order, c)
        return NotImplemented

    def __rsub__(self, other) -> "Jet":
        if isinstance(other, (Real, np.floating)):
            c = -self.c
            c[0] += other
            return Jet(self.nvars, self.order, c)
        return NotImplemented

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return mul(self, other)
        if isinstance(other, (Real, np.floating)):
            return Jet(self.nvars, self.order, self.c * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return div(self, other)
        if isinstance(other, (Real, np.floating)):
            if other == 0:
                raise DomainError("division by zero")
            return Jet(self.nvars, self.order, self.c / other)
        return NotImplemented

    def __rtruediv__(self, other) -> "Jet":
        if isinstance(other, (Real, np.floating)):
            return reciprocal(self) * float(other)
        return NotImplemented

    def __pow__(self, e) -> "Jet":
        return power(self, e)

    def __repr__(self) -> str:
        return f"Jet(nvars={self.nvars}, order={self.order}, {self.coeffs})"


def _check_shape(nvars: int, order: int) -> None:
    if nvars < 1:
        raise JetError("jets need at least one variable")
    if not 0 <= order <= MAX_ORDER:
        raise JetError(f"jet order must lie in [0, {MAX_ORDER}]")


def _full_index(alpha: Sequence[int], nvars: int) -> MultiIndex:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) == 0:
        return (0,) * nvars
    if len(alpha) != nvars or any(a < 0 for a in alpha):
        raise JetError(f"multi-index {alpha} does not fit {nvars} variables")
    return alpha


def _align(a: Jet, b: Jet) -> tuple[Jet, Jet]:
    if a.nvars != b.nvars:
        raise JetError("jets over different variable counts")
    if a.order == b.order:
        return a, b
    k = min(a.order, b.order)
    return a.truncate(k), b.truncate(k)


def seed_variable(index: int, value: float, nvars: int, order: int) -> Jet:
    """Jet of the coordinate function x_index expanded at ``value``."""
    _check_shape(nvars, order)
    if not 0 <= index < nvars:
        raise JetError(f"variable index {index} out of range for {nvars} variables")
    c = np.zeros(tables(nvars, order).size)
    c[0] = value
    if order >= 1:
        c[1 + index] = 1.0
    return Jet(nvars, order, c)


def seed_point(values: Sequence[float], order: int) -> list[Jet]:
    """Coordinate jets for every component of ``values``."""
    n = len(values)
    return [seed_variable(i, float(v), n, order) for i, v in enumerate(values)]


def add(a: Jet, b: Jet) -> Jet:
    return a + b


def sub(a: Jet, b: Jet) -> Jet:
    return a - b


def mul(a: Jet, b: Jet) -> Jet:
    a, b = _align(a, b)
    tab = tables(a.nvars, a.order)
    if a.order == 0:
        return Jet(a.nvars, 0, a.c * b.c)
    c = np.bincount(tab.mul_k, weights=a.c[tab.mul_i] * b.c[tab.mul_j], minlength=tab.size)
    return Jet(a.nvars, a.order, c)


def div(a: Jet, b: Jet) -> Jet:
    return mul(a, reciprocal(b))


def _compose(a: Jet, derivs: Sequence[float]) -> Jet:
    """sum_k derivs[k] * (a - a0)^k, with derivs[k] = f^(k)(a0) / k!."""
    h = Jet(a.nvars, a.order, a.c.copy())
    h.c[0] = 0.0
    out = Jet.constant(derivs[a.order], a.nvars, a.order)
    for k in range(a.order - 1, -1, -1):
        out = mul(out, h) + derivs[k]
    return out


def reciprocal(a: Jet | float):
    if not isinstance(a, Jet):
        if a == 0:
            raise DomainError("division by zero")
        return 1.0 / a
    a0 = a.value
    if a0 == 0.0:
        raise DomainError("division by a jet with zero constant term")
    inv = 1.0 / a0
    return _compose(a, [(-1) ** k * inv ** (k + 1) for k in range(a.order + 1)])


def exp(a):
    if not isinstance(a, Jet):
        return math.exp(a)
    e = math.exp(a.value)
    return _compose(a, [e / math.factorial(k) for k in range(a.order + 1)])


def log(a):
    a0 = a.value if isinstance(a, Jet) else a
    if not a0 > 0:
        raise DomainError(f"log of non-positive value {a0!r}")
    if not isinstance(a, Jet):
        return math.log(a)
    d = [math.log(a0)] + [(-1) ** (k - 1) / (k * a0 ** k) for k in range(1, a.order + 1)]
    return _compose(a, d)


def sin(a):
    if not isinstance(a, Jet):
        return math.sin(a)
    s, c = math.sin(a.value), math.cos(a.value)
    cyc = [s, c, -s, -c]
    return _compose(a, [cyc[k % 4] / math.factorial(k) for k in range(a.order + 1)])


def cos(a):
    if not isinstance(a, Jet):
        return math.cos(a)
    s, c = math.sin(a.value), math.cos(a.value)
    cyc = [c, -s, -c, s]
    return _compose(a, [cyc[k % 4] / math.factorial(k) for k in range(a.order + 1)])


def _binomial_series(a0: float, e: float, order: int) -> list[float]:
    out, coef = [], 1.0
    for k in range(order + 1):
        out.append(coef * a0 ** (e - k))
        coef *= (e - k) / (k + 1)
    return out


def sqrt(a):
    a0 = a.value if isinstance(a, Jet) else a
    if isinstance(a, Jet):
        if not a0 > 0:
            raise DomainError(f"sqrt jet needs a positive constant term, got {a0!r}")
        return _compose(a, _binomial_series(a0, 0.5, a.order))
    if a0 < 0:
        raise DomainError(f"sqrt of negative value {a0!r}")
    return math.sqrt(a0)


def pow_real(a, e: float):
    """a**e for real e: integers by repeated squaring, others via exp(e log a)."""
    return power(a, e)


def power(a, e):
    if isinstance(e, Jet):
        return exp(e * log(a))
    e = float(e)
    if e.is_integer():
        k = int(e)
        if not isinstance(a, Jet):
            if a == 0 and k < 0:
                raise DomainError("zero raised to a negative power")
            return float(a) ** k
        if k < 0:
            return reciprocal(_int_power(a, -k))
        return _int_power(a, k)
    if not isinstance(a, Jet):
        if a < 0:
            raise DomainError(f"negative base {a!r} with non-integer exponent")
        if a == 0:
            return 0.0 if e > 0 else math.inf
        return math.exp(e * math.log(a))
    return exp(log(a) * e)


def _int_power(a: Jet, k: int) -> Jet:
    result = Jet.constant(1.0, a.nvars, a.order)
    base = a
    while k:
        if k & 1:
            result = mul(result, base)
        k >>= 1
        if k:
            base = mul(base, base)
    return result


ELEMENTARY = {
    "exp": exp,
    "log": log,
    "sin": sin,
    "cos": cos,
    "sqrt": sqrt,
}


def elementary(name: str, a, exponent: float | None = None):
    """Dispatch by name; ``pow_real`` takes the exponent as a keyword."""
    if name == "pow_real":
        if exponent is None:
            raise JetError("pow_real needs an exponent")
        return pow_real(a, exponent)
    try:
        fn = ELEMENTARY[name]
    except KeyError:
        raise JetError(f"unknown elementary function {name!r}") from None
    return fn(a)


def value_of(a) -> float:
    return a.value if isinstance(a, Jet) else float(a)


def solve(matrix: Sequence[Sequence], rhs: Sequence) -> list:
    """Gaussian elimination over jets (or floats) with constant-term pivoting."""
    m = len(rhs)
    a = [list(row) for row in matrix]
    b = list(rhs)
    for col in range(m):
        piv = max(range(col, m), key=lambda r: abs(value_of(a[r][col])))
        if value_of(a[piv][col]) == 0.0:
            raise DomainError("singular jet matrix")
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            b[col], b[piv] = b[piv], b[col]
        inv = reciprocal(a[col][col])
        for r in range(col + 1, m):
            f = a[r][col] * inv
            if isinstance(f, Jet) or f != 0.0:
                for k in range(col + 1, m):
                    a[r][k] = a[r][k] - f * a[col][k]
                b[r] = b[r] - f * b[col]
        a[col][col] = inv
    x = [None] * m
    for r in range(m - 1, -1, -1):
        acc = b[r]
        for k in range(r + 1, m):
            acc = acc - a[r][k] * x[k]
        x[r] = acc * a[r][r]
    return x
