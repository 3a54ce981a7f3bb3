"""Finite Grassmann algebra with real (or array, or dual-number) coefficients.

Pair ``i`` carries two odd generators, ``eta_i`` with index ``2i`` and
``xi_i`` with index ``2i + 1``. A basis monomial is the product of its
generators in increasing index order, so the top monomial is
``eta_1 xi_1 eta_2 xi_2 ...`` with sign ``+1``. Monomials are stored as
bitmasks; a supernumber is a mapping ``mask -> coefficient`` holding only
the structurally non-zero terms.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_PAIRS = 4


class GrassmannError(ValueError):
    pass


@lru_cache(maxsize=None)
def _swap_sign(a: int, b: int) -> int:
    """Sign of reordering ``mono(a) * mono(b)`` into ascending order (disjoint masks)."""
    n = 0
    bb = b
    while bb:
        low = bb & -bb
        n += bin(a & ~((low << 1) - 1)).count("1")
        bb ^= low
    return -1 if n & 1 else 1


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _is_zero(c) -> bool:
    return isinstance(c, (int, float)) and c == 0


class Dual:
    """First-order forward-mode number: value ``v`` and gradient ``g`` (leading axis)."""

    __slots__ = ("v", "g")
    __array_ufunc__ = None

    def __init__(self, v, g):
        self.v = v
        self.g = g

    @classmethod
    def variable(cls, value, index: int, n: int) -> "Dual":
        g = np.zeros((n,) + np.shape(value))
        g[index] = 1.0
        return cls(value, g)

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v + o.v, self.g + o.g)
        return Dual(self.v + o, self.g)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.v, -self.g)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v * o.v, self.g * o.v + self.v * o.g)
        return Dual(self.v * o, self.g * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            return Dual(self.v / o.v, (self.g * o.v - self.v * o.g) / (o.v * o.v))
        return Dual(self.v / o, self.g / o)

    def __rtruediv__(self, o):
        return Dual(o / self.v, -o * self.g / (self.v * self.v))

    def __repr__(self):
        return f"Dual({self.v!r}, {self.g!r})"


def value(c):
    return c.v if isinstance(c, Dual) else c


def tangent(c, k: int):
    return c.g[k] if isinstance(c, Dual) else 0.0


class Analytic:
    """A scalar function with closed-form derivatives of every order.

    ``derivs(x, k)`` returns ``[f(x), f'(x), ..., f^(k)(x)]`` for float or
    array ``x``. Calling the object on a :class:`Dual` propagates one
    derivative, on a :class:`Supernumber` it Taylor-expands about the body.
    """

    def __init__(self, name: str, derivs: Callable, domain: Callable | None = None):
        self.name = name
        self._derivs = derivs
        self._domain = domain

    def derivs(self, x, k: int):
        if isinstance(x, Dual):
            d = self._derivs(x.v, k + 1)
            return [Dual(d[j], d[j + 1] * x.g) for j in range(k + 1)]
        return self._derivs(x, k)

    def check_domain(self, x) -> None:
        if self._domain is not None and not np.all(self._domain(value(x))):
            raise GrassmannError(f"{self.name}: body outside the domain")

    def __call__(self, x):
        if isinstance(x, Supernumber):
            return apply_analytic(self, x)
        self.check_domain(x)
        return self.derivs(x, 0)[0]

    def __repr__(self):
        return f"Analytic({self.name})"


def _exp_d(x, k):
    e = np.exp(x)
    return [e] * (k + 1)


def _cosh_d(x, k):
    c, s = np.cosh(x), np.sinh(x)
    return [c if j % 2 == 0 else s for j in range(k + 1)]


def _sinh_d(x, k):
    c, s = np.cosh(x), np.sinh(x)
    return [s if j % 2 == 0 else c for j in range(k + 1)]


def _power_d(p):
    def d(x, k):
        out = []
        coef = 1.0
        for j in range(k + 1):
            out.append(coef * np.power(x, p - j))
            coef *= p - j
        return out
    return d


def _log_d(x, k):
    out = [np.log(x)]
    for j in range(1, k + 1):
        out.append((-1) ** (j - 1) * math.factorial(j - 1) * np.power(x, -float(j)))
    return out


exp = Analytic("exp", _exp_d)
cosh = Analytic("cosh", _cosh_d)
sinh = Analytic("sinh", _sinh_d)
sqrt = Analytic("sqrt", _power_d(0.5), lambda x: np.asarray(x) > 0)
reciprocal = Analytic("reciprocal", _power_d(-1.0), lambda x: np.asarray(x) != 0)
log = Analytic("log", _log_d, lambda x: np.asarray(x) > 0)


class Supernumber:
    """Element of the Grassmann algebra on ``m`` generator pairs."""

    __slots__ = ("m", "c")

    def __init__(self, m: int, coeffs=None):
        if not 0 <= m <= MAX_PAIRS:
            raise GrassmannError(f"at most {MAX_PAIRS} generator pairs supported, got {m}")
        self.m = m
        self.c = {k: v for k, v in (coeffs or {}).items() if not _is_zero(v)}

    # constructors
    @classmethod
    def const(cls, m: int, value) -> "Supernumber":
        return cls(m, {0: value})

    @classmethod
    def generator(cls, m: int, index: int) -> "Supernumber":
        if not 0 <= index < 2 * m:
            raise GrassmannError(f"generator index {index} out of range")
        return cls(m, {1 << index: 1.0})

    @classmethod
    def eta(cls, m: int, i: int) -> "Supernumber":
        return cls.generator(m, 2 * i)

    @classmethod
    def xi(cls, m: int, i: int) -> "Supernumber":
        return cls.generator(m, 2 * i + 1)

    @property
    def n_generators(self) -> int:
        return 2 * self.m

    @property
    def full_mask(self) -> int:
        return (1 << (2 * self.m)) - 1

    def _lift(self, o) -> "Supernumber":
        if isinstance(o, Supernumber):
            if o.m != self.m:
                raise GrassmannError(f"mismatched algebras: m={self.m} vs m={o.m}")
            return o
        return Supernumber.const(self.m, o)

    # arithmetic
    def __add__(self, o):
        o = self._lift(o)
        out = dict(self.c)
        for k, v in o.c.items():
            out[k] = out[k] + v if k in out else v
        return Supernumber(self.m, out)

    __radd__ = __add__

    def __neg__(self):
        return Supernumber(self.m, {k: -v for k, v in self.c.items()})

    def __sub__(self, o):
        return self + (-self._lift(o))

    def __rsub__(self, o):
        return self._lift(o) - self

    def __mul__(self, o):
        if not isinstance(o, Supernumber):
            if _is_zero(o):
                return Supernumber(self.m)
            return Supernumber(self.m, {k: v * o for k, v in self.c.items()})
        o = self._lift(o)
        out: dict = {}
        for a, ca in self.c.items():
            for b, cb in o.c.items():
                if a & b:
                    continue
                term = ca * cb
                if _swap_sign(a, b) < 0:
                    term = -term
                k = a | b
                out[k] = out[k] + term if k in out else term
        return Supernumber(self.m, out)

    def __rmul__(self, o):
        return self * o

    def __truediv__(self, o):
        if isinstance(o, Supernumber):
            return self * reciprocal(o)
        return self * (1.0 / o)

    def __rtruediv__(self, o):
        return reciprocal(self) * o

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise GrassmannError("only non-negative integer powers")
        out = Supernumber.const(self.m, 1.0)
        for _ in range(k):
            out = out * self
        return out

    # structure
    @property
    def body(self):
        return self.c.get(0, 0.0)

    @property
    def soul(self) -> "Supernumber":
        return Supernumber(self.m, {k: v for k, v in self.c.items() if k})

    @property
    def top(self):
        return self.c.get(self.full_mask, 0.0)

    def is_even(self) -> bool:
        return all(_popcount(k) % 2 == 0 for k in self.c)

    def is_odd(self) -> bool:
        return all(_popcount(k) % 2 == 1 for k in self.c)

    def parity(self) -> int:
        if self.is_even():
            return 0
        if self.is_odd():
            return 1
        raise GrassmannError("mixed parity")

    def even_part(self) -> "Supernumber":
        return Supernumber(self.m, {k: v for k, v in self.c.items() if _popcount(k) % 2 == 0})

    def odd_part(self) -> "Supernumber":
        return Supernumber(self.m, {k: v for k, v in self.c.items() if _popcount(k) % 2 == 1})

    def coefficient(self, mask: int):
        return self.c.get(mask, 0.0)

    def map(self, f: Callable) -> "Supernumber":
        return Supernumber(self.m, {k: f(v) for k, v in self.c.items()})

    def values(self) -> "Supernumber":
        """Strip dual parts from the coefficients."""
        return self.map(value)

    def tangent(self, k: int) -> "Supernumber":
        return Supernumber(self.m, {mask: tangent(v, k) for mask, v in self.c.items()})

    def left_derivative(self, index: int) -> "Supernumber":
        """``d/dg`` acting from the left: ``d(g F) = F`` for ``F`` free of ``g``."""
        bit = 1 << index
        out = {}
        for k, v in self.c.items():
            if k & bit:
                before = _popcount(k & (bit - 1))
                out[k ^ bit] = -v if before & 1 else v
        return Supernumber(self.m, out)

    def d_eta(self, i: int) -> "Supernumber":
        return self.left_derivative(2 * i)

    def d_xi(self, i: int) -> "Supernumber":
        return self.left_derivative(2 * i + 1)

    def allclose(self, o, atol: float = 1e-12, rtol: float = 0.0) -> bool:
        o = self._lift(o)
        for k in set(self.c) | set(o.c):
            a, b = value(self.c.get(k, 0.0)), value(o.c.get(k, 0.0))
            if not np.allclose(a, b, atol=atol, rtol=rtol):
                return False
        return True

    def max_abs_diff(self, o) -> float:
        o = self._lift(o)
        worst = 0.0
        for k in set(self.c) | set(o.c):
            a, b = value(self.c.get(k, 0.0)), value(o.c.get(k, 0.0))
            worst = max(worst, float(np.max(np.abs(np.asarray(a) - np.asarray(b)))))
        return worst

    def monomial_name(self, mask: int, names: Sequence[str] = ("eta", "xi")) -> str:
        parts = []
        for g in range(2 * self.m):
            if mask >> g & 1:
                parts.append(f"{names[g % 2]}{g // 2 + 1}")
        return " ".join(parts) or "1"

    def pretty(self, names: Sequence[str] = ("eta", "xi"), precision: int = 12) -> str:
        """Ordered monomial listing: by degree, then by mask."""
        keys = sorted(self.c, key=lambda k: (_popcount(k), k))
        lines = []
        for k in keys:
            v = value(self.c[k])
            if np.ndim(v) == 0:
                lines.append(f"{float(v):+.{precision}g} {self.monomial_name(k, names)}")
            else:
                lines.append(f"array{np.shape(v)} {self.monomial_name(k, names)}")
        return "\n".join(lines) if lines else "0"

    def __repr__(self):
        return f"Supernumber(m={self.m}, {self.pretty(precision=6)!r})"


def pair_monomial(m: int, I: set, J: set) -> Supernumber:
    """``prod_{I&J} eta_i xi_i * prod_{I-J} xi_i * prod_{J-I} eta_j`` (vertex order)."""
    out = Supernumber.const(m, 1.0)
    for i in sorted(I & J):
        out = out * Supernumber.eta(m, i) * Supernumber.xi(m, i)
    for i in sorted(I - J):
        out = out * Supernumber.xi(m, i)
    for j in sorted(J - I):
        out = out * Supernumber.eta(m, j)
    return out


def coefficient_IJ(F: Supernumber, I: set, J: set):
    """Coefficient ``F_{I,J}`` of the expansion in the ``(eta xi)_{I,J}`` basis."""
    mono = pair_monomial(F.m, set(I), set(J))
    (mask, sign), = mono.c.items()
    return F.coefficient(mask) * sign


def apply_analytic(f: Analytic | Callable, arg: Supernumber) -> Supernumber:
    """``f(body) + sum_k f^(k)(body)/k! soul^k`` for an even argument."""
    if not arg.is_even():
        raise GrassmannError("analytic functions apply only to even supernumbers")
    body = arg.body
    if isinstance(f, Analytic):
        f.check_domain(body)
        derivs = f.derivs(body, arg.m)
    else:
        derivs = f(body, arg.m)
    soul = arg.soul
    out = Supernumber.const(arg.m, derivs[0])
    power = Supernumber.const(arg.m, 1.0)
    for k in range(1, arg.m + 1):
        power = power * soul
        if not power.c:
            break
        out = out + power * (derivs[k] / math.factorial(k))
    return out


def mul(a: Supernumber, b: Supernumber) -> Supernumber:
    return a * b


def random_supernumber(m: int, rng, parity: int | None = None, scale: float = 1.0) -> Supernumber:
    coeffs = {}
    for k in range(1 << (2 * m)):
        if parity is not None and _popcount(k) % 2 != parity:
            continue
        coeffs[k] = float(rng.normal(scale=scale))
    return Supernumber(m, coeffs)
