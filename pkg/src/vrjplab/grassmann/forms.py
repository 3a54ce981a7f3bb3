"""Forms: supernumber-valued functions of the real coordinates ``(x, y)``.

A :class:`SuperForm` wraps a function of a :class:`SuperSpins` context. The
context hands out the even coordinates ``x_i, y_i, z_i`` and the odd
generators ``xi_i, eta_i`` as supernumbers, so one form definition can be
evaluated at real points, at array batches of points, with dual-number
coefficients (for ``d/dx``, ``d/dy``), or after substituting another
coordinate system.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .algebra import Analytic, Dual, GrassmannError, Supernumber, apply_analytic, sqrt


class SuperSpins:
    """Per-vertex even coordinates ``x, y, z`` and odd ``xi, eta``."""

    def __init__(self, m: int, x, y, xi, eta, z=None):
        self.m = m
        self.x = list(x)
        self.y = list(y)
        self.xi = list(xi)
        self.eta = list(eta)
        if z is None:
            z = [sqrt(1.0 + self.tau(i, i)) for i in range(m)]
        self.z = list(z)

    def tau(self, i: int, j: int) -> Supernumber:
        return (self.x[i] * self.x[j] + self.y[i] * self.y[j]
                + self.xi[i] * self.eta[j] - self.eta[i] * self.xi[j])

    def dot(self, i: int, j: int) -> Supernumber:
        """Super inner product ``u_i . u_j``."""
        return self.tau(i, j) - self.z[i] * self.z[j]


def ambient_spins(m: int, x: Sequence, y: Sequence) -> SuperSpins:
    """Spins at the base point ``(x, y)``; entries may be floats, arrays or duals."""
    if len(x) != m or len(y) != m:
        raise GrassmannError(f"base point needs {m} x- and y-coordinates")
    return SuperSpins(
        m,
        [Supernumber.const(m, xi) for xi in x],
        [Supernumber.const(m, yi) for yi in y],
        [Supernumber.xi(m, i) for i in range(m)],
        [Supernumber.eta(m, i) for i in range(m)],
    )


class SuperForm:
    """A form on ``m`` vertices, defined by ``fn(spins) -> Supernumber``."""

    def __init__(self, m: int, fn: Callable[[SuperSpins], Supernumber], name: str = "F"):
        self.m = m
        self.fn = fn
        self.name = name

    def __call__(self, spins: SuperSpins) -> Supernumber:
        out = self.fn(spins)
        if not isinstance(out, Supernumber):
            out = Supernumber.const(spins.m, out)
        return out

    def at(self, x, y) -> Supernumber:
        return self(ambient_spins(self.m, x, y))

    def with_duals(self, x, y) -> Supernumber:
        """Evaluate with tangents: slot ``2i`` is ``d/dx_i``, ``2i+1`` is ``d/dy_i``."""
        n = 2 * self.m
        xs = [Dual.variable(float(x[i]), 2 * i, n) for i in range(self.m)]
        ys = [Dual.variable(float(y[i]), 2 * i + 1, n) for i in range(self.m)]
        return self(ambient_spins(self.m, xs, ys))

    def _binary(self, o, op, sym):
        if isinstance(o, SuperForm):
            if o.m != self.m:
                raise GrassmannError("forms on different vertex sets")
            return SuperForm(self.m, lambda s: op(self(s), o(s)), f"({self.name}{sym}{o.name})")
        return SuperForm(self.m, lambda s: op(self(s), o), f"({self.name}{sym}{o!r})")

    def __add__(self, o):
        return self._binary(o, lambda a, b: a + b, "+")

    __radd__ = __add__

    def __sub__(self, o):
        return self._binary(o, lambda a, b: a - b, "-")

    def __mul__(self, o):
        return self._binary(o, lambda a, b: a * b, "*")

    def __rmul__(self, o):
        return SuperForm(self.m, lambda s: o * self(s), f"({o!r}*{self.name})")

    def __neg__(self):
        return SuperForm(self.m, lambda s: -self(s), f"-{self.name}")

    def apply(self, f: Analytic) -> "SuperForm":
        return SuperForm(self.m, lambda s: apply_analytic(f, self(s)), f"{f.name}({self.name})")

    def pretty(self, x, y) -> str:
        return self.at(x, y).pretty()

    def __repr__(self):
        return f"SuperForm(m={self.m}, {self.name})"


def x_form(m: int, i: int) -> SuperForm:
    return SuperForm(m, lambda s: s.x[i], f"x{i + 1}")


def y_form(m: int, i: int) -> SuperForm:
    return SuperForm(m, lambda s: s.y[i], f"y{i + 1}")


def xi_form(m: int, i: int) -> SuperForm:
    return SuperForm(m, lambda s: s.xi[i], f"xi{i + 1}")


def eta_form(m: int, i: int) -> SuperForm:
    return SuperForm(m, lambda s: s.eta[i], f"eta{i + 1}")


def tau_form(m: int, i: int, j: int) -> SuperForm:
    return SuperForm(m, lambda s: s.tau(i, j), f"tau{i + 1}{j + 1}")


def z_form(m: int, i: int, point=None):
    """``z_i = sqrt(1 + x_i^2 + y_i^2 + 2 xi_i eta_i)``; evaluated if ``point`` is given."""
    F = SuperForm(m, lambda s: s.z[i], f"z{i + 1}")
    return F if point is None else F.at(*point)


def super_inner(m: int, i: int, j: int, point=None):
    F = SuperForm(m, lambda s: s.dot(i, j), f"u{i + 1}.u{j + 1}")
    return F if point is None else F.at(*point)


def apply_Q(F: SuperForm, point) -> Supernumber:
    """``QF`` at ``point = (x, y)``.

    ``Q = sum_i xi_i d/dx_i + eta_i d/dy_i + x_i d/deta_i - y_i d/dxi_i`` with
    Grassmann derivatives acting from the left.
    """
    x, y = (np.asarray(v, dtype=float) for v in point)
    m = F.m
    G = F.with_duals(x, y)
    vals = G.values()
    out = Supernumber(m)
    for i in range(m):
        out = out + Supernumber.xi(m, i) * G.tangent(2 * i)
        out = out + Supernumber.eta(m, i) * G.tangent(2 * i + 1)
        out = out + vals.d_eta(i) * float(x[i])
        out = out - vals.d_xi(i) * float(y[i])
    return out
