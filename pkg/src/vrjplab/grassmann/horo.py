"""Supersymmetric horospherical coordinates ``(t, s, psibar, psi)``.

``psi_i`` occupies the ``eta`` slot of pair ``i`` and ``psibar_i`` the ``xi``
slot, so ``eta = e^t psi`` and ``xi = e^t psibar`` keep the generator
ordering of the ambient algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .algebra import Dual, GrassmannError, Supernumber, cosh, exp, reciprocal, sinh, value
from .forms import SuperForm, SuperSpins
from .integrate import NonDecayError, SuperIntegral, superintegrate, QuadSpec


def psi(m: int, i: int) -> Supernumber:
    return Supernumber.eta(m, i)


def psibar(m: int, i: int) -> Supernumber:
    return Supernumber.xi(m, i)


def horo_susy_map(t, s, m: int = 1, i: int = 0):
    """``(x, y, z, xi, eta)`` of vertex ``i`` as supernumbers; ``t, s`` may be duals or arrays."""
    et = exp(t)
    quad = Supernumber.const(m, 0.5 * s * s) + psibar(m, i) * psi(m, i)
    x = Supernumber.const(m, sinh(t)) - quad * et
    y = Supernumber.const(m, et * s)
    z = Supernumber.const(m, cosh(t)) + quad * et
    return x, y, z, psibar(m, i) * et, psi(m, i) * et


def horo_spins(m: int, t: Sequence, s: Sequence) -> SuperSpins:
    parts = [horo_susy_map(t[i], s[i], m, i) for i in range(m)]
    return SuperSpins(m, [p[0] for p in parts], [p[1] for p in parts],
                      [p[3] for p in parts], [p[4] for p in parts], [p[2] for p in parts])


def _dual_spins(m: int, t, s, wrt: str = "s") -> SuperSpins:
    """Horospherical spins with tangents along ``s_i`` (or ``t_i``) in slot ``i``."""
    tt = [Dual.variable(float(v), i, m) if wrt == "t" else float(v) for i, v in enumerate(t)]
    ss = [Dual.variable(float(v), i, m) if wrt == "s" else float(v) for i, v in enumerate(s)]
    return horo_spins(m, tt, ss)


@dataclass
class IdentityReport:
    checks: dict = field(default_factory=dict)
    tol: float = 1e-6

    def record(self, name: str, err: float) -> None:
        self.checks[name] = max(self.checks.get(name, 0.0), float(err))

    @property
    def max_error(self) -> float:
        return max(self.checks.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


def verify_susy_horo_identities(points: Sequence, tol: float = 1e-6, step: float = 1e-5) -> IdentityReport:
    """Coefficient-wise checks of the substituted spins at each ``(t, s)`` point.

    Each point is a pair of equal-length sequences ``(t, s)`` (one entry per
    vertex, at most four vertices). Algebraic identities are checked exactly
    up to rounding; first ``s``-derivatives come from dual numbers, second
    derivatives from central differences of those.
    """
    rep = IdentityReport(tol=tol)
    for t, s in points:
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        m = len(t)
        sp = horo_spins(m, t, s)
        scale = 1.0 + float(np.max(np.exp(np.abs(t)) * (1 + s * s)))
        for i in range(m):
            rep.record("u.u=-1", (sp.dot(i, i) + 1.0).max_abs_diff(0.0) / scale**2)
            z_closed = (math.cosh(t[i]) + (0.5 * s[i] ** 2 + psibar(m, i) * psi(m, i)) * math.exp(t[i]))
            rep.record("z closed form", sp.z[i].max_abs_diff(z_closed) / scale)
            z_amb = (1.0 + sp.tau(i, i))
            rep.record("z^2 = 1 + tau", (sp.z[i] * sp.z[i]).max_abs_diff(z_amb) / scale**2)
            for j in range(m):
                if i == j:
                    continue
                e = math.exp(t[i] + t[j])
                closed = (math.cosh(t[i] - t[j]) + 0.5 * (s[i] - s[j]) ** 2 * e
                          + (psibar(m, i) - psibar(m, j)) * (psi(m, i) - psi(m, j)) * e)
                rep.record("-u_i.u_j closed form", (-sp.dot(i, j)).max_abs_diff(closed) / scale**2)

        ds = _dual_spins(m, t, s, "s")
        for i in range(m):
            rep.record("dz/ds = y", ds.z[i].tangent(i).max_abs_diff(ds.y[i].values()) / scale)
            rep.record("dy/ds = x + z", ds.y[i].tangent(i).max_abs_diff((ds.x[i] + ds.z[i]).values()) / scale)
            for j in range(m):
                if i == j:
                    continue
                lhs = ds.dot(i, j).tangent(i)
                rhs = (ds.y[j] * (ds.x[i] + ds.z[i]) - ds.y[i] * (ds.x[j] + ds.z[j])).values()
                rep.record("d(u_i.u_j)/ds_i", lhs.max_abs_diff(rhs) / scale**2)

        def first(si, fn, k):
            return fn(_dual_spins(m, t, si, "s")).tangent(k)

        for j in range(m):
            e_j = np.eye(m)[j] * step
            d2 = (first(s + e_j, lambda q: q.z[j], j) - first(s - e_j, lambda q: q.z[j], j)) * (0.5 / step)
            rep.record("d2z_j/ds_j^2 = x_j + z_j", d2.max_abs_diff((sp.x[j] + sp.z[j]).values()) / scale)
            rep.record("x_j + z_j = e^t_j", (sp.x[j] + sp.z[j]).max_abs_diff(math.exp(t[j])) / scale)
            for l in range(m):
                if l == j:
                    continue
                target = lambda q: -1.0 - q.dot(j, l)
                e_l = np.eye(m)[l] * step
                for i in range(m):
                    d2 = (first(s + e_l, target, i) - first(s - e_l, target, i)) * (0.5 / step)
                    if i == j:
                        expect = -math.exp(t[j] + t[l])
                    elif i == l:
                        expect = math.exp(t[j] + t[l])
                    else:
                        expect = 0.0
                    rep.record("d2(-1-u_j.u_l)/ds_i ds_l", d2.max_abs_diff(expect) / scale**2)
    return rep


def _det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    out = None
    for c in range(n):
        minor = [row[:c] + row[c + 1:] for row in M[1:]]
        term = M[0][c] * _det(minor)
        if c % 2:
            term = -term
        out = term if out is None else out + term
    return out


def _inverse(M):
    """Inverse of a small matrix with even (commuting) supernumber entries."""
    n = len(M)
    d = _det(M)
    if abs(value(d.body)) == 0:
        raise GrassmannError("singular block")
    inv_d = 1.0 / d
    if n == 1:
        return [[inv_d]]
    out = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(M) if k != i]
            cof = _det(minor)
            if (i + j) % 2:
                cof = -cof
            out[j][i] = cof * inv_d
    return out


def _matmul(A, B):
    return [[sum((A[i][k] * B[k][j] for k in range(1, len(B))), A[i][0] * B[0][j])
             for j in range(len(B[0]))] for i in range(len(A))]


def berezinian_matrix(t: float, s: float):
    """Blocks ``A, B, C, D`` of the single-vertex supermatrix.

    Rows: ``d/dt, d/ds, d/dpsi, d/dpsibar``; columns: ``x, y, eta, xi``.
    Grassmann derivatives act from the left.
    """
    m = 1
    cols_t = horo_susy_map(Dual.variable(t, 0, 2), Dual.variable(s, 1, 2), m)
    x, y, _, xi, eta = cols_t
    cols = [x, y, eta, xi]
    vals = [c.values() for c in cols]
    rows = [[c.tangent(0) for c in cols], [c.tangent(1) for c in cols],
            [v.d_eta(0) for v in vals], [v.d_xi(0) for v in vals]]
    A = [r[:2] for r in rows[:2]]
    B = [r[2:] for r in rows[:2]]
    C = [r[:2] for r in rows[2:]]
    D = [r[2:] for r in rows[2:]]
    return A, B, C, D


def superdeterminant(A, B, C, D) -> Supernumber:
    """``sdet M = det(A - B D^{-1} C) / det D``."""
    BDC = _matmul(_matmul(B, _inverse(D)), C)
    schur = [[A[i][j] - BDC[i][j] for j in range(len(A))] for i in range(len(A))]
    return _det(schur) / _det(D)


def verify_berezinian(points: Sequence[tuple[float, float]], tol: float = 1e-12) -> IdentityReport:
    """Check ``sdet M / z = e^{-t}`` in every Grassmann coefficient."""
    rep = IdentityReport(tol=tol)
    for t, s in points:
        A, B, C, D = berezinian_matrix(float(t), float(s))
        sdet = superdeterminant(A, B, C, D)
        z = horo_susy_map(float(t), float(s))[2]
        ratio = sdet / z
        rep.record("sdet M / z = e^-t", ratio.max_abs_diff(math.exp(-t)) * math.exp(t))
        rep.record("sdet M = e^-t z", sdet.max_abs_diff(z * math.exp(-t)) / z.body)
    return rep


def superintegrate_horo(F: SuperForm, t_box=(-10.0, 8.0), u_box=(-12.0, 12.0), n=(600, 400),
                        tol: float = 1e-8) -> SuperIntegral:
    """Single-vertex superintegral after substitution, ``int F~_top e^{-t} dt ds / (2 pi)``.

    Uses ``s = u e^{-t/2}`` so the Gaussian width in ``u`` does not depend on
    ``t``, then the trapezoid rule on a box in ``(t, u)``. The integrand must
    be negligible on the box edge.
    """
    if F.m != 1:
        raise GrassmannError("horospherical superintegration is implemented for one vertex")

    def dens(tg, ug):
        T, U = np.meshgrid(tg, ug, indexing="ij")
        S = U * np.exp(-0.5 * T)
        sp = horo_spins(1, [T.ravel()], [S.ravel()])
        with np.errstate(all="ignore"):
            top = np.broadcast_to(np.asarray(F(sp).top, dtype=float), T.size)
            return (top * np.exp(-1.5 * T.ravel())).reshape(T.shape) / (2 * math.pi)

    def rule(nt, nu):
        tg = np.linspace(*t_box, nt)
        ug = np.linspace(*u_box, nu)
        d = dens(tg, ug)
        return trapezoid(trapezoid(d, ug, axis=1), tg), d

    val, d = rule(*n)
    edge = max(np.abs(d[0]).max(), np.abs(d[-1]).max(), np.abs(d[:, 0]).max(), np.abs(d[:, -1]).max())
    if not np.isfinite(val) or edge > tol:
        raise NonDecayError(f"integrand {edge:.3g} on the horospherical box edge")
    coarse, _ = rule(n[0] // 2 + 1, n[1] // 2 + 1)
    return SuperIntegral(float(val), abs(val - coarse), float(edge), float("nan"), d.size)


def ambient_vs_horo(F: SuperForm, quad_spec: QuadSpec | None = None, **kw) -> tuple[float, float]:
    """Superintegral of ``F / z`` in ambient coordinates and of ``F~ e^{-t}`` after substitution."""
    amb = superintegrate(SuperForm(1, lambda sp: F(sp) * reciprocal(sp.z[0])), quad_spec)
    hor = superintegrate_horo(F, **kw)
    return amb.value, hor.value
