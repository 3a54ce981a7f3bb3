"""Superintegration of forms on one or two vertices.

The superintegral of ``F`` is the ordinary integral of its top coefficient
against ``prod dx_i dy_i / (2 pi)``. Each vertex plane is covered in polar
coordinates ``x = sinh(r) cos(theta)``, ``y = sinh(r) sin(theta)`` (area
element ``sinh r cosh r dr dtheta``), which matches the hyperbolic decay of
the integrands of interest: Gauss-Legendre in ``r``, periodic trapezoid in
the angles. On two vertices the second angle is written relative to the first
and clustered around alignment, where a ferromagnetic coupling concentrates
the mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterator

import numpy as np

from ..graph import WeightedGraph
from .algebra import GrassmannError, Supernumber, exp, reciprocal
from .forms import SuperForm, SuperSpins, ambient_spins


class NonDecayError(GrassmannError):
    pass


@dataclass(frozen=True)
class QuadSpec:
    n_rho: int = 40
    n_theta: int = 8
    n_phi: int = 48
    rho_max: float | None = None
    coupling: float = 1.0
    tol: float = 1e-8
    max_refinements: int = 3
    chunk: int = 40000

    def refined(self) -> "QuadSpec":
        return replace(self, n_rho=int(self.n_rho * 1.5), n_phi=int(self.n_phi * 1.5))


@dataclass(frozen=True)
class SuperIntegral:
    value: float
    error: float
    boundary: float
    rho_max: float
    n_points: int

    def __float__(self):
        return self.value


def _gl(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _periodic(n: int):
    return -math.pi + 2 * math.pi * (np.arange(n) + 0.5) / n, np.full(n, 2 * math.pi / n)


def _cluster(psi, alpha):
    """Periodic map of ``(-pi, pi)`` onto itself, bunching nodes near 0 for ``alpha < 1``."""
    half = 0.5 * psi
    phi = 2.0 * np.arctan(alpha * np.tan(half))
    dphi = alpha / (np.cos(half) ** 2 + (alpha * np.sin(half)) ** 2)
    return phi, dphi


def _ambient_rule(m: int, rho: np.ndarray, w_rho: np.ndarray, spec: QuadSpec) -> Iterator:
    """Yield ``(x, y, weight)`` chunks, the weight including ``1/(2 pi)^m``."""
    th, w_th = _periodic(spec.n_theta)
    jac = np.sinh(rho) * np.cosh(rho) * w_rho
    if m == 1:
        R, T = np.meshgrid(rho, th, indexing="ij")
        W = np.outer(jac, w_th) / (2 * math.pi)
        yield [np.sinh(R).ravel() * np.cos(T).ravel()], [np.sinh(R).ravel() * np.sin(T).ravel()], W.ravel()
        return
    psi, w_psi = _periodic(spec.n_phi)
    for a in range(len(rho)):
        r0 = rho[a]
        T0, R1, PS = np.meshgrid(th, rho, psi, indexing="ij")
        alpha = 1.0 / np.sqrt(1.0 + spec.coupling * math.sinh(r0) * np.sinh(R1))
        PH, dPH = _cluster(PS, alpha)
        W = (jac[a] * w_th[:, None, None] * jac[None, :, None] * w_psi[None, None, :] * dPH
             / (2 * math.pi) ** 2)
        s0, s1 = math.sinh(r0), np.sinh(R1)
        x0 = s0 * np.cos(T0)
        y0 = s0 * np.sin(T0)
        x1 = s1 * np.cos(T0 + PH)
        y1 = s1 * np.sin(T0 + PH)
        yield [x0.ravel(), x1.ravel()], [y0.ravel(), y1.ravel()], W.ravel()


def _top(F: Callable, m: int, x, y):
    out = F(ambient_spins(m, x, y))
    if not isinstance(out, Supernumber):
        return np.zeros_like(x[0])
    top = out.top
    return np.broadcast_to(np.asarray(top, dtype=float), x[0].shape)


def _scan_radius(F, m: int, spec: QuadSpec, r_hi: float = 10.0) -> float:
    """Smallest radius beyond which the top-coefficient density is negligible."""
    grid = np.linspace(0.0, r_hi, 41)
    coarse = replace(spec, n_theta=4, n_phi=16)
    w = np.ones_like(grid)
    dens = np.zeros_like(grid)
    with np.errstate(all="ignore"):
        for k, (x, y, W) in enumerate(_ambient_rule(m, grid, w, coarse)):
            top = np.abs(_top(F, m, x, y) * W)
            top = np.where(np.isfinite(top), top, np.inf)
            if m == 1:
                dens = top.reshape(len(grid), -1).max(axis=1)
            else:
                t = top.reshape(coarse.n_theta, len(grid), coarse.n_phi)
                dens[k] = max(dens[k], t.max())
                dens = np.maximum(dens, t.max(axis=(0, 2)))
    scale = dens[np.isfinite(dens)].max() if np.isfinite(dens).any() else np.inf
    if not np.isfinite(scale) or scale == 0:
        if scale == 0:
            return 1.0
        raise NonDecayError("integrand is not finite on the scan grid")
    above = np.nonzero(dens > 1e-18 * scale)[0]
    r = grid[above[-1]] + 2 * (grid[1] - grid[0])
    if r >= r_hi:
        raise NonDecayError(f"top coefficient does not decay within r <= {r_hi}")
    return float(r)


def _boundary(F, m: int, R: float, spec: QuadSpec) -> float:
    """Density at the truncation radius, times the circumference of the boundary."""
    coarse = replace(spec, n_theta=8, n_phi=24)
    rho = np.array([R]) if m == 1 else np.linspace(0.0, R, 9)
    worst = 0.0
    with np.errstate(all="ignore"):
        for k, (x, y, W) in enumerate(_ambient_rule(m, rho, np.ones_like(rho), coarse)):
            top = np.abs(_top(F, m, x, y) * W)
            if m == 2:
                top = top.reshape(coarse.n_theta, len(rho), coarse.n_phi)
                top = top if k == len(rho) - 1 else top[:, -1, :]
            worst = max(worst, float(np.nanmax(top)) if np.all(np.isfinite(top)) else np.inf)
    return worst * R


def _integrate_once(F, m: int, R: float, spec: QuadSpec) -> tuple[float, int]:
    rho, w_rho = _gl(spec.n_rho, 0.0, R)
    total, count = 0.0, 0
    for x, y, W in _ambient_rule(m, rho, w_rho, spec):
        total += float(np.dot(_top(F, m, x, y), W))
        count += W.size
    return total, count


def superintegrate(F: SuperForm | Callable[[SuperSpins], Supernumber], quad_spec: QuadSpec | None = None,
                   m: int | None = None) -> SuperIntegral:
    """``int F_top(x, y) prod dx_i dy_i / (2 pi)`` over one or two vertex planes.

    The rule is refined until two successive values agree to ``tol``. A top
    coefficient that is still significant at the truncation radius raises
    :class:`NonDecayError`.
    """
    spec = quad_spec or QuadSpec()
    if m is None:
        m = F.m
    if m not in (1, 2):
        raise GrassmannError("superintegration is implemented for one or two vertices")
    R = spec.rho_max if spec.rho_max is not None else _scan_radius(F, m, spec)
    bnd = _boundary(F, m, R, spec)
    prev, n = _integrate_once(F, m, R, spec)
    err = math.inf
    cur_spec = spec
    for _ in range(spec.max_refinements):
        cur_spec = cur_spec.refined()
        val, n = _integrate_once(F, m, R, cur_spec)
        err = abs(val - prev)
        prev = val
        if err <= spec.tol * max(1.0, abs(val)):
            break
    if bnd > spec.tol * max(1.0, abs(prev)):
        raise NonDecayError(f"top coefficient still {bnd:.3g} at the truncation radius {R:.3g}")
    return SuperIntegral(prev, err, bnd, R, n)


def h22_action(graph: WeightedGraph, spins: SuperSpins) -> Supernumber:
    """``H = sum_edges beta (-u_i.u_j - 1) + sum_i h_i (z_i - 1)``."""
    H = Supernumber.const(spins.m, 0.0)
    for i, j, b in graph.edges():
        H = H + b * (-spins.dot(i, j) - 1.0)
    for i in range(spins.m):
        if graph.h[i]:
            H = H + float(graph.h[i]) * (spins.z[i] - 1.0)
    return H


def h22_integrand(graph: WeightedGraph, F: SuperForm | Callable | None = None) -> SuperForm:
    """The form ``F e^{-H} prod 1/z_i`` whose superintegral is ``<F>``."""
    m = graph.n_vertices

    def fn(spins):
        G = exp(-h22_action(graph, spins))
        for i in range(m):
            G = G * reciprocal(spins.z[i])
        if F is not None:
            G = F(spins) * G
        return G

    return SuperForm(m, fn, "F e^-H / z")


def h22_expectation_exact(graph: WeightedGraph, F: SuperForm | Callable | None = None,
                          quad_spec: QuadSpec | None = None) -> SuperIntegral:
    """Super-expectation ``<F>`` on a graph with one or two vertices."""
    if graph.n_vertices > 2:
        raise GrassmannError("exact super-expectation needs at most two vertices")
    if not (np.asarray(graph.h) > 0).any():
        raise GrassmannError("need some h_i > 0 for a normalizable measure")
    spec = quad_spec or QuadSpec(coupling=max([b for *_, b in graph.edges()] or [1.0]))
    return superintegrate(h22_integrand(graph, F), spec)
