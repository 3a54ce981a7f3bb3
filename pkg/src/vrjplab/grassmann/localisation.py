"""Localisation checks: the superintegral of a supersymmetric form equals its body at 0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import WeightedGraph
from .algebra import GrassmannError, exp, reciprocal, value
from .forms import SuperForm, apply_Q
from .integrate import QuadSpec, h22_action, superintegrate


class NotSupersymmetric(GrassmannError):
    def __init__(self, name: str, point, residual: float):
        super().__init__(f"{name}: QF = {residual:.3g} at x={point[0]}, y={point[1]}")
        self.point = point
        self.residual = residual


@dataclass(frozen=True)
class LocalisationResult:
    name: str
    value: float
    expected: float
    error: float
    quad_error: float
    q_residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error < self.tol


def q_residual(F: SuperForm, points) -> float:
    worst = 0.0
    for x, y in points:
        worst = max(worst, apply_Q(F, (x, y)).max_abs_diff(0.0))
    return worst


def localisation_check(F: SuperForm, quad_spec: QuadSpec | None = None, *, rng=0, n_points: int = 8,
                       tol: float = 1e-7, q_tol: float = 1e-10) -> LocalisationResult:
    """Verify ``QF = 0`` at random points, then compare the superintegral with ``F_{0,0}(0, 0)``."""
    rng = np.random.default_rng(rng)
    pts = [(rng.normal(size=F.m), rng.normal(size=F.m)) for _ in range(n_points)]
    worst = 0.0
    for x, y in pts:
        r = apply_Q(F, (x, y)).max_abs_diff(0.0)
        if r > q_tol:
            raise NotSupersymmetric(F.name, (x, y), r)
        worst = max(worst, r)
    res = superintegrate(F, quad_spec)
    expected = float(value(F.at(np.zeros(F.m), np.zeros(F.m)).body))
    return LocalisationResult(F.name, res.value, expected, abs(res.value - expected), res.error, worst, tol)


def _pinned(graph: WeightedGraph, g=None, name: str = "") -> SuperForm:
    m = graph.n_vertices

    def fn(sp):
        G = exp(-h22_action(graph, sp))
        for i in range(m):
            G = G * reciprocal(sp.z[i])
        return G if g is None else g(sp) * G

    return SuperForm(m, fn, name)


def battery() -> list[SuperForm]:
    """Supersymmetric forms with rapid decay, on one and two vertices."""
    one = WeightedGraph.from_dense([[0.0]], [0.5])
    two = WeightedGraph.path(2, 1.0, 1.0)
    free = WeightedGraph.path(2, 1.0, 0.0)
    strong = WeightedGraph.path(2, 3.0, 0.0)

    def g_z(sp):
        return exp(-(sp.z[0] - 1.0) ** 2 - (sp.z[1] - 1.0) ** 2)

    return [
        SuperForm(1, lambda sp: exp(-sp.tau(0, 0)), "exp(-tau11)"),
        SuperForm(1, lambda sp: exp(-(sp.tau(0, 0) - 2.0) ** 2), "exp(-(tau11-2)^2)"),
        SuperForm(1, lambda sp: exp(-(sp.z[0] - 1.0)) * reciprocal(sp.z[0]) * (1.0 + sp.tau(0, 0)), "(1+tau11) e^-(z-1)/z"),
        SuperForm(2, lambda sp: exp(-sp.tau(0, 0) - sp.tau(1, 1) - 0.5 * sp.tau(0, 1)), "exp(-tau11-tau22-tau12/2)"),
        _pinned(one, None, "<1> one vertex h=0.5"),
        _pinned(one, lambda sp: sp.z[0], "<z> one vertex h=0.5"),
        _pinned(two, None, "<1> two vertices beta=1 h=1"),
        _pinned(two, lambda sp: sp.z[0] * sp.z[1], "<z1 z2> two vertices beta=1 h=1"),
        _pinned(free, g_z, "g(z) e^-H(beta=1,h=0)"),
        _pinned(strong, g_z, "g(z) e^-H(beta=3,h=0)"),
    ]


def run_battery(quad_spec: QuadSpec | None = None, tol: float = 1e-7, rng=0) -> list[LocalisationResult]:
    return [localisation_check(F, quad_spec, rng=rng, tol=tol) for F in battery()]
