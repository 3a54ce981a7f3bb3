"""Deterministic horospherical quadrature on graphs with one or two vertices.

Given ``t``, the ``s`` variables of both sigma models are Gaussian with
precision ``D(t)``. The oracle therefore integrates ``t`` with the trapezoid
rule (spectrally accurate for these analytic, doubly-exponentially decaying
densities) on a box where the log-density is within ``log_floor`` of its
maximum, and ``s`` with a tensor Gauss-Hermite rule in the Cholesky
coordinates of ``D(t)``, which is exact for observables polynomial in ``s``.
Step and Gauss-Hermite order are refined until two successive values agree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import WeightedGraph


class EnvelopeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    norm: float
    boundary: float
    box: tuple
    step: float
    n_gh: int
    n_points: int

    def __float__(self):
        return self.value


def _edges(graph: WeightedGraph):
    return [(i, j, b) for i, j, b in graph.edges()]


def bulk_energy_batch(graph: WeightedGraph, T: np.ndarray) -> np.ndarray:
    """``B(t)`` for rows of ``T``."""
    h = np.asarray(graph.h)
    out = (h * (np.cosh(T) - 1.0)).sum(axis=-1)
    for i, j, b in _edges(graph):
        out = out + b * (np.cosh(T[..., i] - T[..., j]) - 1.0)
    return out


def precision_batch(graph: WeightedGraph, T: np.ndarray) -> np.ndarray:
    n = graph.n_vertices
    E = np.exp(T)
    D = np.zeros(T.shape[:-1] + (n, n))
    for i in range(n):
        D[..., i, i] = graph.h[i] * E[..., i]
    for i, j, b in _edges(graph):
        w = b * E[..., i] * E[..., j]
        D[..., i, j] -= w
        D[..., j, i] -= w
        D[..., i, i] += w
        D[..., j, j] += w
    return D


def log_t_density(graph: WeightedGraph, T: np.ndarray, a: float, c: float) -> np.ndarray:
    """``-B(t) - a sum t - c log det D(t)``."""
    sign, logdet = np.linalg.slogdet(precision_batch(graph, T))
    return -bulk_energy_batch(graph, T) - a * T.sum(axis=-1) - c * logdet


def _box(graph, a, c, log_floor, lo=-40.0, hi=40.0, step=0.25):
    n = graph.n_vertices
    g = np.arange(lo, hi + step / 2, step)
    T = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    with np.errstate(all="ignore"):
        lp = log_t_density(graph, T, a, c)
    lp = np.where(np.isfinite(lp), lp, -np.inf)
    keep = lp > lp.max() - log_floor
    sel = T[keep]
    box = [(float(sel[:, k].min()) - 1.0, float(sel[:, k].max()) + 1.0) for k in range(n)]
    if any(b[0] <= lo or b[1] >= hi for b in box):
        raise EnvelopeError("t-density not confined to |t| < 40; h too small for the oracle")
    return box


def _gh(n_gh: int, dim: int):
    x, w = np.polynomial.hermite_e.hermegauss(n_gh)
    w = w / math.sqrt(2 * math.pi)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return nodes, weights


def _integrate(graph, F, a, c, prefactor, box, step, n_gh, chunk=4096):
    n = graph.n_vertices
    axes = []
    for lo, hi in box:
        k = int(math.ceil((hi - lo) / step))
        axes.append(np.linspace(lo, hi, k + 1))
    wt = [np.full(len(ax), ax[1] - ax[0]) for ax in axes]
    for w in wt:
        w[0] *= 0.5
        w[-1] *= 0.5
    T = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    W = np.prod(np.stack(np.meshgrid(*wt, indexing="ij"), axis=-1).reshape(-1, n), axis=1)
    nodes, gw = _gh(n_gh, n)
    on_edge = np.zeros(len(T), dtype=bool)
    for k, ax in enumerate(axes):
        on_edge |= (T[:, k] == ax[0]) | (T[:, k] == ax[-1])
    total = 0.0
    norm = 0.0
    edge = 0.0
    for lo in range(0, len(T), chunk):
        Tc = T[lo:lo + chunk]
        with np.errstate(under="ignore"):
            p = np.exp(log_t_density(graph, Tc, a, c)) * prefactor
        Linv = np.linalg.inv(np.linalg.cholesky(precision_batch(graph, Tc)))
        S = np.einsum("pji,gj->pgi", Linv, nodes)
        with np.errstate(all="ignore"):
            vals = np.asarray(F(Tc[:, None, :], S), dtype=float)
        vals = np.broadcast_to(vals, S.shape[:2])
        if not np.all(np.isfinite(vals)):
            raise EnvelopeError("observable is not finite on the quadrature grid")
        cond = vals @ gw
        Wc = W[lo:lo + chunk]
        contrib = p * Wc * cond
        total += float(contrib.sum())
        norm += float((p * Wc).sum())
        e = on_edge[lo:lo + chunk]
        if e.any():
            edge = max(edge, float(np.abs(p[e] * np.abs(vals[e]).max(axis=1)).max()))
    return total, norm, edge, len(T) * len(gw)


def horo_expectation(graph: WeightedGraph, F: Callable, *, a: float, c: float, prefactor: float = 1.0,
                     normalize: bool = False, tol: float = 1e-8, step: float = 0.2, n_gh: int = 16,
                     max_levels: int = 4, log_floor: float = 60.0) -> QuadResult:
    """``int F(t, s) p(t) N(s; 0, D(t)^{-1}) dt ds`` with ``p = prefactor * exp(log_t_density)``.

    ``F`` receives ``t`` with shape ``(P, 1, N)`` and ``s`` with shape
    ``(P, G, N)`` and must broadcast to ``(P, G)``.
    """
    if graph.n_vertices > 2:
        raise ValueError("the quadrature oracle handles at most two vertices")
    box = _box(graph, a, c, log_floor)
    prev = None
    err = math.inf
    for level in range(max_levels):
        val, norm, edge, npts = _integrate(graph, F, a, c, prefactor, box, step, n_gh)
        used = (step, n_gh)
        if normalize:
            val /= norm
        if prev is not None:
            err = abs(val - prev)
            if err <= tol * max(1.0, abs(val)):
                break
        prev = val
        step *= 0.5
        n_gh += 8
    if edge > tol * max(1.0, abs(val)) * 1e-2:
        raise EnvelopeError(f"integrand {edge:.3g} at the edge of the t-box: observable grows too fast")
    return QuadResult(val, err, norm, edge, tuple(box), used[0], used[1], npts)
