"""The H^n sigma model (n >= 2) in horospherical coordinates.

A spin is ``u = (x, y^1..y^{n-1}, z)`` with ``x = sinh t - |s|^2 e^t / 2``,
``y = e^t s``, ``z = cosh t + |s|^2 e^t / 2``, and the Gibbs measure becomes
``exp(-H(t, s)) prod_i e^{(n-1) t_i} dt_i ds_i`` with

    H = sum beta_ij (cosh(t_i - t_j) - 1 + |s_i - s_j|^2 e^{t_i + t_j} / 2)
        + sum h_i (cosh t_i - 1 + |s_i|^2 e^{t_i} / 2).

Given ``t`` each of the ``n - 1`` components of ``s`` is an independent
centred Gaussian with precision ``D(t)`` (the same matrix as for H^{2|2}).
Integrating them out leaves the ``t``-density

    exp(-B(t) + (n - 1) sum_i t_i) det D(t)^{-(n-1)/2}

up to a constant. The block sampler alternates Metropolis on that marginal
with exact Gaussian draws of ``s``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numba as nb
import numpy as np

from .chain import MCMCParams, TChain, batch_mean_matrix, run_t_chain
from .graph import WeightedGraph
from .quadrature import QuadResult, horo_expectation
from .rng import as_generator, kernel_seed
from .sigma_h22 import T_GUARD, assemble_D, draw_s
from .stats import batch_means


@dataclass(frozen=True)
class HnConfig:
    """``t`` has shape ``(N,)``; ``s`` has shape ``(N, n-1)``."""

    n: int
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float).reshape(len(t), self.n - 1)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValueError("configuration must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)

    @property
    def n_vertices(self) -> int:
        return len(self.t)


def ambient_from_horo(config: HnConfig):
    """``(x, y, z)`` with ``y`` of shape ``(N, n-1)``."""
    t, s = config.t, config.s
    if np.abs(t).max(initial=0.0) > T_GUARD:
        raise OverflowError(f"|t| exceeds the overflow guard {T_GUARD}")
    e = np.exp(t)
    q = 0.5 * (s * s).sum(axis=1) * e
    return np.sinh(t) - q, e[:, None] * s, np.cosh(t) + q


def minkowski(x1, y1, z1, x2, y2, z2):
    return x1 * x2 + (y1 * y2).sum(axis=-1) - z1 * z2


def energy_horo(graph: WeightedGraph, config: HnConfig) -> float:
    if config.n_vertices != graph.n_vertices:
        raise ValueError("configuration and graph sizes differ")
    t, s = config.t, config.s
    H = 0.0
    for i, j, b in graph.edges():
        H += b * (math.cosh(t[i] - t[j]) - 1.0 + 0.5 * float(((s[i] - s[j]) ** 2).sum()) * math.exp(t[i] + t[j]))
    H += float((graph.h * (np.cosh(t) - 1.0 + 0.5 * (s * s).sum(axis=1) * np.exp(t))).sum())
    return H


def energy_ambient(graph: WeightedGraph, x, y, z) -> float:
    """``-sum beta_ij (u_i.u_j + 1) + sum h_i (z_i - 1)``."""
    H = 0.0
    for i, j, b in graph.edges():
        H -= b * (minkowski(x[i], y[i], z[i], x[j], y[j], z[j]) + 1.0)
    return H + float((graph.h * (z - 1.0)).sum())


def sample_hn(graph: WeightedGraph, n: int, params: MCMCParams | None = None, rng=0) -> TChain:
    """Block sampler: Metropolis on the marginal of ``t``; ``s | t`` via :func:`draw_s_tilde`."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not (np.asarray(graph.h) > 0).any():
        raise ValueError("the H^n measure needs some h_i > 0")
    chain = run_t_chain(graph, -(n - 1.0), 0.5 * (n - 1.0), params or MCMCParams(), rng)
    chain.extra["model"] = f"H{n}"
    chain.extra["n"] = n
    return chain


def draw_s_tilde(chain: TChain, rng) -> np.ndarray:
    """One exact draw of all ``n - 1`` components per kept sample: shape ``(K, N, n-1)``."""
    n = chain.extra["n"]
    S = draw_s(chain.graph, chain.samples, rng, components=n - 1)
    if n == 2:
        S = S[:, None, :]
    return np.transpose(S, (0, 2, 1))


def ambient_samples(chain: TChain, rng):
    """``(x, y, z)`` arrays for every kept sample after drawing ``s``."""
    T = chain.samples
    S = draw_s_tilde(chain, rng)
    e = np.exp(T)
    q = 0.5 * (S * S).sum(axis=2) * e
    return np.sinh(T) - q, e[:, :, None] * S, np.cosh(T) + q


def conditional_z(chain: TChain) -> np.ndarray:
    """``E[z_i | t] = cosh t_i + (n - 1) e^{t_i} (D^{-1})_ii / 2`` per kept sample."""
    n = chain.extra["n"]
    out = np.empty_like(chain.samples)
    for k, t in enumerate(chain.samples):
        out[k] = np.cosh(t) + 0.5 * (n - 1) * np.exp(t) * np.diag(assemble_D(chain.graph, t).covariance())
    return out


def estimate_mean(series: np.ndarray, n_batches: int = 100):
    m, se = batch_means(series, n_batches=n_batches)
    return float(m), float(se)


def write_diagnostics(chain: TChain, path, rng=0) -> None:
    """CSV ``(sweep, energy, acceptance_rate, t_0, y_0)`` at each kept sample."""
    S = draw_s_tilde(chain, rng)
    n = chain.extra["n"]
    p = chain.params
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "energy", "acceptance_rate", "t_0", "y_0"])
        for k in range(chain.n_samples):
            sweep = p.n_burn + (k + 1) * p.thin - 1
            E = energy_horo(chain.graph, HnConfig(n, chain.samples[k], S[k]))
            w.writerow([sweep, repr(E), repr(float(chain.diagnostics[sweep, 1])),
                        repr(float(chain.samples[k, 0])),
                        repr(float(math.exp(chain.samples[k, 0]) * S[k, 0, 0]))])


@nb.njit(cache=True)
def _joint_kernel(indptr, indices, weights, h, ncomp, n_burn, n_keep, thin, adapt_every, seed):
    np.random.seed(seed)
    N = h.shape[0]
    t = np.zeros(N)
    s = np.zeros((N, ncomp))
    st = np.full(N, 0.5)
    ss = np.full(N, 0.5)
    acc_t = np.zeros(N)
    acc_s = np.zeros(N)
    Ts = np.empty((n_keep, N))
    Ss = np.empty((n_keep, N, ncomp))
    kept = 0
    window = 0
    n_adapt = 0
    sp = np.empty(ncomp)
    for sweep in range(n_burn + n_keep * thin):
        for i in range(N):
            # t-move at fixed s
            ti = t[i]
            tp = ti + st[i] * np.random.standard_normal()
            s2 = 0.0
            for r in range(ncomp):
                s2 += s[i, r] * s[i, r]
            dE = h[i] * (math.cosh(tp) - math.cosh(ti) + 0.5 * s2 * (math.exp(tp) - math.exp(ti)))
            for q in range(indptr[i], indptr[i + 1]):
                j = indices[q]
                d2 = 0.0
                for r in range(ncomp):
                    d2 += (s[i, r] - s[j, r]) ** 2
                dE += weights[q] * (math.cosh(tp - t[j]) - math.cosh(ti - t[j])
                                    + 0.5 * d2 * (math.exp(tp + t[j]) - math.exp(ti + t[j])))
            dE -= ncomp * (tp - ti)
            if dE <= 0.0 or np.random.random() < math.exp(-dE):
                t[i] = tp
                acc_t[i] += 1.0
            # s-move at fixed t, scale adapted to the local Gaussian width
            scale = ss[i] * math.exp(-0.5 * t[i])
            for r in range(ncomp):
                sp[r] = s[i, r] + scale * np.random.standard_normal()
            e = math.exp(t[i])
            dE = 0.0
            for r in range(ncomp):
                dE += 0.5 * h[i] * e * (sp[r] * sp[r] - s[i, r] * s[i, r])
            for q in range(indptr[i], indptr[i + 1]):
                j = indices[q]
                ee = weights[q] * e * math.exp(t[j])
                for r in range(ncomp):
                    dE += 0.5 * ee * ((sp[r] - s[j, r]) ** 2 - (s[i, r] - s[j, r]) ** 2)
            if dE <= 0.0 or np.random.random() < math.exp(-dE):
                for r in range(ncomp):
                    s[i, r] = sp[r]
                acc_s[i] += 1.0
        window += 1
        if sweep < n_burn:
            if window == adapt_every:
                n_adapt += 1
                g = 1.0 / math.sqrt(n_adapt)
                for i in range(N):
                    st[i] = min(max(st[i] * math.exp(g * (acc_t[i] / window - 0.4)), 1e-3), 20.0)
                    ss[i] = min(max(ss[i] * math.exp(g * (acc_s[i] / window - 0.4)), 1e-3), 20.0)
                    acc_t[i] = 0.0
                    acc_s[i] = 0.0
                window = 0
        elif (sweep - n_burn + 1) % thin == 0:
            Ts[kept] = t
            Ss[kept] = s
            kept += 1
    return Ts, Ss


def sample_hn_joint(graph: WeightedGraph, n: int, params: MCMCParams | None = None, rng=0):
    """Metropolis-within-Gibbs on ``(t, s)`` without marginalisation; returns ``(T, S)``.

    Kept as an independent check of the marginal sampler.
    """
    p = params or MCMCParams()
    seed = kernel_seed(as_generator(rng))
    return _joint_kernel(graph.indptr, graph.indices, graph.weights, np.asarray(graph.h, dtype=float),
                         n - 1, p.n_burn, p.n_keep, p.thin, p.adapt_every, seed)


def exact_expectation_hn(graph: WeightedGraph, F: Callable, n: int = 2, tol: float = 1e-8, **kw) -> QuadResult:
    """``<F(x, y, z)>`` for ``n = 2`` on one or two vertices.

    ``F`` receives ambient arrays of shape ``(P, G, N)``. Admissible
    observables grow at most like a polynomial times ``e^{a z}`` with ``a < h``;
    faster growth shows up at the edge of the ``t``-box and is rejected.
    """
    if n != 2:
        raise ValueError("the quadrature oracle is implemented for n = 2 only")

    def G(t, s):
        e = np.exp(t)
        q = 0.5 * s * s * e
        return F(np.sinh(t) - q, e * s, np.cosh(t) + q)

    return horo_expectation(graph, G, a=-(n - 1.0), c=0.5 * (n - 1.0), normalize=True, tol=tol, **kw)


@dataclass
class CheckReport:
    errors: dict
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def record(self, name: str, err: float) -> None:
        self.errors[name] = max(self.errors.get(name, 0.0), float(err))


def _spins(n, t, s):
    return ambient_from_horo(HnConfig(n, t, s))


def verify_coordinate_identities(n: int, point, directions=None, step: float = 1e-5,
                                 step2: float = 1e-4, tol: float = 1e-6) -> CheckReport:
    """Finite-difference checks of the first and second ``s``-derivative relations.

    ``point = (t, s)`` with ``t`` of shape ``(N,)`` and ``s`` of shape
    ``(N, n-1)``; ``directions`` lists the components ``r`` to test (default:
    all). Errors are relative to ``1 + max|value|``.
    """
    t = np.asarray(point[0], dtype=float)
    s = np.asarray(point[1], dtype=float).reshape(len(t), n - 1)
    N = len(t)
    rep = CheckReport({}, tol)
    dirs = range(n - 1) if directions is None else directions
    x, y, z = _spins(n, t, s)

    def shifted(i, r, h):
        s2 = s.copy()
        s2[i, r] += h
        return _spins(n, t, s2)

    def dot(sp, i, j):
        X, Y, Z = sp
        return float(minkowski(X[i], Y[i], Z[i], X[j], Y[j], Z[j]))

    def rel(a, b):
        return abs(a - b) / (1.0 + max(abs(a), abs(b)))

    for r in dirs:
        for i in range(N):
            p, m = shifted(i, r, step), shifted(i, r, -step)
            rep.record("dz/ds = y", rel((p[2][i] - m[2][i]) / (2 * step), y[i, r]))
            rep.record("dy/ds = x + z", rel((p[1][i, r] - m[1][i, r]) / (2 * step), x[i] + z[i]))
            for j in range(N):
                if j == i:
                    continue
                fd = (dot(p, i, j) - dot(m, i, j)) / (2 * step)
                rep.record("d(u_i.u_j)/ds_i", rel(fd, y[j, r] * (x[i] + z[i]) - y[i, r] * (x[j] + z[j])))
            p2, m2 = shifted(i, r, step2), shifted(i, r, -step2)
            d2 = (p2[2][i] - 2 * z[i] + m2[2][i]) / step2**2
            rep.record("d2z_j/ds_j^2 = x_j + z_j", rel(d2, x[i] + z[i]))
            rep.record("x_j + z_j = e^t_j", rel(x[i] + z[i], math.exp(t[i])))
        for j in range(N):
            for l in range(N):
                if l == j:
                    continue
                for i in range(N):
                    def f(di, dl):
                        s2 = s.copy()
                        s2[i, r] += di
                        s2[l, r] += dl
                        return -1.0 - dot(_spins(n, t, s2), j, l)
                    if i == l:
                        d2 = (f(step2, 0) - 2 * f(0, 0) + f(-step2, 0)) / step2**2
                    else:
                        d2 = (f(step2, step2) - f(step2, -step2) - f(-step2, step2) + f(-step2, -step2)) / (4 * step2**2)
                    ej = math.exp(t[j] + t[l])
                    expect = -ej if i == j else (ej if i == l else 0.0)
                    expect_amb = -(x[j] + z[j]) * (x[l] + z[l]) if i == j else (
                        (x[j] + z[j]) * (x[l] + z[l]) if i == l else 0.0)
                    rep.record("d2(-1-u_j.u_l)/ds_i ds_l", rel(d2, expect))
                    rep.record("e^(t_j+t_l) = (x_j+z_j)(x_l+z_l)", rel(expect, expect_amb))
    return rep


def horo_map_single(n: int, v: np.ndarray) -> np.ndarray:
    """``(t, s^1..s^{n-1}) -> (x, y^1..y^{n-1})`` for one vertex."""
    x, y, _ = _spins(n, v[:1], v[1:].reshape(1, n - 1))
    return np.concatenate(([x[0]], y[0]))


def verify_jacobian_hn(n: int, point, step: float = 1e-5, tol: float = 1e-6):
    """Central-difference ``det J`` of the single-vertex chart against ``e^{(n-1) t} z``.

    Returns ``(det_fd, det_closed, rel_error, passed)``.
    """
    if n not in (2, 3):
        raise ValueError("Jacobian check is provided for n = 2 and n = 3")
    v = np.concatenate(([float(point[0])], np.asarray(point[1], dtype=float).ravel()))
    if len(v) != n:
        raise ValueError(f"point needs t and {n - 1} s-components")
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        J[:, k] = (horo_map_single(n, v + e) - horo_map_single(n, v - e)) / (2 * step)
    det_fd = float(np.linalg.det(J))
    t = v[0]
    z = math.cosh(t) + 0.5 * float((v[1:] ** 2).sum()) * math.exp(t)
    closed = math.exp((n - 1) * t) * z
    err = abs(det_fd - closed) / abs(closed)
    return det_fd, closed, err, err < tol


def two_point_hn(chain: TChain, a: int, b: int):
    """Rao-Blackwellised ``<y_a^r y_b^r>`` (any single component ``r``)."""
    m, se = batch_mean_matrix(chain.rb_batches[:, a, b])
    return float(m), float(se)
