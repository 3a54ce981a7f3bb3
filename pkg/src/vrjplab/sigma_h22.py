"""The H^{2|2} model through its real ``(s, t)`` probability density.

With ``D(t)`` the precision matrix ``D_ij = -beta_ij e^{t_i + t_j}``,
``D_ii = sum_j beta_ij e^{t_i + t_j} + h_i e^{t_i}``, the density is
``exp(-H~(s, t))`` where

    H~ = B(t) + (s, D(t) s) / 2 + sum_i (t_i + log 2 pi) - log det D(t).

Integrating out ``s`` (a centred Gaussian with precision ``D(t)``) gives
``(2 pi)^{N/2} det D^{-1/2}``, which cancels half of the explicit
determinant. The ``t``-marginal is therefore, up to a constant,

    exp(-B(t) - sum_i t_i + log det D(t) / 2),

and ``E[y_a y_b | t] = e^{t_a + t_b} (D(t)^{-1})_ab``. The sampler runs on
this marginal and averages the conditional covariance (Rao-Blackwell).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import MCMCParams, TChain, batch_mean_matrix, run_t_chain
from .graph import WeightedGraph
from .quadrature import QuadResult, horo_expectation
from .rng import as_generator
from .stats import InsufficientSamples, batch_means, zscore

T_GUARD = 700.0
DENSE_LIMIT = 4096
A_H22, C_H22 = 1.0, -0.5


class CholeskyError(np.linalg.LinAlgError):
    def __init__(self, t):
        super().__init__("D(t) is not positive definite at the recorded t")
        self.t = np.array(t, copy=True)


def _check_t(t, n: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (n,):
        raise ValueError(f"t must have shape ({n},)")
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    if np.abs(t).max(initial=0.0) > T_GUARD:
        raise OverflowError(f"|t| exceeds the overflow guard {T_GUARD}")
    return t


@dataclass(frozen=True)
class H22Config:
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise ValueError("t and s must be 1-d arrays of equal length")
        _check_t(t, len(t))
        if not np.all(np.isfinite(s)):
            raise ValueError("s must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)

    @property
    def y(self) -> np.ndarray:
        return np.exp(self.t) * self.s


@dataclass
class PrecisionOperator:
    """``D(t)`` with a cached factorisation and log-determinant."""

    matrix: sp.csr_matrix
    t: np.ndarray
    logdet: float
    _chol: np.ndarray | None = field(default=None, repr=False)
    _lu: object = field(default=None, repr=False)

    def quad(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ (self.matrix @ v))

    def solve(self, b) -> np.ndarray:
        if self._chol is not None:
            return la.cho_solve((self._chol, True), b)
        return self._lu.solve(np.asarray(b, dtype=float))

    def covariance(self) -> np.ndarray:
        return self.solve(np.eye(self.matrix.shape[0]))

    def sample(self, rng, size: int | None = None) -> np.ndarray:
        """Draws of ``N(0, D^{-1})``: ``s = L^{-T} w`` with ``D = L L^T``."""
        if self._chol is None:
            raise NotImplementedError("exact Gaussian draws need the dense factor")
        rng = as_generator(rng)
        n = self.matrix.shape[0]
        w = rng.standard_normal((n,) if size is None else (size, n))
        return la.solve_triangular(self._chol, w.T, lower=True, trans="T").T


def assemble_matrix(graph: WeightedGraph, t) -> sp.csr_matrix:
    t = _check_t(t, graph.n_vertices)
    e = np.exp(t)
    rows = np.repeat(np.arange(graph.n_vertices), np.diff(graph.indptr))
    off = graph.weights * e[rows] * e[graph.indices]
    diag = np.bincount(rows, weights=off, minlength=graph.n_vertices) + graph.h * e
    A = sp.csr_matrix((-off, graph.indices, graph.indptr), shape=(graph.n_vertices,) * 2)
    return (A + sp.diags(diag)).tocsr()


def assemble_D(graph: WeightedGraph, t) -> PrecisionOperator:
    """Build ``D(t)``, factor it and record ``log det``.

    Raises :class:`CholeskyError` carrying ``t`` if ``D`` is not positive
    definite (which cannot happen when some ``h_i > 0``).
    """
    M = assemble_matrix(graph, t)
    t = np.asarray(t, dtype=float)
    if graph.n_vertices <= DENSE_LIMIT:
        try:
            L = la.cholesky(M.toarray(), lower=True)
        except la.LinAlgError:
            raise CholeskyError(t) from None
        return PrecisionOperator(M, t, float(2.0 * np.log(np.diag(L)).sum()), _chol=L)
    lu = spla.splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0)
    d = lu.U.diagonal()
    if (d <= 0).any():
        raise CholeskyError(t)
    return PrecisionOperator(M, t, float(np.log(d).sum()), _lu=lu)


def bulk_energy(graph: WeightedGraph, t) -> float:
    """``B(t) = sum_edges beta (cosh(t_i - t_j) - 1) + sum_i h_i (cosh t_i - 1)``."""
    t = np.asarray(t, dtype=float)
    b = float((graph.h * (np.cosh(t) - 1.0)).sum())
    for i, j, w in graph.edges():
        b += w * (math.cosh(t[i] - t[j]) - 1.0)
    return b


def horo_action(graph: WeightedGraph, config: H22Config) -> float:
    op = assemble_D(graph, config.t)
    n = graph.n_vertices
    return (bulk_energy(graph, config.t) + 0.5 * op.quad(config.s)
            + float(config.t.sum()) + n * math.log(2 * math.pi) - op.logdet)


def t_marginal_neg_log_density(graph: WeightedGraph, t) -> float:
    """``B(t) + sum t - log det D(t) / 2``; the normalising constant is ``(2 pi)^{-N/2}``."""
    op = assemble_D(graph, t)
    return bulk_energy(graph, t) + float(np.sum(t)) - 0.5 * op.logdet


def sample_h22(graph: WeightedGraph, params: MCMCParams | None = None, rng=0) -> TChain:
    """Metropolis chain on the ``t``-marginal; see :class:`vrjplab.chain.TChain`."""
    if not (np.asarray(graph.h) > 0).any():
        raise ValueError("h = 0 everywhere: the H^{2|2} measure is not normalisable")
    chain = run_t_chain(graph, A_H22, C_H22, params or MCMCParams(), rng)
    chain.extra["model"] = "H22"
    return chain


def draw_s(graph: WeightedGraph, T: np.ndarray, rng, components: int = 1) -> np.ndarray:
    """One exact draw of ``s | t`` per row of ``T``; shape ``(len(T), N)`` or ``(len(T), components, N)``."""
    rng = as_generator(rng)
    out = np.empty((len(T), components, graph.n_vertices))
    for k, t in enumerate(T):
        out[k] = assemble_D(graph, t).sample(rng, components)
    return out[:, 0, :] if components == 1 else out


def estimate_two_point(chain: TChain, a: int, b: int, method: str = "rb", rng=None):
    """``<y_a y_b>`` with a batch-means standard error.

    ``method="rb"`` averages ``e^{t_a + t_b} (D^{-1})_ab``; ``"plain"`` draws
    ``s | t`` afresh and averages ``y_a y_b``.
    """
    if chain.n_samples < 100:
        raise InsufficientSamples(f"{chain.n_samples} samples; need at least 100")
    if method == "rb":
        m, se = batch_mean_matrix(chain.rb_batches[:, a, b])
        return float(m), float(se)
    if method == "plain":
        S = draw_s(chain.graph, chain.samples, rng if rng is not None else chain.seed + 1)
        y = np.exp(chain.samples) * S
        m, se = batch_means(y[:, a] * y[:, b], n_batches=chain.params.n_batches)
        return float(m), float(se)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class WardRecord:
    name: str
    value: float
    stderr: float
    z: float


@dataclass(frozen=True)
class WardReport:
    records: tuple
    threshold: float = 4.0

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.records), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_abs_z < self.threshold


def ward_check(chain: TChain, max_pairs: int = 64, rng=0, threshold: float = 4.0) -> WardReport:
    """z-scores for ``<e^{t_j}> = 1`` and ``<e^{t_j + t_l}> = 1 + <y_j y_l>``.

    All pairs on graphs up to 16 vertices; otherwise ``max_pairs`` pairs
    drawn without replacement (diagonal and off-diagonal alike).
    """
    n = chain.graph.n_vertices
    recs = []
    e = np.exp(chain.samples)
    nb = chain.params.n_batches
    for j in range(n):
        m, se = batch_means(e[:, j], n_batches=nb)
        recs.append(WardRecord(f"<e^t_{j}> - 1", float(m - 1.0), float(se), zscore(m, se, 1.0)))
    pairs = [(j, l) for j in range(n) for l in range(j, n)]
    if n > 16:
        gen = np.random.default_rng(rng)
        pairs = [pairs[k] for k in sorted(gen.choice(len(pairs), size=min(max_pairs, len(pairs)), replace=False))]
    diff = chain.e2_batches - chain.rb_batches
    for j, l in pairs:
        m, se = batch_mean_matrix(diff[:, j, l])
        recs.append(WardRecord(f"<e^(t_{j}+t_{l})> - <y_{j} y_{l}> - 1", float(m - 1.0), float(se),
                               zscore(float(m), float(se), 1.0)))
    return WardReport(tuple(recs), threshold)


def exact_expectation_h22(graph: WeightedGraph, F: Callable, tol: float = 1e-8, **kw) -> QuadResult:
    """``<F(t, s)>`` on one or two vertices by deterministic quadrature.

    ``F(t, s)`` is called with broadcastable arrays, ``t`` of shape
    ``(P, 1, N)`` and ``s`` of shape ``(P, G, N)``. Not renormalised, so
    ``F = 1`` returning 1 is a genuine check of the density.
    """
    if not (np.asarray(graph.h) > 0).any():
        raise ValueError("need some h_i > 0")
    pref = (2 * math.pi) ** (-graph.n_vertices / 2)
    return horo_expectation(graph, F, a=A_H22, c=C_H22, prefactor=pref, tol=tol, **kw)


def y_product(a: int, b: int) -> Callable:
    def F(t, s):
        return np.exp(t[..., a] + t[..., b]) * s[..., a] * s[..., b]
    return F
