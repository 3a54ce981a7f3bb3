"""Chain container and driver shared by the two sigma models."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _tchain
from .graph import WeightedGraph
from .rng import as_generator, kernel_seed
from .stats import InsufficientSamples, integrated_autocorrelation_time


class ChainError(RuntimeError):
    def __init__(self, message: str, t=None, sweep: int | None = None):
        super().__init__(message)
        self.t = t
        self.sweep = sweep


@dataclass(frozen=True)
class MCMCParams:
    """Burn-in and thinning are in sweeps (one proposal per site)."""

    n_burn: int = 10_000
    n_keep: int = 1_000
    thin: int = 10
    n_batches: int = 100
    adapt_every: int = 50
    target_acceptance: float = 0.4
    sigma0: float = 0.5
    guard: float = 300.0
    t_init: float = 0.0

    def validate(self) -> None:
        if self.n_keep < self.n_batches or self.n_batches < 2:
            raise ValueError("need n_keep >= n_batches >= 2")
        if self.thin < 1 or self.n_burn < 0 or self.adapt_every < 1:
            raise ValueError("thin, adapt_every must be positive and n_burn non-negative")
        if not 0 < self.guard <= 700:
            raise ValueError("guard must lie in (0, 700]")


@dataclass
class TChain:
    """Output of one chain: thinned ``t`` samples plus Rao-Blackwell batch matrices.

    ``rb_batches[k, a, b]`` is the batch-``k`` mean of ``e^{t_a + t_b} (D^{-1})_ab``
    and ``e2_batches`` the batch mean of ``e^{t_a + t_b}``.
    """

    graph: WeightedGraph
    params: MCMCParams
    a: float
    c: float
    samples: np.ndarray
    rb_batches: np.ndarray
    e2_batches: np.ndarray
    sigma: np.ndarray
    diagnostics: np.ndarray
    status: int
    logdet_drift: float
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def two_point_batches(self) -> np.ndarray:
        return self.rb_batches

    def tau_int(self) -> float:
        """Integrated autocorrelation time (in kept samples) of ``sum_j e^{t_j}`` and ``t_0``."""
        s1 = np.exp(self.samples).sum(axis=1)
        return max(integrated_autocorrelation_time(s1), integrated_autocorrelation_time(self.samples[:, 0]))

    def converged(self, min_effective: float = 50.0) -> bool:
        if self.status != _tchain.OK:
            return False
        return self.n_samples / self.tau_int() >= min_effective

    def acceptance(self) -> float:
        return float(self.diagnostics[self.params.n_burn:, 1].mean())

    def write_diagnostics(self, path, columns=("sweep", "neg_log_density", "acceptance", "t_min", "t_max"),
                          extra_column: np.ndarray | None = None) -> None:
        d = self.diagnostics
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for k in range(d.shape[0]):
                row = [k, repr(float(d[k, 0])), repr(float(d[k, 1])), repr(float(d[k, 2])), repr(float(d[k, 3]))]
                if extra_column is not None:
                    row = [k, row[1], row[2], repr(float(d[k, 4])), repr(float(extra_column[k]))]
                w.writerow(row)


def run_t_chain(graph: WeightedGraph, a: float, c: float, params: MCMCParams, rng) -> TChain:
    params.validate()
    if not (np.asarray(graph.h) > 0).any():
        raise ValueError("the measure needs some h_i > 0")
    rng = as_generator(rng)
    seed = kernel_seed(rng)
    n = graph.n_vertices
    t0 = np.full(n, float(params.t_init))
    s0 = np.full(n, float(params.sigma0))
    out = _tchain.run_chain(
        graph.indptr, graph.indices, graph.weights, np.asarray(graph.h, dtype=float),
        float(a), float(c), t0, s0, int(params.n_burn), int(params.n_keep), int(params.thin),
        int(params.n_batches), int(params.adapt_every), float(params.target_acceptance),
        float(params.guard), seed,
    )
    samples, G, E2, sigma, diag, status, sweep, drift = out
    if status == _tchain.DIVERGED:
        raise ChainError(f"divergence watchdog: |t| reached {0.95 * params.guard:g} at sweep {sweep}",
                         t=diag[sweep, 2:4].copy(), sweep=int(sweep))
    if status == _tchain.NOT_PD:
        raise ChainError(f"D(t) lost positive definiteness at sweep {sweep}", sweep=int(sweep))
    return TChain(graph, params, a, c, samples, G, E2, sigma, diag, int(status), float(drift), seed)


def batch_mean_matrix(batches: np.ndarray):
    """Mean and standard error across the leading (batch) axis."""
    k = batches.shape[0]
    if k < 2:
        raise InsufficientSamples("need at least two batches")
    return batches.mean(axis=0), batches.std(axis=0, ddof=1) / math.sqrt(k)
