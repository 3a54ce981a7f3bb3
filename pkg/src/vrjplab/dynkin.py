"""Both sides of the sigma-model / VRJP isomorphism, computed independently.

For a functional ``g(b, ell) = 1{b = b0} exp(-<c, ell>)`` (``b0=None`` sums
over ``b``) the sigma-model side is ``sum_b <y_a y_b g(b, z - 1)>`` and the
walk side is

* H^{2|2}: ``int_0^inf E_{a,0}[g(X_t, L_t)] e^{-ht} dt``;
* H^n:     ``< z_a int_0^inf E_{a,z-1}[g(X_t, L_t)] e^{-ht} dt >``, a nested
  estimate with a few walks per sigma-model sample.

Sigma-model side for ``c != 0``: given ``t``, the factor
``exp(-<c, z - 1>)`` is ``exp(-sum c_i (cosh t_i - 1))`` times a Gaussian in
``s`` that turns ``D_h(t)`` into ``D_{h+c}(t)``. Integrating ``s`` exactly
gives the per-sample weight

    exp(-sum c_i (cosh t_i - 1) - kappa (log det D_{h+c} - log det D_h))
        * e^{t_a + t_b} (D_{h+c}^{-1})_{ab}

with ``kappa`` the chain's log-det coefficient (``(n-1)/2`` for H^n, ``-1/2``
for H^{2|2}, where the odd variables contribute the opposite sign). For
H^{2|2} this is the statement ``<y_a y_b e^{-<c, z-1>}>_h = <y_a y_b>_{h+c}``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import report as rp
from .chain import MCMCParams, TChain, batch_mean_matrix
from .graph import WeightedGraph
from .report import CheckRecord, ExperimentReport
from .rng import lane
from .sigma_h22 import assemble_D, exact_expectation_h22, sample_h22
from .sigma_hn import draw_s_tilde, exact_expectation_hn, sample_hn
from .stats import batch_means
from .vrjp import DecayIndicator, discounted_profile, estimate_discounted_functional, nested_profiles

# replica ids inside a case lane
_LHS_CHAIN, _RHS_WALKS, _RHS_CHAIN, _RHS_SPINS, _LHS_SPINS = 0, 1, 2, 3, 4


class BudgetWarning(UserWarning):
    """Inner/outer sample sizes of the nested estimator are badly matched."""


@dataclass(frozen=True)
class IsomorphismCase:
    graph: WeightedGraph
    model: str = "H22"
    n: int = 2
    a: int = 0
    b: int = 0
    b0: int | None = None
    c: tuple | None = None
    h: float | None = None
    n_traj: int = 100_000
    mcmc: MCMCParams = field(default_factory=MCMCParams)
    n_inner: int = 8
    strategy: str = "interval"
    use_oracle: bool = True
    use_chain: bool = True
    shared_seed: bool = False
    case_id: int = 0
    name: str = "case"

    def __post_init__(self):
        if self.h is not None:
            if not self.h > 0:
                raise ValueError("h must be positive")
            object.__setattr__(self, "graph", self.graph.with_h(self.h))
        if self.c is not None:
            object.__setattr__(self, "c", tuple(float(x) for x in self.c))
        self.validate()

    def validate(self) -> None:
        nv = self.graph.n_vertices
        if self.model not in ("H22", "Hn"):
            raise ValueError(f"model must be 'H22' or 'Hn', got {self.model!r}")
        if self.model == "Hn" and self.n not in (2, 3):
            raise ValueError("H^n cases support n = 2 or 3")
        for v in (self.a, self.b) + (() if self.b0 is None else (self.b0,)):
            if not 0 <= v < nv:
                raise ValueError(f"vertex {v} out of range")
        if self.c is not None:
            if len(self.c) != nv or min(self.c) < 0:
                raise ValueError("c needs one non-negative entry per vertex")
        if not (np.asarray(self.graph.h) > 0).all():
            raise ValueError("cases need h > 0 at every vertex")
        if self.n_inner < 2 or self.n_traj < 2:
            raise ValueError("budgets too small for error bars")

    @property
    def g(self) -> DecayIndicator:
        return DecayIndicator(self.b0, self.c)

    @property
    def targets(self) -> list:
        return list(range(self.graph.n_vertices)) if self.b0 is None else [self.b0]

    @property
    def decay(self) -> np.ndarray:
        return np.zeros(self.graph.n_vertices) if self.c is None else np.asarray(self.c)

    def small(self) -> bool:
        return self.use_oracle and self.graph.n_vertices <= 2


def _lane(case: IsomorphismCase, seed: int, replica: int, rep: ExperimentReport, purpose: str):
    r = 0 if case.shared_seed else replica
    rep.lane("dynkin", case.case_id, r, purpose)
    return lane(seed, "dynkin", case.case_id, r)


def _new_report(kind: str, case: IsomorphismCase, seed: int) -> ExperimentReport:
    cfg = {"case": case.name, "model": case.model, "n": case.n, "a": case.a, "b": case.b, "b0": case.b0,
           "c": case.c, "h": [float(x) for x in case.graph.h], "n_vertices": case.graph.n_vertices,
           "n_traj": case.n_traj, "n_inner": case.n_inner, "strategy": case.strategy,
           "shared_seed": case.shared_seed}
    return ExperimentReport(kind, cfg, seed)


def _chain_flag(chain: TChain):
    return None if chain.converged() else rp.INCONCLUSIVE


def _walk_record(name, lhs, lhs_se, rhs, rhs_se, forced=None, tail=0.0) -> CheckRecord:
    """Deterministic walk estimates (e.g. a walk that cannot move) are compared exactly."""
    if rhs_se == 0.0 and lhs_se == 0.0:
        # per-walk sums of closed-form intervals lose ~eps each; 1e-9 covers 1e8 walks
        return rp.exact(name, lhs, rhs, tol=tail + 1e-9 * max(1.0, abs(rhs)))
    return rp.stat(name, lhs, lhs_se, rhs, rhs_se, forced=forced)


def h_weighted_sum_rule(chain: TChain, a: int):
    """Batch means of ``sum_b h_b <y_a y_b>``; equals ``<z_a>`` in both models."""
    h = np.asarray(chain.graph.h)
    return batch_mean_matrix(chain.rb_batches[:, a, :] @ h)


def decay_two_point_series(chain: TChain, a: int, targets, c) -> np.ndarray:
    """Per-sample conditional expectation of ``sum_{b in targets} y_a y_b exp(-<c, z-1>)`` given ``t``."""
    c = np.asarray(c, dtype=float)
    graph = chain.graph
    shifted = graph.with_h(np.asarray(graph.h) + c)
    out = np.empty(chain.n_samples)
    for k, t in enumerate(chain.samples):
        d0 = assemble_D(graph, t)
        d1 = assemble_D(shifted, t) if c.any() else d0
        e = np.exp(t)
        col = d1.solve(np.eye(graph.n_vertices)[a])
        two = e[a] * float(sum(e[b] * col[b] for b in targets))
        logw = -float((c * (np.cosh(t) - 1.0)).sum()) - chain.c * (d1.logdet - d0.logdet)
        out[k] = math.exp(logw) * two
    return out


def decay_weight_series(chain: TChain, c) -> np.ndarray:
    """Per-sample ``E[exp(-<c, z-1>) | t]``; its mean is 1 for H^{2|2}."""
    c = np.asarray(c, dtype=float)
    graph = chain.graph
    shifted = graph.with_h(np.asarray(graph.h) + c)
    out = np.empty(chain.n_samples)
    for k, t in enumerate(chain.samples):
        logw = -float((c * (np.cosh(t) - 1.0)).sum()) - chain.c * (assemble_D(shifted, t).logdet
                                                                     - assemble_D(graph, t).logdet)
        out[k] = math.exp(logw)
    return out


def _super_observable(a: int, targets, c):
    from .grassmann import exp as sexp

    def F(spins):
        tot = spins.y[targets[0]]
        for b in targets[1:]:
            tot = tot + spins.y[b]
        out = spins.y[a] * tot
        if c is not None and any(c):
            arg = None
            for i, ci in enumerate(c):
                if ci:
                    term = ci * (spins.z[i] - 1.0)
                    arg = term if arg is None else arg + term
            out = out * sexp(-arg)
        return out
    return F


def _tau_note(chain: TChain) -> str:
    return f"tau_int={chain.tau_int():.2f} acc={chain.acceptance():.2f}"


def verify_h22_two_point(case: IsomorphismCase, seed: int = 0) -> ExperimentReport:
    """``<y_a y_b>`` from the sigma model against the discounted occupation of ``b`` from ``a``."""
    if case.model != "H22":
        raise ValueError("verify_h22_two_point needs an H22 case")
    rep = _new_report("dynkin-h22-two-point", case, seed)
    graph, a, b = case.graph, case.a, case.b
    prof = discounted_profile(graph, a, ell0=None, n_samples=case.n_traj,
                              rng=_lane(case, seed, _RHS_WALKS, rep, "vrjp walks"), strategy=case.strategy)
    rhs, rhs_se = float(prof.mean[b]), float(prof.stderr[b])
    h = np.asarray(graph.h)
    if np.ptp(h) == 0:
        rep.add(_walk_record(f"{case.name}: walk sum_b occupation(b) = 1/h", prof.total, prof.total_stderr,
                             1.0 / h[0], 0.0, tail=prof.tail_bound))
    if case.small():
        sup = float(_h22_oracle(graph, a, [b], None))
        quad = exact_expectation_h22(graph, lambda t, s: np.exp(t[..., a] + t[..., b]) * s[..., a] * s[..., b])
        rep.add(rp.exact(f"{case.name}: superintegral = (s,t) quadrature", sup, quad.value, tol=1e-6))
        rep.add(_walk_record(f"{case.name}: walk vs superintegral", rhs, rhs_se, sup, 0.0, tail=prof.tail_bound))
        if graph.n_vertices == 1:
            rep.add(rp.exact(f"{case.name}: superintegral = 1/h", sup, 1.0 / h[0], tol=1e-9))
    if case.use_chain:
        chain = sample_h22(graph, case.mcmc, _lane(case, seed, _LHS_CHAIN, rep, "sigma chain"))
        flag = _chain_flag(chain)
        m, se = batch_mean_matrix(chain.rb_batches[:, a, b])
        rep.add(rp.stat(f"{case.name}: chain vs walk", float(m), float(se), rhs, rhs_se, forced=flag,
                        note=_tau_note(chain)))
        sm, sse = h_weighted_sum_rule(chain, a)
        rep.add(rp.stat(f"{case.name}: chain sum_b h_b <y_a y_b> = 1", float(sm), float(sse), 1.0, forced=flag))
    return rep


def _h22_oracle(graph, a, targets, c):
    from .grassmann import h22_expectation_exact
    return h22_expectation_exact(graph, _super_observable(a, targets, c))


def verify_h22_general_g(case: IsomorphismCase, seed: int = 0) -> ExperimentReport:
    if case.model != "H22":
        raise ValueError("verify_h22_general_g needs an H22 case")
    rep = _new_report("dynkin-h22-general-g", case, seed)
    graph, a, targets, c = case.graph, case.a, case.targets, case.decay
    rhs, rhs_se = estimate_discounted_functional(graph, a, None, graph.h, case.g, case.n_traj,
                                                 _lane(case, seed, _RHS_WALKS, rep, "vrjp walks"),
                                                 strategy=case.strategy)
    if case.small():
        sup = float(_h22_oracle(graph, a, targets, case.c))
        shifted = graph.with_h(np.asarray(graph.h) + c)
        quad = exact_expectation_h22(
            shifted, lambda t, s: np.exp(t[..., a]) * s[..., a] * sum(np.exp(t[..., b]) * s[..., b] for b in targets))
        rep.add(rp.exact(f"{case.name}: superintegral = (s,t) quadrature at h + c", sup, quad.value, tol=1e-6))
        rep.add(_walk_record(f"{case.name}: walk vs superintegral", rhs, rhs_se, sup, 0.0, tail=1e-9))
    if case.use_chain:
        chain = sample_h22(graph, case.mcmc, _lane(case, seed, _LHS_CHAIN, rep, "sigma chain"))
        flag = _chain_flag(chain)
        nb = case.mcmc.n_batches
        m, se = batch_means(decay_two_point_series(chain, a, targets, c), n_batches=nb)
        rep.add(rp.stat(f"{case.name}: chain vs walk", float(m), float(se), rhs, rhs_se, forced=flag,
                        note=_tau_note(chain)))
        if c.any():
            wm, wse = batch_means(decay_weight_series(chain, c), n_batches=nb)
            rep.add(rp.stat(f"{case.name}: chain <exp(-<c, z-1>)> = 1", float(wm), float(wse), 1.0, forced=flag))
    return rep


@dataclass(frozen=True)
class NestedEstimate:
    mean: float
    stderr: float
    inner_fraction: float
    values: np.ndarray


def nested_rhs(graph: WeightedGraph, a: int, z: np.ndarray, g: DecayIndicator, n_inner: int, rng,
               strategy: str = "interval", n_batches: int = 100) -> NestedEstimate:
    """``< z_a int E_{a, z-1}[g] e^{-ht} dt >`` from outer samples ``z`` (rows) and ``n_inner`` walks each.

    ``inner_fraction`` is the share of the per-row variance that comes from
    the inner walks; near 1 the inner budget is too small, near 0 it is
    wasted.
    """
    prof = nested_profiles(graph, a, np.maximum(z - 1.0, 0.0), graph.h, c=g.c, n_inner=n_inner,
                           rng=rng, strategy=strategy)
    if g.b0 is None:
        inner, wvar = prof.total, prof.total_within_var
    else:
        inner, wvar = prof.mean[:, g.b0], prof.within_var[:, g.b0]
    za = z[:, a]
    vals = za * inner
    m, se = batch_means(vals, n_batches=min(n_batches, len(vals) // 2))
    tot = float(vals.var(ddof=1))
    frac = float((za ** 2 * wvar).mean() / n_inner / tot) if tot > 0 else 0.0
    if frac > 0.9:
        warnings.warn(f"inner walks carry {frac:.0%} of the variance; raise n_inner", BudgetWarning, stacklevel=2)
    elif 1e-9 < frac < 0.02 and n_inner > 2:
        warnings.warn(f"inner walks carry only {frac:.1%} of the variance; n_inner can be lowered",
                      BudgetWarning, stacklevel=2)
    return NestedEstimate(float(m), float(se), frac, vals)


def verify_hn(case: IsomorphismCase, seed: int = 0) -> ExperimentReport:
    if case.model != "Hn":
        raise ValueError("verify_hn needs an Hn case")
    rep = _new_report("dynkin-hn", case, seed)
    graph, a, targets, c, n = case.graph, case.a, case.targets, case.decay, case.n
    h = np.asarray(graph.h)

    # walk side: z from an independent chain, then nested walks
    outer = sample_hn(graph, n, case.mcmc, _lane(case, seed, _RHS_CHAIN, rep, "outer sigma chain"))
    S = draw_s_tilde(outer, _lane(case, seed, _RHS_SPINS, rep, "outer spins"))
    e = np.exp(outer.samples)
    z = np.cosh(outer.samples) + 0.5 * e * (S * S).sum(axis=2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BudgetWarning)
        nest = nested_rhs(graph, a, z, case.g, case.n_inner, _lane(case, seed, _RHS_WALKS, rep, "inner walks"),
                          case.strategy, case.mcmc.n_batches)
    note = f"inner variance share {nest.inner_fraction:.2f}"
    for w in caught:
        note += f"; warning: {w.message}"
        warnings.warn(w.message, BudgetWarning, stacklevel=2)
    rhs_flag = _chain_flag(outer)

    if case.small() and n == 2:
        cv = case.c

        def F(x, y, zz):
            out = y[..., a] * sum(y[..., b] for b in targets)
            if cv is not None and any(cv):
                out = out * np.exp(-sum(ci * (zz[..., i] - 1.0) for i, ci in enumerate(cv)))
            return out

        lhs = exact_expectation_hn(graph, F, n=2)
        rep.add(rp.stat(f"{case.name}: nested walks vs quadrature", nest.mean, nest.stderr, lhs.value, 0.0,
                        forced=rhs_flag, note=note))
        if graph.n_vertices == 1 or np.ptp(h) == 0:
            sr = exact_expectation_hn(graph, lambda x, y, zz: y[..., a] * sum(h[b] * y[..., b] for b in range(len(h))))
            za = exact_expectation_hn(graph, lambda x, y, zz: zz[..., a])
            rep.add(rp.exact(f"{case.name}: quadrature sum_b h_b <y_a y_b> = <z_a>", sr.value, za.value, tol=1e-6))
    if case.use_chain:
        chain = sample_hn(graph, n, case.mcmc, _lane(case, seed, _LHS_CHAIN, rep, "sigma chain"))
        flag = _chain_flag(chain)
        m, se = batch_means(decay_two_point_series(chain, a, targets, c), n_batches=case.mcmc.n_batches)
        forced = flag or rhs_flag
        rep.add(rp.stat(f"{case.name}: chain vs nested walks", float(m), float(se), nest.mean, nest.stderr,
                        forced=forced, note=f"{_tau_note(chain)}; {note}"))
        sm, sse = h_weighted_sum_rule(chain, a)
        zm, zse = batch_means(z[:, a], n_batches=case.mcmc.n_batches)
        rep.add(rp.stat(f"{case.name}: chain sum_b h_b <y_a y_b> vs outer <z_a>", float(sm), float(sse),
                        float(zm), float(zse), forced=forced))
    return rep


def verify_case(case: IsomorphismCase, seed: int = 0) -> ExperimentReport:
    if case.model == "Hn":
        return verify_hn(case, seed)
    if case.c is None and case.b0 is None:
        return verify_h22_two_point(case, seed)
    return verify_h22_general_g(case, seed)


def write_summary_csv(reports, path) -> None:
    """One row per check: ``case_id, lhs, lhs_se, rhs, rhs_se, z, verdict``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case_id", "lhs", "lhs_se", "rhs", "rhs_se", "z", "verdict"])
        for rep in reports:
            for r in rep.records:
                z = "" if r.z is None else repr(float(r.z))
                w.writerow([r.name, repr(r.lhs), repr(r.lhs_se), repr(r.rhs), repr(r.rhs_se), z, r.verdict])


def with_budget(case: IsomorphismCase, **kw) -> IsomorphismCase:
    return replace(case, h=None, **kw)
