"""Fourier two-point function on tori, the lower bound on it, and field scans.

Conventions: ``G(j) = <y_0 y_j>``, ``G^(p) = sum_j G(j) e^{i p.j}``, which for
a translation-invariant measure is ``<|S(p)|^2>`` with
``S(p) = |Lambda|^{-1/2} sum_j e^{i p.j} y_j``. The bound is

    G^(p) >= 1 / ((1 + kappa G(0)) lambda(p) + h),

``kappa = 1`` for H^{2|2} and ``kappa = n + 1`` for H^n. Averaging it over
the dual lattice gives the self-consistency inequality

    G(0) >= L^{-d} sum_p 1 / ((1 + kappa G(0)) lambda(p) + h).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report as rp
from .chain import MCMCParams, TChain
from .graph import TorusSpec, build_torus, dual_lattice, lambda_table, quadratic_constant
from .report import CheckRecord
from .sigma_h22 import draw_s, sample_h22
from .sigma_hn import sample_hn
from .stats import batch_means
from .vrjp import discounted_profile

PARSEVAL_TOL = 1e-10


def kappa_for(model: str, n: int = 2) -> float:
    if model == "H22":
        return 1.0
    if model == "Hn":
        return n + 1.0
    raise ValueError(f"unknown model {model!r}")


def _shift_index(spec: TorusSpec) -> np.ndarray:
    """``idx[j, r]`` is the vertex ``j + r`` (both in C order)."""
    dims = spec.dims
    n = spec.n_vertices
    coords = np.array(np.unravel_index(np.arange(n), dims)).T
    out = np.empty((n, n), dtype=np.int64)
    for r, dr in enumerate(coords):
        out[:, r] = np.ravel_multi_index(((coords + dr) % spec.L).T, dims)
    return out


def _neg_index(spec: TorusSpec) -> np.ndarray:
    coords = np.array(np.unravel_index(np.arange(spec.n_vertices), spec.dims)).T
    return np.ravel_multi_index(((-coords) % spec.L).T, spec.dims)


def fourier_from_matrix(spec: TorusSpec, G: np.ndarray, idx=None, neg=None):
    """``(G^(p), G(0))`` from a two-point matrix, translation-averaged and symmetrised.

    ``G`` may carry a leading batch axis. ``G^`` is returned in the order of
    :func:`vrjplab.graph.dual_lattice`.
    """
    idx = _shift_index(spec) if idx is None else idx
    neg = _neg_index(spec) if neg is None else neg
    G = np.asarray(G, dtype=float)
    n = spec.n_vertices
    rows = np.arange(n)[:, None]
    g = G[..., rows, idx].mean(axis=-2)
    g = 0.5 * (g + g[..., neg])
    shape = G.shape[:-2] + spec.dims
    axes = tuple(range(-spec.d, 0))
    ghat = np.fft.fftn(g.reshape(shape), axes=axes).real.reshape(G.shape[:-2] + (n,))
    return ghat, np.diagonal(G, axis1=-2, axis2=-1).mean(axis=-1)


def fourier_from_field(spec: TorusSpec, y: np.ndarray) -> np.ndarray:
    """``|S(p)|^2`` per row of ``y`` (rows are fields in C order)."""
    y = np.asarray(y, dtype=float)
    shape = y.shape[:-1] + spec.dims
    axes = tuple(range(-spec.d, 0))
    S = np.fft.fftn(y.reshape(shape), axes=axes)
    return (np.abs(S) ** 2).reshape(y.shape) / spec.n_vertices


@dataclass
class SpectralEstimate:
    spec: TorusSpec
    model: str
    n: int
    h: float
    ghat: np.ndarray
    ghat_se: np.ndarray
    g0: float
    g0_se: float
    lam: np.ndarray
    ghat_batches: np.ndarray
    g0_batches: np.ndarray
    parseval_error: float
    converged: bool
    note: str = ""

    @property
    def kappa(self) -> float:
        return kappa_for(self.model, self.n)

    def symmetry_error(self) -> float:
        neg = _neg_index(self.spec)
        return float(np.abs(self.ghat - self.ghat[neg]).max())


def estimate_spectrum(spec: TorusSpec, model: str = "H22", params: MCMCParams | None = None, rng=0, *,
                      n: int = 2, method: str = "rb", chain: TChain | None = None) -> SpectralEstimate:
    """``G^(p)`` at every dual point with batch-means errors.

    ``method="rb"`` transforms the batch-averaged conditional covariances;
    ``"plain"`` draws ``s | t`` and averages ``|S(p)|^2``.
    """
    params = params or MCMCParams()
    graph = build_torus(spec)
    if chain is None:
        chain = sample_h22(graph, params, rng) if model == "H22" else sample_hn(graph, n, params, rng)
    lam = lambda_table(spec)
    if method == "rb":
        gb, g0b = fourier_from_matrix(spec, chain.rb_batches)
        par = float(np.abs(gb.mean(axis=1) - g0b).max() / max(1.0, float(np.abs(g0b).max())))
        nb = gb.shape[0]
        ghat, ghat_se = gb.mean(axis=0), gb.std(axis=0, ddof=1) / math.sqrt(nb)
        g0, g0_se = float(g0b.mean()), float(g0b.std(ddof=1) / math.sqrt(nb))
    elif method == "plain":
        S = draw_s(graph, chain.samples, np.random.default_rng(chain.seed + 1))
        y = np.exp(chain.samples) * S
        per = fourier_from_field(spec, y)
        y2 = (y * y).mean(axis=1)
        par = float(np.abs(per.mean(axis=1) - y2).max() / max(1.0, float(y2.max())))
        nb = params.n_batches
        b = chain.n_samples // nb
        gb = per[: b * nb].reshape(nb, b, -1).mean(axis=1)
        g0b = y2[: b * nb].reshape(nb, b).mean(axis=1)
        ghat, ghat_se = batch_means(per, n_batches=nb)
        g0, g0_se = batch_means(y2, n_batches=nb)
        neg = _neg_index(spec)
        ghat = 0.5 * (ghat + ghat[neg])
        gb = 0.5 * (gb + gb[:, neg])
    else:
        raise ValueError(f"unknown method {method!r}")
    return SpectralEstimate(spec, model, n, float(spec.h), np.asarray(ghat), np.asarray(ghat_se),
                            float(g0), float(g0_se), lam, gb, g0b, par, chain.converged(),
                            note=f"tau_int={chain.tau_int():.2f}")


@dataclass
class BoundReport:
    estimate: SpectralEstimate
    kappa: float
    bound: np.ndarray
    margin: np.ndarray
    margin_se: np.ndarray
    threshold: float = 4.0

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.margin_se > 0, self.margin / self.margin_se,
                            np.where(self.margin >= 0, np.inf, -np.inf))

    @property
    def passed(self) -> bool:
        return bool((self.z > -self.threshold).all())

    def worst(self) -> int:
        return int(np.argmin(self.z))

    def records(self, label: str = "") -> list[CheckRecord]:
        est = self.estimate
        forced = None if est.converged else rp.INCONCLUSIVE
        k = self.worst()
        p = tuple(int(x) for x in dual_lattice(est.spec)[k])
        out = [CheckRecord(f"{label}bound at all {len(self.margin)} momenta (worst k={p})",
                           float(self.margin[k]), float(self.margin_se[k]), 0.0, 0.0, kind="bound",
                           threshold=self.threshold, forced=forced,
                           note=f"passing momenta {int((self.z > -self.threshold).sum())}/{len(self.z)}")]
        out.append(rp.exact(f"{label}Parseval audit", est.parseval_error, 0.0, PARSEVAL_TOL))
        if est.model == "H22":
            out.append(rp.stat(f"{label}G^(0) = 1/h", est.ghat[0], est.ghat_se[0], 1.0 / est.h, 0.0,
                               threshold=3.0, forced=forced))
        return out

    def write_csv(self, path) -> None:
        est = self.estimate
        ks = dual_lattice(est.spec)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "L", "h", "model"] + [f"p_index{i}" for i in range(est.spec.d)]
                       + ["Ghat", "Ghat_se", "lambda", "bound", "margin", "z"])
            model = est.model if est.model == "H22" else f"H{est.n}"
            for i, k in enumerate(ks):
                w.writerow([est.spec.d, est.spec.L, repr(est.h), model] + [int(x) for x in k]
                           + [repr(float(v)) for v in (est.ghat[i], est.ghat_se[i], est.lam[i],
                                                       self.bound[i], self.margin[i], self.z[i])])


def check_bound(est: SpectralEstimate, kappa: float | None = None, threshold: float = 4.0) -> BoundReport:
    """Margins ``G^(p) - 1/((1 + kappa G(0)) lambda(p) + h)`` with the estimated ``G(0)``.

    Errors are propagated to first order, batch by batch, so the correlation
    between ``G^(p)`` and ``G(0)`` is kept.
    """
    kappa = est.kappa if kappa is None else float(kappa)
    lam, h = est.lam, est.h
    den = (1.0 + kappa * est.g0) * lam + h
    bound = 1.0 / den
    slope = -kappa * lam / den ** 2
    lin = est.ghat_batches - bound - slope * (est.g0_batches[:, None] - est.g0)
    nb = lin.shape[0]
    margin = est.ghat - bound
    se = lin.std(axis=0, ddof=1) / math.sqrt(nb)
    return BoundReport(est, kappa, bound, margin, se, threshold)


def self_consistent_rhs(spec: TorusSpec, g0: float, kappa: float, h: float, lam=None) -> tuple[float, float]:
    """``L^{-d} sum_p 1/((1 + kappa g0) lambda(p) + h)`` and its derivative in ``g0``."""
    lam = lambda_table(spec) if lam is None else lam
    den = (1.0 + kappa * g0) * lam + h
    return float((1.0 / den).mean()), float((-kappa * lam / den ** 2).mean())


def lambda_quadratic_ok(spec: TorusSpec) -> bool:
    """``lambda(p) <= C |p|^2`` with ``p`` folded into ``(-pi, pi]^d``."""
    from .graph import centered_momenta
    p = centered_momenta(spec)
    return bool((lambda_table(spec) <= quadratic_constant(spec) * (p * p).sum(axis=1) + 1e-12).all())


@dataclass
class ScanCell:
    d: int
    L: int
    h: float
    g0: float
    g0_se: float
    n_samples: int


@dataclass
class ScanResult:
    d: int
    beta: float
    model: str
    cells: list
    stabilized: dict
    plateau: dict
    records: list = field(default_factory=list)
    fit: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "L", "h", "model", "G0", "G0_se", "n_samples", "plateau"])
            for c in self.cells:
                w.writerow([c.d, c.L, repr(c.h), self.model, repr(c.g0), repr(c.g0_se), c.n_samples,
                            int(self.plateau.get(c.h) == c.L)])

    def write_plot_data(self, path) -> None:
        """``x y yerr`` triplets: ``h`` and the stabilised ``G(0)``."""
        with open(path, "w") as fh:
            fh.write("# h G0 G0_se\n")
            for h, (g, se) in sorted(self.stabilized.items(), reverse=True):
                fh.write(f"{h!r} {g!r} {se!r}\n")


def _vrjp_g0(spec: TorusSpec, n_traj: int, rng, strategy: str = "killed-occupation"):
    graph = build_torus(spec)
    prof = discounted_profile(graph, 0, ell0=None, n_samples=n_traj, rng=rng, strategy=strategy)
    return float(prof.mean[0]), float(prof.stderr[0])


def h_scan(d: int, Ls, hs, *, beta: float = 1.0, model: str = "H22", n: int = 2, n_traj: int = 20_000,
           params: MCMCParams | None = None, seed: int = 0, backend: str = "vrjp",
           max_change: float | None = None, threshold: float = 4.0, threads: int = 1) -> ScanResult:
    """``G(0)`` over tori of increasing side at each field in ``hs`` (decreasing).

    At each ``h`` the side grows through ``Ls`` until two successive values
    agree within 2 combined standard errors; the larger-``L`` value is the
    stabilised ``G(0)``. Without a plateau the field is marked inconclusive.

    ``backend="vrjp"`` uses the discounted occupation of the origin by the
    walk started there (H^{2|2} only); ``"chain"`` uses the sigma-model chain.
    Trend records require strict increase beyond ``threshold`` combined
    errors between successive fields. With ``max_change`` set, the records
    instead require a relative change below it between the last two fields.
    Fields run concurrently on ``threads`` workers; every cell has its own
    seed lane, so results do not depend on ``threads``.
    """
    from .rng import lane

    hs = [float(h) for h in hs]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h values must be strictly decreasing")
    if backend == "vrjp" and model != "H22":
        raise ValueError("the walk backend computes the H^{2|2} two-point function only")
    kappa = kappa_for(model, n)

    def field_cells(ih: int, h: float):
        out, recs, prev = [], [], None
        for iL, L in enumerate(Ls):
            spec = TorusSpec.nearest_neighbour(d, L, beta, h)
            rng = lane(seed, "merminwagner", ih, iL)
            if backend == "vrjp":
                g0, se = _vrjp_g0(spec, n_traj, rng)
                ns = n_traj
            else:
                est = estimate_spectrum(spec, model, params, rng, n=n)
                g0, se, ns = est.g0, est.g0_se, est.ghat_batches.shape[0]
            out.append(ScanCell(d, L, h, g0, se, ns))
            rhs, slope = self_consistent_rhs(spec, g0, kappa, h)
            recs.append(CheckRecord(f"d={d} L={L} h={h:g}: G(0) >= L^-d sum_p bound(p)", g0, se, rhs,
                                    abs(slope) * se, kind="bound", threshold=threshold))
            if prev is not None and abs(g0 - prev[0]) < 2.0 * math.hypot(se, prev[1]):
                return out, recs, (g0, se), L
            prev = (g0, se)
        return out, recs, None, None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda a: field_cells(*a), list(enumerate(hs))))
    cells, stab, plat = [], {}, {}
    records = []
    for h, (cs, recs, st, pl) in zip(hs, results):
        cells += cs
        records += recs
        if st is not None:
            stab[h], plat[h] = st, pl
    hv = [h for h in hs if h in stab]
    for h in hs:
        if h not in stab:
            records.append(CheckRecord(f"d={d} h={h:g}: finite-size plateau", math.nan, 0.0, math.nan, 0.0,
                                       forced=rp.INCONCLUSIVE, note=f"no plateau up to L={max(Ls)}"))
    if max_change is None:
        for h1, h2 in zip(hs, hs[1:]):
            if h1 in stab and h2 in stab:
                (g1, s1), (g2, s2) = stab[h1], stab[h2]
                records.append(CheckRecord(f"d={d}: G(0) at h={h2:g} exceeds G(0) at h={h1:g}", g2, s2, g1, s1,
                                           kind="trend", threshold=threshold))
    elif len(hs) >= 2:
        h1, h2 = hs[-2], hs[-1]
        forced = None if (h1 in stab and h2 in stab) else rp.INCONCLUSIVE
        (g1, s1) = stab.get(h1, (math.nan, 0.0))
        (g2, s2) = stab.get(h2, (math.nan, 0.0))
        rel = abs(g2 - g1) / g1 if g1 == g1 and g2 == g2 else math.nan
        rel_se = math.hypot(s1, s2) / g1 if g1 == g1 else 0.0
        records.append(CheckRecord(f"d={d}: relative change of G(0) from h={h1:g} to h={h2:g} below {max_change:g}",
                                   rel, rel_se, max_change, 0.0, kind="less", forced=forced))
    fit = {}
    if len(hv) >= 2:
        x = np.sqrt(np.log(1.0 / np.array(hv)).clip(min=0.0))
        y = np.array([stab[h][0] for h in hv])
        fit["c_sqrt_log"] = float((x @ y) / (x @ x)) if (x @ x) > 0 else math.nan
        fit["loglog_slope"] = float(np.polyfit(np.log(1.0 / np.array(hv)), np.log(y), 1)[0])
    return ScanResult(d, beta, model, cells, stab, plat, records, fit)


def write_plot_data(est: SpectralEstimate, path) -> None:
    """``x y yerr`` with ``x = lambda(p)``: ``G^(p)`` against the bound's argument."""
    with open(Path(path), "w") as fh:
        fh.write("# lambda Ghat Ghat_se\n")
        for l, g, s in zip(est.lam, est.ghat, est.ghat_se):
            fh.write(f"{l!r} {g!r} {s!r}\n")
