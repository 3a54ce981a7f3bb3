"""Command-line runner.

    vrjplab <kind> --config PATH --seed N --out DIR [--threads K] [--quick]
    vrjplab replay REPORT --out DIR [--threads K]

Exit status: 0 all checks pass, 1 some check failed, 2 inconclusive (and
nothing failed), 3 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import report as rp
from .config import ConfigError
from .report import ExperimentReport, file_digest
from .rng import lane

EXIT_USAGE = 3
THREADS_ENV = "VRJPLAB_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def default_config_path(kind: str) -> Path:
    return Path(str(resources.files("vrjplab") / "configs" / f"{kind}.toml"))


# ---------------------------------------------------------------- helpers

def build_graph(cfg: dict):
    from .graph import TorusSpec, WeightedGraph, build_torus

    g = cfg["graph"]
    if g["type"] == "torus":
        graph = build_torus(TorusSpec.nearest_neighbour(g["d"], g["L"], g["beta"], g["h"] or 1.0))
    elif g["type"] == "edges":
        edges = {(int(i), int(j)): float(b) for i, j, b in g["edges"]}
        graph = WeightedGraph.from_edges(g["n_vertices"], edges, g["h"])
    else:
        graph = WeightedGraph.path(g["n_vertices"], g["beta"], g["h"])
    if g["h_list"]:
        graph = graph.with_h(np.asarray(g["h_list"], dtype=float))
    return graph


def mcmc_params(cfg: dict):
    from .chain import MCMCParams
    return MCMCParams(**{k: v for k, v in cfg["mcmc"].items()})


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _chain_flag(chain):
    return None if chain.converged() else rp.INCONCLUSIVE


# ---------------------------------------------------------------- kinds

def run_simulate_vrjp(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .vrjp import discounted_profile, simulate

    graph = build_graph(cfg)
    v = cfg["vrjp"]
    start, seed = v["start"], cfg["seed"]
    rep.lane("vrjp", 0, 0, "single trajectory")
    traj = simulate(graph, start, None, v["horizon"], lane(seed, "vrjp", 0, 0))
    traj.to_csv(out / "trajectory.csv")
    ell = traj.local_times_at(v["horizon"])
    rep.add(rp.exact("local times sum to the horizon", float(ell.sum()), v["horizon"], 1e-9 * v["horizon"]))
    rep.lane("vrjp", 1, 0, "discounted occupation")
    prof = discounted_profile(graph, start, ell0=None, n_samples=v["n_traj"], rng=lane(seed, "vrjp", 1, 0),
                              strategy=v["strategy"])
    _write_rows(out / "occupation.csv", ["vertex", "mean", "stderr"],
                [(b, prof.mean[b], prof.stderr[b]) for b in range(graph.n_vertices)])
    h = np.asarray(graph.h)
    if np.ptp(h) == 0:
        if prof.total_stderr == 0:
            rep.add(rp.exact("sum_b occupation(b) = 1/h", prof.total, 1 / h[0], prof.tail_bound + 1e-12))
        else:
            rep.add(rp.stat("sum_b occupation(b) = 1/h", prof.total, prof.total_stderr, 1 / h[0]))


def run_sample_h22(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .chain import batch_mean_matrix
    from .sigma_h22 import exact_expectation_h22, sample_h22, ward_check, y_product

    graph = build_graph(cfg)
    rep.lane("sigma_h22", 0, 0, "chain")
    chain = sample_h22(graph, mcmc_params(cfg), lane(cfg["seed"], "sigma_h22", 0, 0))
    chain.write_diagnostics(out / "diagnostics.csv")
    m, se = batch_mean_matrix(chain.rb_batches)
    n = graph.n_vertices
    _write_rows(out / "two_point.csv", ["a", "b", "mean", "stderr"],
                [(a, b, m[a, b], se[a, b]) for a in range(n) for b in range(n)])
    flag = _chain_flag(chain)
    ward = ward_check(chain, rng=lane(cfg["seed"], "sigma_h22", 0, 1))
    for r in ward.records:
        rep.add(rp.stat(f"Ward: {r.name}", r.value, r.stderr, 0.0, forced=flag))
    if n <= 2:
        for a in range(n):
            for b in range(a, n):
                q = exact_expectation_h22(graph, y_product(a, b))
                rep.add(rp.stat(f"<y_{a} y_{b}>: chain vs quadrature", m[a, b], se[a, b], q.value, forced=flag))
        for a in range(n):
            q = exact_expectation_h22(graph, lambda t, s, a=a: np.exp(t[..., a]) + 0 * s[..., 0])
            rep.add(rp.exact(f"quadrature <e^t_{a}> = 1", q.value, 1.0, 1e-8))
            for b in range(a, n):
                q2 = exact_expectation_h22(graph, lambda t, s, a=a, b=b: np.exp(t[..., a] + t[..., b]) + 0 * s[..., 0])
                q1 = exact_expectation_h22(graph, y_product(a, b))
                rep.add(rp.exact(f"quadrature <e^(t_{a}+t_{b})> = 1 + <y_{a} y_{b}>", q2.value, 1 + q1.value, 1e-8))
    rep.notes["tau_int"] = chain.tau_int()
    rep.notes["acceptance"] = chain.acceptance()


def _batched(series: np.ndarray, n_batches: int) -> np.ndarray:
    per = len(series) // n_batches
    idx = np.minimum(np.arange(len(series)) // per, n_batches - 1)
    return np.array([series[idx == b].mean(axis=0) for b in range(n_batches)])


def run_sample_hn(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .chain import batch_mean_matrix
    from .sigma_hn import conditional_z, exact_expectation_hn, sample_hn, write_diagnostics

    graph = build_graph(cfg)
    n = cfg["model"]["n"]
    seed = cfg["seed"]
    rep.lane("sigma_hn", 0, 0, "chain")
    chain = sample_hn(graph, n, mcmc_params(cfg), lane(seed, "sigma_hn", 0, 0))
    rep.lane("sigma_hn", 0, 1, "spin draws for diagnostics")
    write_diagnostics(chain, out / "diagnostics.csv", lane(seed, "sigma_hn", 0, 1))
    flag = _chain_flag(chain)
    h = np.asarray(graph.h)
    zb = _batched(conditional_z(chain), chain.params.n_batches)
    yb = chain.rb_batches @ h
    m, se = batch_mean_matrix(yb - zb)
    mz, sz = batch_mean_matrix(zb)
    my, sy = batch_mean_matrix(chain.rb_batches)
    nv = graph.n_vertices
    _write_rows(out / "moments.csv", ["a", "z_mean", "z_stderr", "y2_mean", "y2_stderr"],
                [(a, mz[a], sz[a], my[a, a], sy[a, a]) for a in range(nv)])
    for a in range(nv):
        rep.add(rp.stat(f"sum_b h_b <y_{a} y_b> = <z_{a}>", m[a], se[a], 0.0, forced=flag))
    if nv <= 2 and n == 2:
        for a in range(nv):
            qz = exact_expectation_hn(graph, lambda x, y, z, a=a: z[..., a])
            rep.add(rp.stat(f"<z_{a}>: chain vs quadrature", mz[a], sz[a], qz.value, forced=flag))
            qy = exact_expectation_hn(graph, lambda x, y, z, a=a: y[..., a] ** 2)
            rep.add(rp.stat(f"<y_{a}^2>: chain vs quadrature", my[a, a], sy[a, a], qy.value, forced=flag))
    rep.notes["tau_int"] = chain.tau_int()
    rep.notes["acceptance"] = chain.acceptance()


def run_verify_susy(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .graph import WeightedGraph
    from .grassmann import h22_expectation_exact, run_battery, verify_berezinian, verify_susy_horo_identities
    from .sigma_hn import verify_coordinate_identities, verify_jacobian_hn

    s = cfg["susy"]
    rep.lane("grassmann", 0, 0, "random base points")
    gen = lane(cfg["seed"], "grassmann", 0, 0)
    rows = []

    def add(rec, value, expected):
        rep.add(rec)
        rows.append((rec.name, value, expected, rec.verdict))

    for g, name in ((WeightedGraph.path(1, 1.0, 0.5), "1 vertex h=0.5"),
                    (WeightedGraph.path(2, 1.0, 1.0), "2 vertices beta=1 h=1")):
        v = h22_expectation_exact(g).value
        add(rp.exact(f"normalisation <1> = 1, {name}", v, 1.0, s["tol"]), v, 1.0)
    for r in run_battery(tol=s["tol"], rng=gen):
        add(rp.exact(f"localisation: {r.name}", r.value, r.expected, s["tol"]), r.value, r.expected)
        add(rp.exact(f"Q-closed: {r.name}", r.q_residual, 0.0, 1e-10), r.q_residual, 0.0)
    pts = [(float(t), float(x)) for t, x in zip(gen.uniform(-2, 2, s["n_points"]), gen.uniform(-2, 2, s["n_points"]))]
    ber = verify_berezinian(pts)
    for k, err in ber.checks.items():
        add(rp.exact(f"Berezinian: {k}", err, 0.0, ber.tol), err, 0.0)
    multi = [(gen.uniform(-1.5, 1.5, m), gen.uniform(-1.5, 1.5, m)) for m in (1, 2) for _ in range(max(1, s["n_points"] // 2))]
    ids = verify_susy_horo_identities(multi)
    for k, err in ids.checks.items():
        add(rp.exact(f"super horospherical: {k}", err, 0.0, ids.tol), err, 0.0)
    for n in s["hn_dims"]:
        for k in range(max(1, s["n_points"] // 2)):
            point = (float(gen.uniform(-1.0, 1.0)), gen.uniform(-1.0, 1.0, n - 1))
            cr = verify_coordinate_identities(n, (gen.uniform(-1.0, 1.0, 2), gen.uniform(-1.0, 1.0, (2, n - 1))))
            for name, err in cr.errors.items():
                add(rp.exact(f"H^{n} coordinates #{k}: {name}", err, 0.0, cr.tol), err, 0.0)
            det_fd, closed, err, _ = verify_jacobian_hn(n, point)
            add(rp.exact(f"H^{n} Jacobian #{k}: det J = e^((n-1)t) z", err, 0.0, 1e-6), det_fd, closed)
    _write_rows(out / "checks.csv", ["check", "value", "expected", "verdict"], rows)


def _dynkin_cases(cfg):
    from .dynkin import IsomorphismCase

    graph = build_graph(cfg)
    d, v = cfg["dynkin"], cfg["vrjp"]
    b0 = None if d["b0"] < 0 else d["b0"]
    c = tuple(float(x) for x in d["c"]) or None
    common = dict(n_traj=v["n_traj"], mcmc=mcmc_params(cfg), n_inner=v["n_inner"], strategy=v["strategy"],
                  use_oracle=d["use_oracle"], use_chain=d["use_chain"], shared_seed=d["shared_seed"])
    cases = []
    for k, chk in enumerate(d["checks"]):
        if chk == "two-point":
            cases.append(IsomorphismCase(graph, "H22", a=d["a"], b=d["b"], case_id=k, name="H22 two-point", **common))
        elif chk == "general-g":
            cases.append(IsomorphismCase(graph, "H22", a=d["a"], b0=b0, c=c, case_id=k, name="H22 decay g", **common))
        else:
            cases.append(IsomorphismCase(graph, "Hn", n=d["hn_n"], a=d["a"], b0=b0, c=c, case_id=k,
                                         name=f"H^{d['hn_n']} decay g", **common))
    return cases


def run_verify_dynkin(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .dynkin import verify_case, write_summary_csv

    cases = _dynkin_cases(cfg)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        reports = list(pool.map(lambda c: verify_case(c, cfg["seed"]), cases))
    for r in reports:
        rep.extend(r.records)
        rep.lanes.extend(r.lanes)
    write_summary_csv(reports, out / "dynkin_summary.csv")


def run_verify_mw(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .graph import TorusSpec
    from .merminwagner import check_bound, estimate_spectrum, lambda_quadratic_ok, write_plot_data

    m = cfg["mw"]
    params = mcmc_params(cfg)
    beta = cfg["graph"]["beta"]
    cells = [(int(d), int(L), float(h), model) for d, L in m["tori"] for h in m["h_values"] for model in m["models"]]

    def run(i):
        d, L, h, model = cells[i]
        spec = TorusSpec.nearest_neighbour(d, L, beta, h)
        est = estimate_spectrum(spec, model, params, lane(cfg["seed"], "merminwagner", i, 0), n=m["n"],
                                method=m["method"])
        return spec, est, check_bound(est, threshold=m["threshold"])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run, range(len(cells))))
    seen = set()
    for i, ((d, L, h, model), (spec, est, br)) in enumerate(zip(cells, results)):
        rep.lane("merminwagner", i, 0, f"chain d={d} L={L} h={h:g} {model}")
        tag = f"d{d}_L{L}_h{h:g}_{model if model == 'H22' else 'H' + str(m['n'])}"
        label = f"d={d} L={L} h={h:g} {model if model == 'H22' else 'H^' + str(m['n'])} (kappa={br.kappa:g}): "
        rep.extend(br.records(label))
        rep.add(rp.exact(f"{label}G^(p) = G^(-p)", est.symmetry_error(), 0.0, 1e-12))
        br.write_csv(out / f"spectrum_{tag}.csv")
        write_plot_data(est, out / f"spectrum_{tag}.dat")
        if (d, L) not in seen:
            seen.add((d, L))
            rep.add(rp.exact(f"d={d} L={L}: lambda(p) <= C(beta)|p|^2", float(lambda_quadratic_ok(spec)), 1.0, 0.0))


def run_scan_h(cfg, out: Path, rep: ExperimentReport, threads: int):
    from .merminwagner import h_scan

    s = cfg["scan"]
    res = h_scan(s["d"], [int(x) for x in s["L_values"]], [float(x) for x in s["h_values"]], beta=s["beta"],
                 model=s["model"], n=cfg["model"]["n"], n_traj=cfg["vrjp"]["n_traj"], params=mcmc_params(cfg),
                 seed=cfg["seed"], backend=s["backend"], max_change=s["max_change"] or None,
                 threshold=s["threshold"], threads=threads)
    for ih, h in enumerate(s["h_values"]):
        for iL, L in enumerate(s["L_values"]):
            if any(c.h == h and c.L == L for c in res.cells):
                rep.lane("merminwagner", ih, iL, f"G(0) at L={L} h={h:g}")
    rep.extend(res.records)
    res.write_csv(out / "scan.csv")
    res.write_plot_data(out / "scan.dat")
    rep.notes["fit"] = res.fit
    rep.notes["plateau_L"] = {repr(h): L for h, L in res.plateau.items()}


RUNNERS = {
    "simulate-vrjp": run_simulate_vrjp,
    "sample-hn": run_sample_hn,
    "sample-h22": run_sample_h22,
    "verify-susy": run_verify_susy,
    "verify-dynkin": run_verify_dynkin,
    "verify-mw": run_verify_mw,
    "scan-h": run_scan_h,
}


# ---------------------------------------------------------------- driver

def prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from None
    return out


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV}={env!r} is not an integer") from None
    if threads < 1:
        raise UsageError("thread count must be at least 1")
    return threads


def run(cfg: dict, out, threads: int = 1) -> ExperimentReport:
    """Execute a validated config, write data files and ``report.jsonl`` into ``out``."""
    out = prepare_out(out)
    rep = ExperimentReport(cfg["kind"], cfg, cfg["seed"])
    t0 = time.perf_counter()
    RUNNERS[cfg["kind"]](cfgmod.effective(cfg), out, rep, threads)
    rep.timing = {"wall_seconds": round(time.perf_counter() - t0, 3), "threads": threads}
    rep.files = {p.name: file_digest(p) for p in sorted(out.iterdir())
                 if p.suffix in (".csv", ".dat") and p.is_file()}
    rep.write(out / "report.jsonl")
    return rep


def replay(report_path, out, threads: int = 1):
    """Re-run a report's config and seed; returns ``(report, {file: matches})``."""
    old = ExperimentReport.read(report_path)
    if old.version != rp.VERSION:
        raise UsageError(f"report was produced by version {old.version}, this is {rp.VERSION}; "
                         "bit-identical replay is only promised for the same build")
    cfg = cfgmod.validate({k: v for k, v in old.config.items()})
    new = run(cfg, out, threads)
    match = {name: new.files.get(name) == digest for name, digest in old.files.items()}
    for name in new.files:
        match.setdefault(name, False)
    return new, match


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vrjplab", description="Sigma-model and VRJP experiments.")
    sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in cfgmod.KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", type=Path, default=None,
                        help="TOML config (defaults to the packaged one for this kind)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=Path, required=True)
        sp.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
        sp.add_argument("--quick", action="store_true", help="reduced budgets for smoke runs")
    rp_ = sub.add_parser("replay")
    rp_.add_argument("report", type=Path)
    rp_.add_argument("--out", type=Path, required=True)
    rp_.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        threads = resolve_threads(args.threads)
        if args.kind == "replay":
            new, match = replay(args.report, args.out, threads)
            for name, ok in sorted(match.items()):
                print(f"{'identical' if ok else 'DIFFERENT':>10}  {name}")
            return 0 if match and all(match.values()) else 1
        path = args.config or default_config_path(args.kind)
        cfg = cfgmod.load(path, kind=args.kind, seed=args.seed, quick=args.quick)
        prepare_out(args.out)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"vrjplab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = run(cfg, args.out, threads)
    print(rep.summary())
    return rep.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
