"""Exact event-driven simulation of the vertex-reinforced jump process.

While the walk sits at ``i`` only ``ell[i]`` grows and no jump rate out of
``i`` depends on ``ell[i]`` (``beta_ii = 0``), so the exit rate
``R = sum_j beta_ij (1 + ell_j)`` is constant on each holding interval. Each
step therefore draws one exponential holding time and one destination; there
is no thinning and no time discretisation.

Discounted functionals ``int_0^inf E[g(X_t, L_t)] exp(-h t) dt`` are
estimated for the family ``g(b, ell) = 1{b = b0} exp(-<c, ell>)`` in closed
form on each holding interval, or for an arbitrary callable ``g`` through an
independent exponential killing time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba as nb
import numpy as np

from .graph import WeightedGraph
from .rng import as_generator, kernel_seed
from .stats import InsufficientSamples, Moments

DEFAULT_TAIL_EPS = 1e-10

INTERVAL = 0
KILLED_OCCUPATION = 1
KILLING = 2
STRATEGIES = {"interval": INTERVAL, "killed-occupation": KILLED_OCCUPATION, "killing": KILLING}


class VRJPError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    jump_times: np.ndarray
    states: np.ndarray
    ell0: np.ndarray
    final_local_times: np.ndarray
    horizon: float

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def holding_intervals(self):
        """``(vertex, t_start, t_end)`` triples covering ``[0, horizon]``."""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        return self.states, edges[:-1], edges[1:]

    def local_times_at(self, t: float) -> np.ndarray:
        ell = self.ell0.copy()
        v, a, b = self.holding_intervals()
        dt = np.clip(np.minimum(b, t) - a, 0.0, None)
        np.add.at(ell, v, dt)
        return ell

    def position_at(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return int(self.states[k])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("jump_index,time,vertex\n")
            fh.write(f"0,{0.0!r},{int(self.states[0])}\n")
            for k, (t, v) in enumerate(zip(self.jump_times, self.states[1:]), start=1):
                fh.write(f"{k},{float(t)!r},{int(v)}\n")


@nb.njit(cache=True)
def _exit_rate(i, indptr, indices, weights, ell):
    r = 0.0
    for k in range(indptr[i], indptr[i + 1]):
        r += weights[k] * (1.0 + ell[indices[k]])
    return r


@nb.njit(cache=True)
def _pick(i, u, indptr, indices, weights, ell):
    acc = 0.0
    last = -1
    for k in range(indptr[i], indptr[i + 1]):
        w = weights[k] * (1.0 + ell[indices[k]])
        if w > 0.0:
            last = indices[k]
        acc += w
        if u < acc:
            return indices[k]
    return last


@nb.njit(cache=True)
def _simulate_kernel(indptr, indices, weights, start, ell0, horizon, seed):
    np.random.seed(seed)
    ell = ell0.copy()
    cap = 64
    times = np.empty(cap)
    states = np.empty(cap + 1, dtype=np.int64)
    states[0] = start
    n = 0
    t = 0.0
    i = start
    while True:
        r = _exit_rate(i, indptr, indices, weights, ell)
        if r > 0.0:
            dt = -math.log(1.0 - np.random.random()) / r
        else:
            dt = math.inf
        if t + dt >= horizon:
            ell[i] += horizon - t
            break
        t += dt
        ell[i] += dt
        j = _pick(i, np.random.random() * r, indptr, indices, weights, ell)
        if n == cap:
            cap *= 2
            nt = np.empty(cap)
            nt[:n] = times[:n]
            times = nt
            ns = np.empty(cap + 1, dtype=np.int64)
            ns[: n + 1] = states[: n + 1]
            states = ns
        times[n] = t
        states[n + 1] = j
        n += 1
        i = j
    return times[:n].copy(), states[: n + 1].copy(), ell


@nb.njit(cache=True, nogil=True)
def _functional_kernel(indptr, indices, weights, kill, c, start, ell0, mode, t_max, n_traj, seed):
    """Per-vertex sums of ``int 1{X_t=b} exp(-<c,L_t>) (discount) dt`` over trajectories.

    Returns ``(s1, s2, tot1, tot2, jumps, status)`` where ``s1[b], s2[b]`` are the
    sum and sum of squares over trajectories of the per-trajectory value at
    ``b`` and ``tot*`` the same for the sum over ``b``.
    """
    np.random.seed(seed)
    nv = len(ell0)
    s1 = np.zeros(nv)
    s2 = np.zeros(nv)
    acc = np.zeros(nv)
    touched = np.zeros(nv, dtype=np.bool_)
    visited = np.empty(nv, dtype=np.int64)
    ell = ell0.copy()
    tot1 = 0.0
    tot2 = 0.0
    jumps = 0
    cl0 = 0.0
    for b in range(nv):
        cl0 += c[b] * ell0[b]
    for _ in range(n_traj):
        nvis = 0
        i = start
        t = 0.0
        logdisc = 0.0
        cl = cl0
        while True:
            r = _exit_rate(i, indptr, indices, weights, ell)
            if mode == 0:
                rate = r
            else:
                rate = r + kill[i]
            if rate > 0.0:
                dt = -math.log(1.0 - np.random.random()) / rate
            else:
                dt = math.inf
            last = False
            killed = False
            if mode == 0:
                if t + dt >= t_max:
                    dt = t_max - t
                    last = True
            elif dt == math.inf:
                return s1, s2, tot1, tot2, jumps, 1
            else:
                killed = np.random.random() * rate < kill[i]
                last = killed
            if not touched[i]:
                touched[i] = True
                visited[nvis] = i
                nvis += 1
            if mode == 0:
                a = kill[i] + c[i]
                if a > 0.0:
                    val = math.exp(-logdisc - cl) * (-math.expm1(-a * dt)) / a
                else:
                    val = math.exp(-logdisc - cl) * dt
                acc[i] += val
                logdisc += kill[i] * dt
            elif mode == 1:
                if c[i] > 0.0:
                    acc[i] += math.exp(-cl) * (-math.expm1(-c[i] * dt)) / c[i]
                else:
                    acc[i] += math.exp(-cl) * dt
            ell[i] += dt
            cl += c[i] * dt
            t += dt
            if mode == 2 and killed:
                acc[i] += math.exp(-cl) / kill[i]
            if last:
                break
            j = _pick(i, np.random.random() * r, indptr, indices, weights, ell)
            jumps += 1
            i = j
        tot = 0.0
        for q in range(nvis):
            b = visited[q]
            v = acc[b]
            s1[b] += v
            s2[b] += v * v
            tot += v
            acc[b] = 0.0
            touched[b] = False
            ell[b] = ell0[b]
        tot1 += tot
        tot2 += tot * tot
    return s1, s2, tot1, tot2, jumps, 0


def _check_ell(graph: WeightedGraph, ell0) -> np.ndarray:
    if ell0 is None:
        return np.zeros(graph.n_vertices)
    ell0 = np.array(ell0, dtype=float).reshape(-1)
    if ell0.shape != (graph.n_vertices,):
        raise VRJPError("ell0 has the wrong length")
    if not np.all(np.isfinite(ell0)):
        raise VRJPError("ell0 must be finite")
    if (ell0 < 0).any():
        raise VRJPError("ell0 must be non-negative")
    return ell0


def _check_start(graph: WeightedGraph, start: int) -> int:
    if not 0 <= int(start) < graph.n_vertices:
        raise VRJPError(f"start vertex {start} out of range")
    return int(start)


def simulate(graph: WeightedGraph, start: int, ell0, horizon: float, rng) -> Trajectory:
    """Sample ``(X_t, L_t)`` exactly on ``[0, horizon]``."""
    start = _check_start(graph, start)
    ell0 = _check_ell(graph, ell0)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise VRJPError("horizon must be positive and finite")
    seed = kernel_seed(as_generator(rng))
    times, states, ell = _simulate_kernel(
        graph.indptr, graph.indices, graph.weights, start, ell0, float(horizon), seed
    )
    assert times.size == 0 or np.all(np.diff(times) > 0), "duplicate jump times"
    return Trajectory(times, states, ell0, ell, float(horizon))


def discounted_occupation(traj: Trajectory, b: int, h: float) -> float:
    """``int 1{X_t = b} exp(-h t) dt`` over the trajectory's span, exactly."""
    if not h > 0:
        raise VRJPError("h must be positive")
    v, a, e = traj.holding_intervals()
    sel = v == b
    return float(np.sum(np.exp(-h * a[sel]) * -np.expm1(-h * (e[sel] - a[sel]))) / h)


def truncation_time(h: float, eps_tail: float = DEFAULT_TAIL_EPS) -> float:
    """``T*`` with ``exp(-h T*) / h = eps_tail``: the discounted tail beyond ``T*``
    of any ``|g| <= 1`` is at most ``eps_tail``."""
    return max(math.log(1.0 / (h * eps_tail)) / h, 0.0)


def _kill_vector(graph: WeightedGraph, h) -> np.ndarray:
    if h is None:
        h = graph.h
    kill = np.broadcast_to(np.asarray(h, dtype=float), (graph.n_vertices,)).copy()
    if not np.all(np.isfinite(kill)) or (kill < 0).any() or not (kill > 0).any():
        raise VRJPError("h must be non-negative with at least one positive entry")
    return kill


@dataclass(frozen=True)
class Profile:
    """Per-vertex estimates of ``int E[1{X_t=b} exp(-<c,L_t>)] exp(-h t) dt``."""

    mean: np.ndarray
    stderr: np.ndarray
    total: float
    total_stderr: float
    n_samples: int
    strategy: str
    tail_bound: float
    t_max: float
    n_jumps: int
    moments: Moments
    total_moments: Moments


def discounted_profile(
    graph: WeightedGraph,
    start: int,
    h=None,
    *,
    ell0=None,
    c=None,
    n_samples: int = 10_000,
    rng=0,
    strategy: str = "interval",
    eps_tail: float = DEFAULT_TAIL_EPS,
    n_lanes: int = 1,
) -> Profile:
    """Estimate the discounted functional at every vertex at once.

    ``strategy`` is ``"interval"`` (closed form per holding interval, horizon
    truncated at :func:`truncation_time`), ``"killing"`` (value at an
    independent exponential killing time divided by the killing rate) or
    ``"killed-occupation"`` (undiscounted integral up to the killing time).
    """
    start = _check_start(graph, start)
    ell0 = _check_ell(graph, ell0)
    kill = _kill_vector(graph, h)
    if c is None:
        c = np.zeros(graph.n_vertices)
    c = np.broadcast_to(np.asarray(c, dtype=float), (graph.n_vertices,)).copy()
    if (c < 0).any():
        raise VRJPError("decay vector c must be non-negative")
    if n_samples <= 0:
        raise VRJPError("n_samples must be positive")
    if strategy not in STRATEGIES:
        raise VRJPError(f"unknown strategy {strategy!r}")
    mode = STRATEGIES[strategy]
    if mode == INTERVAL:
        hmin = float(kill[kill > 0].min()) if (kill > 0).all() else 0.0
        if hmin == 0.0:
            raise VRJPError("interval strategy needs h > 0 at every vertex")
        t_max = truncation_time(hmin, eps_tail)
        tail = math.exp(-hmin * t_max) / hmin
    else:
        t_max, tail = math.inf, 0.0
    gen = as_generator(rng)
    seeds = [kernel_seed(gen) for _ in range(n_lanes)]
    sizes = [n_samples // n_lanes + (1 if k < n_samples % n_lanes else 0) for k in range(n_lanes)]
    mom = Moments()
    tmom = Moments()
    jumps = 0
    for seed, size in zip(seeds, sizes):
        if size == 0:
            continue
        s1, s2, t1, t2, nj, status = _functional_kernel(
            graph.indptr, graph.indices, graph.weights, kill, c, start, ell0,
            mode, t_max, size, seed,
        )
        if status:
            raise VRJPError("walk stuck at a vertex with no exits and no killing")
        mom = mom.merge(Moments.from_sums(size, s1, s2))
        tmom = tmom.merge(Moments.from_sums(size, t1, t2))
        jumps += nj
    if n_samples < 2:
        raise InsufficientSamples("need at least two trajectories for an error bar")
    return Profile(
        mean=np.asarray(mom.mean), stderr=np.asarray(mom.stderr),
        total=float(tmom.mean), total_stderr=float(tmom.stderr),
        n_samples=n_samples, strategy=strategy, tail_bound=tail, t_max=t_max,
        n_jumps=jumps, moments=mom, total_moments=tmom,
    )


@dataclass(frozen=True)
class DecayIndicator:
    """``g(b, ell) = 1{b = b0} exp(-<c, ell>)``; ``b0=None`` sums over all ``b``."""

    b0: int | None
    c: tuple[float, ...] | None = None

    def __call__(self, b, ell) -> float:
        if self.b0 is not None and b != self.b0:
            return 0.0
        if self.c is None:
            return 1.0
        return math.exp(-float(np.dot(self.c, ell)))

    @property
    def sup_norm(self) -> float:
        return 1.0


@nb.njit(cache=True)
def _killed_states_kernel(indptr, indices, weights, kill, start, ell0, n_traj, seed):
    """``(X_tau, L_tau)`` for ``n_traj`` walks killed at rate ``kill[X_t]``."""
    np.random.seed(seed)
    nv = len(ell0)
    pos = np.empty(n_traj, dtype=np.int64)
    ells = np.empty((n_traj, nv))
    for k in range(n_traj):
        ell = ell0.copy()
        i = start
        while True:
            r = _exit_rate(i, indptr, indices, weights, ell)
            rate = r + kill[i]
            if rate == 0.0:
                pos[k] = -1
                break
            dt = -math.log(1.0 - np.random.random()) / rate
            ell[i] += dt
            if np.random.random() * rate < kill[i]:
                pos[k] = i
                break
            i = _pick(i, np.random.random() * r, indptr, indices, weights, ell)
        ells[k] = ell
    return pos, ells


def estimate_discounted_functional(
    graph: WeightedGraph,
    start: int,
    ell0,
    h,
    g: Callable | DecayIndicator,
    n_samples: int,
    rng,
    *,
    strategy: str | None = None,
    eps_tail: float = DEFAULT_TAIL_EPS,
):
    """Unbiased ``(estimate, stderr)`` of ``int_0^inf E_{start,ell0}[g(X_t,L_t)] e^{-ht} dt``.

    :class:`DecayIndicator` functionals use the compiled kernel with any
    strategy; other callables are evaluated at an exponential killing time.
    """
    if n_samples <= 0:
        raise VRJPError("n_samples must be positive")
    kill = _kill_vector(graph, h)
    if isinstance(g, DecayIndicator):
        prof = discounted_profile(
            graph, start, kill, ell0=ell0, c=g.c, n_samples=n_samples, rng=rng,
            strategy=strategy or "interval", eps_tail=eps_tail,
        )
        if g.b0 is None:
            return prof.total, prof.total_stderr
        return float(prof.mean[g.b0]), float(prof.stderr[g.b0])
    if strategy not in (None, "killing"):
        raise VRJPError("general callables support only the killing strategy")
    start = _check_start(graph, start)
    ell0 = _check_ell(graph, ell0)
    gen = as_generator(rng)
    pos, ells = _killed_states_kernel(
        graph.indptr, graph.indices, graph.weights, kill, start, ell0, n_samples, kernel_seed(gen)
    )
    if (pos < 0).any():
        raise VRJPError("walk stuck at a vertex with no exits and no killing")
    vals = np.array([g(int(b), ell) / kill[b] for b, ell in zip(pos, ells)])
    if n_samples < 2:
        raise InsufficientSamples("need at least two samples")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


@nb.njit(cache=True)
def _nested_kernel(indptr, indices, weights, kill, c, start, ell0s, mode, t_max, n_inner, seeds):
    m, nv = ell0s.shape
    mean = np.empty((m, nv))
    var = np.empty((m, nv))
    tmean = np.empty(m)
    tvar = np.empty(m)
    for k in range(m):
        s1, s2, t1, t2, _, status = _functional_kernel(indptr, indices, weights, kill, c, start,
                                                      ell0s[k], mode, t_max, n_inner, seeds[k])
        if status:
            return mean, var, tmean, tvar, 1
        for b in range(nv):
            mu = s1[b] / n_inner
            mean[k, b] = mu
            var[k, b] = max(s2[b] / n_inner - mu * mu, 0.0) * n_inner / (n_inner - 1)
        mu = t1 / n_inner
        tmean[k] = mu
        tvar[k] = max(t2 / n_inner - mu * mu, 0.0) * n_inner / (n_inner - 1)
    return mean, var, tmean, tvar, 0


@dataclass(frozen=True)
class NestedProfile:
    """Inner means per outer row, ``mean[k, b]``, and the within-row variances."""

    mean: np.ndarray
    within_var: np.ndarray
    total: np.ndarray
    total_within_var: np.ndarray
    n_inner: int


def nested_profiles(graph: WeightedGraph, start: int, ell0s, h=None, *, c=None, n_inner: int = 8, rng=0,
                    strategy: str = "interval", eps_tail: float = DEFAULT_TAIL_EPS) -> NestedProfile:
    """``n_inner`` walks from ``start`` for every row of ``ell0s`` (initial local times).

    Each row gets its own kernel seed, drawn in order from ``rng``.
    """
    if n_inner < 2:
        raise VRJPError("need at least two inner replicas")
    start = _check_start(graph, start)
    ell0s = np.ascontiguousarray(np.atleast_2d(np.asarray(ell0s, dtype=float)))
    if ell0s.shape[1] != graph.n_vertices or (ell0s < 0).any() or not np.all(np.isfinite(ell0s)):
        raise VRJPError("initial local times must be finite, non-negative, one column per vertex")
    kill = _kill_vector(graph, h)
    c = np.zeros(graph.n_vertices) if c is None else np.broadcast_to(np.asarray(c, dtype=float),
                                                                    (graph.n_vertices,)).copy()
    if (c < 0).any():
        raise VRJPError("decay vector c must be non-negative")
    mode = STRATEGIES[strategy]
    t_max = math.inf
    if mode == INTERVAL:
        if not (kill > 0).all():
            raise VRJPError("interval strategy needs h > 0 at every vertex")
        t_max = truncation_time(float(kill.min()), eps_tail)
    gen = as_generator(rng)
    seeds = gen.integers(0, 2**32 - 1, size=len(ell0s), dtype=np.int64)
    mean, var, tm, tv, status = _nested_kernel(graph.indptr, graph.indices, graph.weights, kill, c, start,
                                               ell0s, mode, t_max, int(n_inner), seeds)
    if status:
        raise VRJPError("walk stuck at a vertex with no exits and no killing")
    return NestedProfile(mean, var, tm, tv, int(n_inner))
