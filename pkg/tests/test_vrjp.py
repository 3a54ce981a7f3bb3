import math

import numpy as np
import pytest

from vrjplab.graph import WeightedGraph
from vrjplab.vrjp import (
    DecayIndicator, VRJPError, discounted_occupation, discounted_profile, estimate_discounted_functional,
    nested_profiles, simulate, truncation_time,
)

# <y_0 y_b> on the two-vertex graph with beta = h = 1, from the (s,t) quadrature oracle
G00 = 0.695409701289902
G01 = 0.30459029871010546


@pytest.fixture(scope="module")
def two():
    return WeightedGraph.path(2, 1.0, 1.0)


def test_trajectory_local_times_and_ordering():
    g = WeightedGraph.path(4, 1.0, 1.0)
    tr = simulate(g, 0, None, 25.0, 5)
    assert np.all(np.diff(tr.jump_times) > 0)
    assert tr.local_times_at(25.0).sum() == pytest.approx(25.0)
    assert np.allclose(tr.local_times_at(25.0), tr.final_local_times)
    nb = {0: {1}, 1: {0, 2}, 2: {1, 3}, 3: {2}}
    for a, b in zip(tr.states, tr.states[1:]):
        assert int(b) in nb[int(a)]
    assert tr.position_at(0.0) == 0


def test_simulation_is_seed_deterministic():
    g = WeightedGraph.path(3)
    a, b = simulate(g, 1, None, 10.0, 42), simulate(g, 1, None, 10.0, 42)
    assert np.array_equal(a.jump_times, b.jump_times)
    assert np.array_equal(a.states, b.states)


def test_discounted_occupation_of_a_stuck_walk():
    g = WeightedGraph.path(1, 1.0, 2.0)
    tr = simulate(g, 0, None, 50.0, 0)
    assert tr.n_jumps == 0
    assert discounted_occupation(tr, 0, 2.0) == pytest.approx(-math.expm1(-100.0) / 2.0)


def test_first_holding_time_is_exponential():
    # from vertex 0 with zero local times the exit rate is beta_01 = 2
    g = WeightedGraph.path(2, 2.0, 1.0)
    first = np.array([simulate(g, 0, None, 100.0, k).jump_times[0] for k in range(3000)])
    assert first.mean() == pytest.approx(0.5, rel=0.06)


def test_truncation_tail():
    T = truncation_time(0.5, 1e-8)
    assert math.exp(-0.5 * T) / 0.5 == pytest.approx(1e-8)


@pytest.mark.parametrize("strategy", ["interval", "killing", "killed-occupation"])
def test_occupation_sums_to_one_over_h(two, strategy):
    prof = discounted_profile(two, 0, n_samples=40_000, rng=1, strategy=strategy)
    if strategy == "interval":
        # every trajectory integrates exp(-t) exactly, up to the tail
        assert prof.total == pytest.approx(1.0, abs=prof.tail_bound + 1e-12)
    else:
        assert abs(prof.total - 1.0) <= 4 * prof.total_stderr + 1e-12


@pytest.mark.parametrize("strategy", ["interval", "killing", "killed-occupation"])
def test_two_point_against_oracle(two, strategy):
    prof = discounted_profile(two, 0, n_samples=100_000, rng=2, strategy=strategy)
    for b, exact in ((0, G00), (1, G01)):
        assert abs(prof.mean[b] - exact) < 4 * prof.stderr[b]


def test_strategies_on_decay_functional_agree(two):
    g = DecayIndicator(1, (1.0, 1.0))
    vals = [estimate_discounted_functional(two, 0, None, two.h, g, 60_000, 3, strategy=s)
            for s in ("interval", "killing", "killed-occupation")]
    (m0, s0) = vals[0]
    for m, s in vals[1:]:
        assert abs(m - m0) < 4 * math.hypot(s, s0)


def test_general_callable_matches_compiled_indicator(two):
    g = DecayIndicator(1, (0.5, 1.0))
    m1, s1 = estimate_discounted_functional(two, 0, None, two.h, g, 50_000, 4)
    m2, s2 = estimate_discounted_functional(two, 0, None, two.h, lambda b, ell: g(b, ell), 50_000, 5)
    assert abs(m1 - m2) < 4 * math.hypot(s1, s2)


def test_nested_rows_match_direct_profiles(two):
    ell0s = np.array([[0.0, 0.0], [0.5, 2.0]])
    nest = nested_profiles(two, 0, ell0s, n_inner=20_000, rng=6)
    for k, ell0 in enumerate(ell0s):
        prof = discounted_profile(two, 0, ell0=ell0, n_samples=20_000, rng=100 + k)
        se = np.sqrt(nest.within_var[k] / nest.n_inner + prof.stderr ** 2)
        assert np.all(np.abs(nest.mean[k] - prof.mean) < 4 * se)


def test_nested_profiles_are_reproducible(two):
    ell0s = np.array([[0.0, 0.0], [0.5, 2.0], [1.0, 1.0]])
    full = nested_profiles(two, 0, ell0s, n_inner=4, rng=7)
    again = nested_profiles(two, 0, ell0s, n_inner=4, rng=7)
    assert np.array_equal(full.mean, again.mean)


@pytest.mark.parametrize("kw", [dict(start=5), dict(h=0.0), dict(c=[-1.0, 0.0]), dict(strategy="nope")])
def test_bad_arguments(two, kw):
    args = dict(start=0, h=None, c=None, strategy="interval")
    args.update(kw)
    with pytest.raises(VRJPError):
        discounted_profile(two, args["start"], args["h"], c=args["c"], strategy=args["strategy"], n_samples=10)


def test_negative_initial_local_time(two):
    with pytest.raises(VRJPError):
        simulate(two, 0, [-1.0, 0.0], 1.0, 0)
