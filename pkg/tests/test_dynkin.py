import warnings

import numpy as np
import pytest

from vrjplab.chain import MCMCParams
from vrjplab.dynkin import (
    BudgetWarning, IsomorphismCase, decay_weight_series, h_weighted_sum_rule, nested_rhs, verify_case,
    write_summary_csv,
)
from vrjplab.graph import WeightedGraph
from vrjplab.sigma_h22 import exact_expectation_h22, sample_h22
from vrjplab.vrjp import DecayIndicator

SMALL = MCMCParams(n_burn=2000, n_keep=4000, thin=5, n_batches=50)
# <y_0 y_1 exp(-(z_0 - 1) - (z_1 - 1))> on two vertices, beta = h = 1
H22_DECAY = 0.1183261915
HN_DECAY = 0.07165484842806602


@pytest.fixture(scope="module")
def two():
    return WeightedGraph.path(2, 1.0, 1.0)


def _all_pass(rep):
    bad = [(r.name, r.verdict, r.z) for r in rep.records if not r.passed]
    assert not bad, bad


def test_case_validation(two):
    with pytest.raises(ValueError):
        IsomorphismCase(two, a=3)
    with pytest.raises(ValueError):
        IsomorphismCase(two, c=(1.0,))
    with pytest.raises(ValueError):
        IsomorphismCase(two.with_h([1.0, 0.0]))
    with pytest.raises(ValueError):
        IsomorphismCase(two, model="Hn", n=5)
    case = IsomorphismCase(two, h=0.5)
    assert np.all(case.graph.h == 0.5)
    assert case.targets == [0, 1] and case.g == DecayIndicator(None, None)


def test_two_point_case(two):
    rep = verify_case(IsomorphismCase(two, a=0, b=1, n_traj=100_000, mcmc=SMALL), seed=1)
    names = [r.name for r in rep.records]
    assert any("superintegral = (s,t) quadrature" in n for n in names)
    _all_pass(rep)


def test_isolated_vertex_is_exact():
    g = WeightedGraph.path(1, 1.0, 0.4)
    rep = verify_case(IsomorphismCase(g, n_traj=1000, use_chain=False), seed=2)
    _all_pass(rep)
    # a walk that cannot move is deterministic: its record is exact, not statistical
    walk = [r for r in rep.records if "walk vs superintegral" in r.name][0]
    assert walk.kind == "exact"
    assert walk.rhs == pytest.approx(2.5, abs=1e-9)


def test_decay_functional_case(two):
    case = IsomorphismCase(two, b0=1, c=(1.0, 1.0), n_traj=200_000, mcmc=SMALL)
    rep = verify_case(case, seed=3)
    _all_pass(rep)
    sup = [r for r in rep.records if "superintegral = (s,t)" in r.name][0]
    assert sup.lhs == pytest.approx(H22_DECAY, abs=1e-8)


def test_decay_weight_has_unit_mean(two):
    chain = sample_h22(two, SMALL, 4)
    w = decay_weight_series(chain, np.array([0.5, 2.0]))
    se = w.std() / np.sqrt(len(w)) * 3  # generous for autocorrelation
    assert abs(w.mean() - 1.0) < 4 * se


def test_decayed_two_point_equals_shifted_field(two):
    # the sigma-side correction: <y_a y_b e^{-<c, z-1>}>_h = <y_a y_b>_{h+c}
    shifted = exact_expectation_h22(two.with_h(2.0), lambda t, s: np.exp(t[..., 0] + t[..., 1]) * s[..., 0] * s[..., 1])
    assert shifted.value == pytest.approx(H22_DECAY, abs=1e-8)


def test_sum_rule_series(two):
    chain = sample_h22(two, SMALL, 5)
    m, se = h_weighted_sum_rule(chain, 0)
    assert abs(m - 1.0) < 4 * se


def test_hn_case(two):
    case = IsomorphismCase(two, model="Hn", n=2, b0=1, c=(1.0, 1.0), mcmc=SMALL, n_inner=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BudgetWarning)
        rep = verify_case(case, seed=6)
    _all_pass(rep)
    assert any("nested walks vs quadrature" in r.name for r in rep.records)


def test_hn_single_vertex():
    g = WeightedGraph.path(1, 1.0, 0.8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BudgetWarning)
        rep = verify_case(IsomorphismCase(g, model="Hn", n=2, mcmc=SMALL), seed=7)
    _all_pass(rep)


def test_nested_budget_warning(two):
    # with a single fixed outer row all variance is inner
    z = np.full((200, 2), 1.5)
    with pytest.warns(BudgetWarning, match="raise n_inner"):
        nested_rhs(two, 0, z, DecayIndicator(1, (1.0, 1.0)), 2, 0, n_batches=20)


def test_results_are_reproducible(two):
    case = IsomorphismCase(two, n_traj=2000, mcmc=MCMCParams(n_burn=200, n_keep=500, thin=2, n_batches=20))
    a, b = verify_case(case, 9), verify_case(case, 9)
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]


def test_summary_csv(two, tmp_path):
    case = IsomorphismCase(two, n_traj=2000, use_chain=False)
    write_summary_csv([verify_case(case, 1)], tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "case_id,lhs,lhs_se,rhs,rhs_se,z,verdict"
    assert len(lines) > 1
