import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrjplab.chain import MCMCParams
from vrjplab.graph import TorusSpec, build_torus, dual_lattice, lambda_table
from vrjplab.merminwagner import (
    PARSEVAL_TOL, check_bound, self_consistent_rhs, estimate_spectrum, fourier_from_field, fourier_from_matrix, h_scan,
    kappa_for, lambda_quadratic_ok,
)
from vrjplab.sigma_h22 import assemble_D

SMALL = MCMCParams(n_burn=1000, n_keep=2000, thin=5, n_batches=40)


def test_kappa():
    assert kappa_for("H22") == 1.0
    assert kappa_for("Hn", 2) == 3.0
    with pytest.raises(ValueError):
        kappa_for("O(3)")


def test_fourier_of_a_translation_invariant_matrix():
    # D(0)^{-1} on a torus is circulant: its transform is 1/(lambda + h)
    spec = TorusSpec.nearest_neighbour(2, 6, 1.0, 0.5)
    G = assemble_D(build_torus(spec), np.zeros(spec.n_vertices)).covariance()
    ghat, g0 = fourier_from_matrix(spec, G)
    assert np.allclose(ghat, 1.0 / (lambda_table(spec) + 0.5), atol=1e-12)
    assert g0 == pytest.approx(ghat.mean(), abs=1e-12)


@settings(deadline=None, max_examples=20)
@given(st.integers(1, 2), st.integers(3, 6), st.integers(0, 2**31))
def test_parseval_and_symmetry(d, L, seed):
    spec = TorusSpec.nearest_neighbour(d, L)
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(spec.n_vertices,) * 2)
    G = A @ A.T
    ghat, g0 = fourier_from_matrix(spec, G)
    assert abs(ghat.mean() - g0) < PARSEVAL_TOL * max(1.0, abs(g0))
    neg = [(-k) % L for k in dual_lattice(spec)]
    flip = [np.ravel_multi_index(tuple(k), spec.dims) for k in neg]
    assert np.allclose(ghat, ghat[flip])
    y = rng.normal(size=(3, spec.n_vertices))
    per = fourier_from_field(spec, y)
    assert np.allclose(per.mean(axis=1), (y * y).mean(axis=1))


def test_fourier_batches_match_single():
    spec = TorusSpec.nearest_neighbour(1, 8)
    rng = np.random.default_rng(0)
    Gs = rng.normal(size=(3, 8, 8))
    gb, g0b = fourier_from_matrix(spec, Gs)
    for k in range(3):
        g, g0 = fourier_from_matrix(spec, Gs[k])
        assert np.allclose(gb[k], g) and g0b[k] == pytest.approx(g0)


def test_decoupled_sites_have_flat_spectrum():
    # beta = 0: sites are independent, G(j) = delta_{j0} <y^2> and G^ is constant
    spec = TorusSpec.nearest_neighbour(1, 8, 1e-12, 1.0)
    est = estimate_spectrum(spec, "H22", SMALL, 1)
    assert np.ptp(est.ghat) < 1e-9
    assert abs(est.g0 - 1.0) < 4 * est.g0_se
    assert est.parseval_error < PARSEVAL_TOL


@pytest.mark.parametrize("model,method", [("H22", "rb"), ("H22", "plain"), ("Hn", "rb")])
def test_bound_on_a_small_torus(model, method):
    spec = TorusSpec.nearest_neighbour(1, 8, 1.0, 1.0)
    est = estimate_spectrum(spec, model, SMALL, 2, method=method)
    br = check_bound(est)
    assert br.passed, br.z.min()
    assert est.symmetry_error() < 1e-12
    assert est.parseval_error < PARSEVAL_TOL
    if model == "H22":
        assert abs(est.ghat[0] - 1.0) < 4 * est.ghat_se[0]
    recs = br.records("x: ")
    assert all(r.passed for r in recs)


def test_bound_records_carry_worst_momentum():
    spec = TorusSpec.nearest_neighbour(1, 8, 1.0, 1.0)
    br = check_bound(estimate_spectrum(spec, "H22", SMALL, 3))
    rec = br.records()[0]
    assert rec.kind == "bound"
    assert rec.lhs == pytest.approx(br.margin[br.worst()])


def test_self_consistent_rhs_derivative():
    spec = TorusSpec.nearest_neighbour(2, 6)
    v, dv = self_consistent_rhs(spec, 0.7, 1.0, 0.3)
    e = 1e-6
    fd = (self_consistent_rhs(spec, 0.7 + e, 1.0, 0.3)[0] - self_consistent_rhs(spec, 0.7 - e, 1.0, 0.3)[0]) / (2 * e)
    assert dv == pytest.approx(fd, rel=1e-6)
    # at G(0) = 0 the right-hand side is the free Green's function at the origin
    v0, _ = self_consistent_rhs(spec, 0.0, 1.0, 0.3)
    assert v0 == pytest.approx(np.mean(1.0 / (lambda_table(spec) + 0.3)))


@pytest.mark.parametrize("d,L", [(1, 16), (2, 8), (3, 4)])
def test_lambda_quadratic(d, L):
    assert lambda_quadratic_ok(TorusSpec.nearest_neighbour(d, L, 2.0))


def test_scan_grows_in_one_dimension():
    res = h_scan(1, [16, 32, 64], [1.0, 0.3], n_traj=20_000, seed=4)
    assert set(res.stabilized) == {1.0, 0.3}
    assert res.stabilized[0.3][0] > res.stabilized[1.0][0]
    trend = [r for r in res.records if r.kind == "trend"]
    assert len(trend) == 1 and trend[0].passed


def test_scan_reports_missing_plateau():
    res = h_scan(1, [8], [0.1], n_traj=500, seed=5)
    assert any(r.verdict == "inconclusive" for r in res.records)


def test_scan_is_thread_independent():
    a = h_scan(2, [4, 6], [1.0, 0.5], n_traj=2000, seed=6, threads=1)
    b = h_scan(2, [4, 6], [1.0, 0.5], n_traj=2000, seed=6, threads=2)
    assert [(c.L, c.h, c.g0, c.g0_se) for c in a.cells] == [(c.L, c.h, c.g0, c.g0_se) for c in b.cells]


def test_scan_needs_decreasing_fields():
    with pytest.raises(ValueError):
        h_scan(1, [8], [0.1, 0.3])
