import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrjplab.graph import WeightedGraph
from vrjplab.grassmann import (
    GrassmannError, NotSupersymmetric, SuperForm, Supernumber, ambient_vs_horo, apply_Q, coefficient_IJ, cosh,
    exp, h22_expectation_exact, localisation_check, log, pair_monomial, random_supernumber, reciprocal, sinh,
    sqrt, super_inner, superintegrate, tau_form, verify_berezinian, verify_susy_horo_identities, x_form, xi_form,
    eta_form, y_form, z_form,
)

seeds = st.integers(0, 2**32 - 1)
pairs = st.integers(1, 3)


def rnd(m, seed, parity=None, k=0):
    return random_supernumber(m, np.random.default_rng([seed, k]), parity=parity)


@given(pairs, seeds)
def test_associative_and_distributive(m, seed):
    a, b, c = (rnd(m, seed, k=k) for k in range(3))
    assert ((a * b) * c).allclose(a * (b * c), atol=1e-9)
    assert (a * (b + c)).allclose(a * b + a * c, atol=1e-9)


@given(pairs, seeds, st.integers(0, 1), st.integers(0, 1))
def test_graded_commutativity(m, seed, pa, pb):
    a, b = rnd(m, seed, pa, 0), rnd(m, seed, pb, 1)
    sign = -1.0 if pa and pb else 1.0
    assert (a * b).allclose(sign * (b * a), atol=1e-9)


@given(pairs, seeds)
def test_odd_elements_square_to_zero(m, seed):
    a = rnd(m, seed, 1)
    assert (a * a).allclose(0.0, atol=1e-9)


@given(st.integers(1, 3), st.data())
def test_generators_anticommute(m, data):
    i = data.draw(st.integers(0, 2 * m - 1))
    j = data.draw(st.integers(0, 2 * m - 1))
    gi, gj = Supernumber.generator(m, i), Supernumber.generator(m, j)
    assert (gi * gj + gj * gi).allclose(0.0)


@given(pairs, seeds)
def test_exp_is_a_homomorphism_on_even_elements(m, seed):
    a = rnd(m, seed, 0, 0) * 0.3
    b = rnd(m, seed, 0, 1) * 0.3
    assert exp(a + b).allclose(exp(a) * exp(b), atol=1e-9)
    assert log(exp(a)).allclose(a, atol=1e-9)


@given(pairs, seeds)
def test_analytic_identities(m, seed):
    a = rnd(m, seed, 0) * 0.3
    assert (cosh(a) * cosh(a) - sinh(a) * sinh(a)).allclose(1.0, atol=1e-9)
    b = a + 2.0
    assert (sqrt(b) * sqrt(b)).allclose(b, atol=1e-9)
    assert (reciprocal(b) * b).allclose(1.0, atol=1e-9)


@given(pairs, seeds, st.integers(0, 1))
def test_left_derivative_leibniz(m, seed, pa):
    a, b = rnd(m, seed, pa, 0), rnd(m, seed, None, 1)
    sign = -1.0 if pa else 1.0
    for g in range(2 * m):
        lhs = (a * b).left_derivative(g)
        rhs = a.left_derivative(g) * b + sign * (a * b.left_derivative(g))
        assert lhs.allclose(rhs, atol=1e-9)


def test_analytic_of_odd_rejected():
    with pytest.raises(GrassmannError):
        exp(Supernumber.xi(1, 0))


def test_domain_is_checked():
    with pytest.raises(GrassmannError):
        sqrt(Supernumber.const(1, -1.0) + Supernumber.xi(1, 0) * Supernumber.eta(1, 0))


def test_too_many_pairs():
    with pytest.raises(GrassmannError):
        Supernumber(5)


def test_monomial_basis_round_trip():
    m = 2
    F = random_supernumber(m, np.random.default_rng(3))
    total = Supernumber(m)
    for I in ({}, {0}, {1}, {0, 1}):
        for J in ({}, {0}, {1}, {0, 1}):
            total = total + coefficient_IJ(F, set(I), set(J)) * pair_monomial(m, set(I), set(J))
    # the (I, J) basis spans only the monomials in which eta and xi pair up; check on those
    for I in ({}, {0}, {1}, {0, 1}):
        for J in ({}, {0}, {1}, {0, 1}):
            assert coefficient_IJ(total, set(I), set(J)) == pytest.approx(coefficient_IJ(F, set(I), set(J)))


def test_z_squared_is_one_plus_tau():
    rng = np.random.default_rng(0)
    for m in (1, 2):
        x, y = rng.normal(size=m), rng.normal(size=m)
        for i in range(m):
            z = z_form(m, i, (x, y))
            tau = SuperForm(m, lambda s, i=i: s.tau(i, i)).at(x, y)
            assert (z * z).allclose(1.0 + tau, atol=1e-12)


def test_Q_annihilates_inner_products_but_not_x():
    pt = (np.array([0.3, -0.7]), np.array([1.1, 0.2]))
    dot = SuperForm(2, lambda s: s.dot(0, 1))
    assert apply_Q(dot, pt).max_abs_diff(0.0) < 1e-12
    assert apply_Q(x_form(2, 0), pt).max_abs_diff(0.0) > 0.1


def test_localisation_rejects_non_supersymmetric_form():
    F = SuperForm(1, lambda s: exp(-s.tau(0, 0)) * s.x[0])
    with pytest.raises(NotSupersymmetric):
        localisation_check(F)


def test_gaussian_superintegral_is_one():
    F = SuperForm(1, lambda s: exp(-s.tau(0, 0)))
    assert superintegrate(F).value == pytest.approx(1.0, abs=1e-9)


def test_isolated_vertex_two_point_is_one_over_h():
    g = WeightedGraph.path(1, 1.0, 0.5)
    val = h22_expectation_exact(g, lambda s: s.y[0] * s.y[0]).value
    assert val == pytest.approx(2.0, abs=1e-8)


def test_ambient_and_horospherical_integrals_agree():
    F = SuperForm(1, lambda s: exp(-(s.z[0] - 1.0)) * (1.0 + s.y[0] * s.y[0]))
    amb, hor = ambient_vs_horo(F)
    assert amb == pytest.approx(hor, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_berezinian(t, s):
    assert verify_berezinian([(t, s)]).passed


@settings(max_examples=10, deadline=None)
@given(st.lists(st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5)), min_size=1, max_size=3))
def test_super_horospherical_identities(pts):
    t = [p[0] for p in pts]
    s = [p[1] for p in pts]
    rep = verify_susy_horo_identities([(t, s)])
    assert rep.passed, rep.checks


def test_super_horospherical_z_has_expected_soul():
    t, s = 0.4, -0.9
    rep = verify_susy_horo_identities([([t], [s])])
    assert rep.checks["z closed form"] < 1e-14
    assert math.isfinite(rep.max_error)


def test_Q_of_x_is_xi():
    pt = (np.array([0.4]), np.array([-0.3]))
    assert apply_Q(x_form(1, 0), pt).allclose(Supernumber.xi(1, 0))


@settings(max_examples=100)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_Q_kills_tau_and_z_and_spins_are_unit(v):
    x, y = np.array(v[:2]), np.array(v[2:])
    for i in range(2):
        assert super_inner(2, i, i, (x, y)).allclose(-1.0, atol=1e-9)
        assert apply_Q(z_form(2, i), (x, y)).max_abs_diff(0.0) < 1e-9
        for j in range(2):
            assert apply_Q(tau_form(2, i, j), (x, y)).max_abs_diff(0.0) < 1e-9


ODD = (xi_form, eta_form)
FORMS = (x_form, y_form, xi_form, eta_form)


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from(FORMS), st.sampled_from(FORMS), st.sampled_from(FORMS))
def test_Q_is_an_antiderivation(seed, f1, f2, f3):
    rng = np.random.default_rng(seed)
    pt = (rng.normal(size=2), rng.normal(size=2))
    F = f1(2, 0) * f2(2, 1)
    G = f3(2, 1) + f3(2, 0) * 0.5
    sign = -1.0 if (f1 in ODD) != (f2 in ODD) else 1.0
    lhs = apply_Q(F * G, pt)
    rhs = apply_Q(F, pt) * G.at(*pt) + sign * (F.at(*pt) * apply_Q(G, pt))
    assert lhs.allclose(rhs, atol=1e-9)
