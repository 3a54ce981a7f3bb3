import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrjplab.graph import (
    GraphError, TorusSpec, WeightedGraph, build_torus, centered_momenta, dual_lattice, lambda_of,
    lambda_table, momenta, quadratic_constant,
)


@st.composite
def random_graphs(draw):
    n = draw(st.integers(1, 7))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    w = st.floats(0.1, 5.0)
    edges = {p: draw(w) for p in chosen}
    h = draw(st.lists(st.floats(0.0, 3.0), min_size=n, max_size=n))
    return WeightedGraph.from_edges(n, edges, h), edges


@given(random_graphs())
def test_csr_matches_edges(gh):
    g, edges = gh
    B = g.dense_beta()
    assert np.allclose(B, B.T)
    assert np.all(np.diag(B) == 0)
    seen = {(i, j): b for i, j, b in g.edges()}
    assert seen == pytest.approx({tuple(sorted(k)): v for k, v in edges.items()})
    for i in range(g.n_vertices):
        nb, w = g.neighbors(i)
        assert np.all(np.diff(nb) > 0)
        assert np.allclose(w, B[i, nb])


@given(random_graphs(), st.floats(0.1, 2.0))
def test_with_h_keeps_edges(gh, h):
    g, _ = gh
    g2 = g.with_h(h)
    assert np.array_equal(g2.indices, g.indices)
    assert np.all(g2.h == h)


def test_arrays_are_read_only():
    g = WeightedGraph.path(3)
    with pytest.raises(ValueError):
        g.weights[0] = 2.0


@pytest.mark.parametrize("beta", [
    [[0, 1], [2, 0]],            # asymmetric
    [[1, 0], [0, 0]],            # self-loop
    [[0, -1], [-1, 0]],          # negative weight
])
def test_bad_weights_rejected(beta):
    with pytest.raises(GraphError):
        WeightedGraph.from_dense(beta, 1.0)


def test_negative_h_rejected():
    with pytest.raises(GraphError):
        WeightedGraph.path(2, 1.0, -0.1)


@pytest.mark.parametrize("d,L", [(1, 16), (2, 8), (3, 4)])
def test_torus_is_regular(d, L):
    g = build_torus(TorusSpec.nearest_neighbour(d, L, 1.5, 0.3))
    assert g.n_vertices == L ** d
    assert np.all(g.degree() == 2 * d)
    assert np.allclose(np.asarray(g.beta_matrix().sum(axis=1)).ravel(), 3.0 * d)


def test_torus_too_small():
    with pytest.raises(GraphError):
        TorusSpec.nearest_neighbour(1, 2).validate()


@given(st.integers(1, 3), st.integers(3, 9), st.floats(0.1, 3.0))
@settings(max_examples=30)
def test_lambda_matches_laplacian_spectrum(d, L, beta):
    spec = TorusSpec.nearest_neighbour(d, L, beta)
    lam = lambda_table(spec)
    # the graph Laplacian has eigenvalues lambda(p) on plane waves
    B = build_torus(spec).dense_beta()
    lap = np.diag(B.sum(axis=1)) - B
    assert np.allclose(np.sort(lam), np.sort(np.linalg.eigvalsh(lap)), atol=1e-9)
    assert lam[0] == 0.0
    assert np.all(lam <= quadratic_constant(spec) * (centered_momenta(spec) ** 2).sum(axis=1) + 1e-12)


def test_lambda_by_momentum_and_index_agree():
    spec = TorusSpec.nearest_neighbour(2, 6)
    for k, p in zip(dual_lattice(spec), momenta(spec)):
        assert lambda_of(spec, p) == pytest.approx(lambda_of(spec, k=k))


def test_off_lattice_momentum():
    with pytest.raises(GraphError):
        lambda_of(TorusSpec.nearest_neighbour(1, 8), [0.1])
