import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vrjplab.rng import MODULES, as_generator, kernel_seed, lane
from vrjplab.stats import (
    InsufficientSamples, Moments, autocorrelation, batch_means, integrated_autocorrelation_time, zscore,
)


def test_lanes_are_reproducible_and_distinct():
    a = lane(7, "vrjp", 1, 2).random(4)
    assert np.array_equal(a, lane(7, "vrjp", 1, 2).random(4))
    others = [lane(7, "vrjp", 1, 3), lane(7, "vrjp", 2, 2), lane(7, "sigma_h22", 1, 2), lane(8, "vrjp", 1, 2)]
    for g in others:
        assert not np.array_equal(a, g.random(4))


def test_module_ids_are_unique():
    assert len(set(MODULES.values())) == len(MODULES)


def test_kernel_seed_range():
    g = as_generator(1)
    s = [kernel_seed(g) for _ in range(100)]
    assert all(0 <= x < 2**32 for x in s)


finite = st.floats(-1e3, 1e3)


@given(arrays(float, st.integers(2, 60), elements=finite), arrays(float, st.integers(2, 60), elements=finite))
def test_moments_merge_matches_concatenation(x, y):
    m = Moments.from_samples(x).merge(Moments.from_samples(y))
    both = np.concatenate([x, y])
    assert m.count == len(both)
    assert m.mean == pytest.approx(both.mean(), abs=1e-9)
    assert m.variance == pytest.approx(both.var(ddof=1), rel=1e-7, abs=1e-7)


def test_moments_from_sums():
    x = np.random.default_rng(0).normal(size=500)
    a = Moments.from_sums(len(x), x.sum(), (x * x).sum())
    b = Moments.from_samples(x)
    assert a.stderr == pytest.approx(b.stderr, rel=1e-9)


def test_batch_means_on_iid_data():
    x = np.random.default_rng(1).normal(size=40_000)
    mu, se = batch_means(x)
    assert se == pytest.approx(1 / np.sqrt(len(x)), rel=0.25)
    assert abs(mu) < 5 * se


def test_batch_means_sees_correlation():
    rng = np.random.default_rng(2)
    phi = 0.9
    x = np.empty(100_000)
    x[0] = 0.0
    e = rng.normal(size=len(x))
    for k in range(1, len(x)):
        x[k] = phi * x[k - 1] + e[k]
    _, se = batch_means(x, n_batches=50)
    naive = x.std() / np.sqrt(len(x))
    # tau_int = (1 + phi) / (1 - phi) = 19
    assert (se / naive) ** 2 == pytest.approx(19.0, rel=0.4)
    assert integrated_autocorrelation_time(x) == pytest.approx(19.0, rel=0.3)


def test_batch_means_needs_batches():
    with pytest.raises(InsufficientSamples):
        batch_means(np.zeros(20))


def test_autocorrelation_of_constant():
    assert autocorrelation(np.ones(10))[0] == 1.0


def test_zscore():
    assert zscore(1.0, 0.3, 1.0, 0.4) == 0.0
    assert zscore(2.0, 0.3, 1.0, 0.4) == pytest.approx(2.0)
    assert zscore(2.0, 0.0, 1.0) == np.inf
