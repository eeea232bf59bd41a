import itertools
import math

import numpy as np
import pytest
from scipy import stats

from partition_entropy.rng import RandomStream
from partition_entropy.special_fn import digamma
from partition_entropy.variates import (
    beta_draw,
    dirichlet_draw,
    gamma_draw,
    log_beta_draw,
    log_gamma_draw,
)

SIGMAS = 4.0


def within(values, expected):
    values = np.asarray(values, dtype=float)
    se = values.std(ddof=1) / math.sqrt(values.size)
    return abs(values.mean() - expected) < SIGMAS * se


def test_gamma_mean_shape_three():
    x = np.exp(log_gamma_draw(np.full(100_000, 3.0), RandomStream(11)))
    assert within(x, 3.0)


def test_scalar_gamma_and_beta_are_in_range():
    rng = RandomStream(5)
    for shape in (0.01, 0.3, 1.0, 7.5):
        assert gamma_draw(shape, rng) > 0
        assert 0.0 < beta_draw(shape, 2.0, rng) < 1.0


def test_dirichlet_one_one_is_uniform():
    p = dirichlet_draw([1.0, 1.0], RandomStream(3), size=100_000)
    assert p.shape == (100_000, 2)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-15)
    assert within(p[:, 0], 0.5)


def test_beta_mean_log_half_half():
    # alpha = 0.5, theta = 0.5: X ~ Beta(0.5, 1), E(-ln X) = psi(1.5) - psi(0.5) = 2
    log_x, _ = log_beta_draw(np.full(100_000, 0.5), 1.0, RandomStream(17))
    assert within(-log_x, 2.0)


@pytest.mark.parametrize("a, b", list(itertools.product([0.3, 1.0, 2.5], repeat=2)))
def test_beta_mean_log_identity(a, b):
    log_x, log_1mx = log_beta_draw(np.full(1_000_000, a), b, RandomStream(101, stream_id=int(10 * a + b * 100)))
    assert within(-log_x, digamma(a + b) - digamma(a))
    assert within(-log_1mx, digamma(a + b) - digamma(b))


@pytest.mark.parametrize("shape", [0.05, 0.4, 1.0, 3.7, 50.0])
def test_gamma_law_matches_reference(shape):
    x = np.exp(log_gamma_draw(np.full(20_000, shape), RandomStream(23)))
    assert stats.kstest(x, stats.gamma(shape).cdf).pvalue > 1e-3


@pytest.mark.parametrize("a, b", [(0.2, 0.7), (1.0, 1.0), (3.0, 0.5)])
def test_beta_law_matches_reference(a, b):
    log_x, _ = log_beta_draw(np.full(20_000, a), b, RandomStream(29))
    assert stats.kstest(np.exp(log_x), stats.beta(a, b).cdf).pvalue > 1e-3


def test_dirichlet_marginal_matches_reference():
    alphas = np.array([0.5, 2.0, 0.1, 1.5])
    p = dirichlet_draw(alphas, RandomStream(31), size=20_000)
    total = alphas.sum()
    for j, a in enumerate(alphas):
        assert stats.kstest(p[:, j], stats.beta(a, total - a).cdf).pvalue > 1e-3


def test_tiny_shapes_stay_finite_on_log_scale():
    lg = log_gamma_draw(np.full(10_000, 1e-3), RandomStream(37))
    assert np.all(np.isfinite(lg))
    log_x, log_1mx = log_beta_draw(np.full(10_000, 1e-3), 1e-3, RandomStream(41))
    assert np.all(np.isfinite(log_x)) and np.all(np.isfinite(log_1mx))
    assert np.abs(np.logaddexp(log_x, log_1mx)).max() < 1e-12


def test_log_gamma_draw_preserves_shape():
    out = log_gamma_draw(np.ones((3, 4)), RandomStream(1))
    assert out.shape == (3, 4)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_bad_shapes_rejected(bad):
    with pytest.raises(ValueError):
        log_gamma_draw([1.0, bad], RandomStream(0))


def test_draws_are_reproducible():
    a = dirichlet_draw([0.3, 1.0, 4.0], RandomStream(9, 2), size=50)
    b = dirichlet_draw([0.3, 1.0, 4.0], RandomStream(9, 2), size=50)
    c = dirichlet_draw([0.3, 1.0, 4.0], RandomStream(9, 3), size=50)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_derived_streams_match_explicit_ids():
    base = RandomStream(123, stream_id=10)
    assert np.array_equal(base.derive(5).random(8), RandomStream(123, 15).random(8))
