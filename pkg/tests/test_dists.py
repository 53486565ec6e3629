import numpy as np
import pytest

from rmac.dists import (
    FiniteDistribution,
    dist_expectation,
    dist_from_samples,
    mixture,
    point_mass,
    tv_distance,
    uniform,
)
from rmac.rng import substream
from rmac.spaces import grid_make


@pytest.fixture
def grid101():
    return grid_make(0, 1, 0.01)


def test_from_samples_counts():
    g = grid_make(0, 1, 0.5)  # 3 elements
    d = dist_from_samples([0, 0, 2], g)
    assert np.allclose(d.weights, [2 / 3, 0, 1 / 3])


def test_from_samples_point_mass():
    g = grid_make(0, 1, 0.5)
    d = dist_from_samples([1], g)
    assert d.weights[1] == 1.0


def test_from_samples_rejects_bad_input():
    g = grid_make(0, 1, 0.5)
    with pytest.raises(ValueError):
        dist_from_samples([], g)
    with pytest.raises(ValueError):
        dist_from_samples([3], g)


def test_from_samples_uniform_draws_llN(grid101):
    # 1000 uniform draws: every cell frequency within 0.02 of 1/101
    rng = substream(20240811, "lln")
    draws = uniform(grid101).sample_indices(1000, rng)
    d = dist_from_samples(draws.tolist(), grid101)
    assert np.abs(d.weights - 1 / 101).max() < 0.02


def test_expectation_examples(grid101):
    assert dist_expectation(point_mass(grid101, 37), lambda x: x * x) == pytest.approx(0.37**2)
    g2 = grid_make(0, 1, 1.0)
    assert dist_expectation(uniform(g2), lambda x: x) == pytest.approx(0.5)
    mix = FiniteDistribution(g2, [0.25, 0.75])
    assert dist_expectation(mix, lambda x: x) == pytest.approx(0.75)


def test_expectation_is_linear(grid101):
    rng = np.random.default_rng(3)
    p = FiniteDistribution(grid101, rng.random(101))
    q = FiniteDistribution(grid101, rng.random(101))
    f = lambda x: np.sin(7 * x) + x
    for lam in (0.0, 0.3, 1.0):
        lhs = dist_expectation(mixture([p, q], [lam, 1 - lam]), f)
        rhs = lam * dist_expectation(p, f) + (1 - lam) * dist_expectation(q, f)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_concatenation_equals_count_weighted_mixture(grid101):
    rng = substream(5, "concat")
    a = uniform(grid101).sample_indices(40, rng).tolist()
    b = uniform(grid101).sample_indices(60, rng).tolist()
    whole = dist_from_samples(a + b, grid101)
    parts = mixture([dist_from_samples(a, grid101), dist_from_samples(b, grid101)], [0.4, 0.6])
    assert tv_distance(whole, parts) < 1e-12


def test_weights_validation(grid101):
    with pytest.raises(ValueError):
        FiniteDistribution(grid101, -np.ones(101))
    with pytest.raises(ValueError):
        FiniteDistribution(grid101, np.zeros(101))
    d = FiniteDistribution(grid101, np.full(101, 3.0))  # renormalized
    assert d.weights.sum() == pytest.approx(1.0, abs=1e-9)
