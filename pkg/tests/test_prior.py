import math

import numpy as np
import pytest

from cvbench.prior import GaussianPrior, density, quadrature_grid, sample


def test_density_values():
    assert density(0, GaussianPrior(1.0)) == pytest.approx(1 / math.pi)
    assert density(1, GaussianPrior(2.0)) == pytest.approx(2 / math.pi * math.exp(-2))


@pytest.mark.parametrize("lam", [0.0, -1.0, float("nan"), float("inf")])
def test_invalid_lambda(lam):
    with pytest.raises(ValueError):
        GaussianPrior(lam)


def test_grid_weights_normalized():
    grid = quadrature_grid(GaussianPrior(1.0), 20, 16)
    assert abs(grid.weights.sum() - 1) < 1e-12
    assert np.all(grid.weights > 0)


def test_grid_integrates_density_to_one():
    # the density itself against Lebesgue measure, on a grid for the prior with lambda/2
    prior = GaussianPrior(1.0)
    half = GaussianPrior(0.5)
    grid = quadrature_grid(half, 40, 8)
    vals = density(grid.nodes, prior) / density(grid.nodes, half)
    assert abs(grid.integrate(vals) - 1) < 1e-12


def test_grid_second_moment():
    grid = quadrature_grid(GaussianPrior(1.0), 20, 16)
    assert abs(grid.integrate(np.abs(grid.nodes) ** 2) - 1) < 1e-12


def test_grid_odd_moment_vanishes():
    grid = quadrature_grid(GaussianPrior(1.0), 20, 16)
    a = grid.nodes
    assert abs(grid.integrate(a * np.conj(a) ** 2)) < 1e-14


def test_grid_vacuum_overlap():
    # integral of (lambda/pi) exp(-(1 + lambda)|alpha|^2) = lambda / (1 + lambda)
    grid = quadrature_grid(GaussianPrior(1.0), 60, 16)
    assert abs(grid.integrate(np.exp(-np.abs(grid.nodes) ** 2)) - 0.5) < 1e-12


@pytest.mark.parametrize("lam", [0.3, 1.0, 4.0])
def test_grid_monomial_exactness(lam):
    radial = 8
    grid = quadrature_grid(GaussianPrior(lam), radial, 16)
    a = grid.nodes
    for i in range(13):
        for j in range(13 - i):
            if i + j > 2 * radial - 1:
                continue
            exact = math.factorial(i) / lam**i if i == j else 0.0
            got = grid.integrate(a**i * np.conj(a) ** j)
            scale = math.gamma((i + j) / 2 + 1) / lam ** ((i + j) / 2)
            assert abs(got - exact) < 1e-12 * max(1.0, scale), (i, j)


def test_sample_is_deterministic():
    prior = GaussianPrior(1.0)
    np.testing.assert_array_equal(sample(prior, 1000, 5), sample(prior, 1000, 5))
    assert not np.array_equal(sample(prior, 1000, 5), sample(prior, 1000, 6))


def test_sample_prefix_and_threads_consistent():
    prior = GaussianPrior(1.0)
    big = sample(prior, 200_000, 11)
    np.testing.assert_array_equal(sample(prior, 1000, 11), big[:1000])
    np.testing.assert_array_equal(sample(prior, 200_000, 11, threads=4), big)


@pytest.mark.parametrize("lam", [1.0, 4.0])
def test_sample_second_moment(lam):
    a = sample(GaussianPrior(lam), 1_000_000, 0)
    r2 = np.abs(a) ** 2
    # |alpha|^2 is exponential with mean 1/lambda, so its sd is 1/lambda too
    stderr = (1 / lam) / math.sqrt(a.size)
    assert abs(r2.mean() - 1 / lam) < 3 * stderr


def test_sample_mixed_moments():
    lam = 2.0
    a = sample(GaussianPrior(lam), 1_000_000, 1)
    ac = np.conj(a)
    for i in range(4):
        for j in range(4):
            vals = a**i * ac**j
            exact = math.factorial(i) / lam**i if i == j else 0.0
            se = math.sqrt(np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1)) / math.sqrt(a.size)
            assert abs(vals.mean() - exact) < 4 * se + 1e-15, (i, j)


def test_sample_requires_positive_count():
    with pytest.raises(ValueError):
        sample(GaussianPrior(1.0), 0, 0)
