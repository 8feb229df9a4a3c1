import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from momentflow.moments.activation_stats import (
    GELU, HEAVISIDE, IDENTITY, RELU, SIGMOID, CorrelatedPair, UnivariateGaussian, activation_mean,
    activation_variance,
)
from momentflow.oracle.quadrature import (
    ORACLE_COLUMNS, QuadratureConfig, oracle_records, quad_covariance, quad_covariance_grid, quad_cross_moment,
    quad_cross_moments, quad_mean, quad_means, quad_variance, scheme_for,
)
from momentflow.utils.errors import DomainError


def pair(mu_a, mu_b, sigma_a, sigma_b, rho):
    return CorrelatedPair(UnivariateGaussian(mu_a, sigma_a), UnivariateGaussian(mu_b, sigma_b), rho)


def test_reference_means():
    assert quad_mean(RELU, UnivariateGaussian(0, 1)) == pytest.approx(0.3989422804, abs=1e-8)
    assert quad_mean(IDENTITY, UnivariateGaussian(7, 3)) == pytest.approx(7.0, abs=1e-10)
    g = UnivariateGaussian(1, 1)
    assert quad_mean(GELU, g) == pytest.approx(activation_mean(GELU, g), abs=1e-8)


def test_vectorized_means_agree_with_scalar():
    mu = np.array([-1.0, 0.0, 2.5])
    values = quad_means(HEAVISIDE, mu, 0.7)
    for m, v in zip(mu, values):
        assert v == pytest.approx(quad_mean(HEAVISIDE, UnivariateGaussian(m, 0.7)), abs=1e-15)


@pytest.mark.parametrize('kind', [HEAVISIDE, RELU, GELU, SIGMOID])
def test_zero_correlation_is_independent(kind):
    p = pair(0.4, -0.8, 1.2, 0.6, 0.0)
    assert quad_covariance(kind, kind, p) == pytest.approx(0.0, abs=1e-9)


def test_heaviside_arcsine_closed_form():
    cov = quad_covariance(HEAVISIDE, HEAVISIDE, pair(0, 0, 1, 1, 0.5))
    assert cov == pytest.approx(math.asin(0.5) / (2 * math.pi), abs=1e-6)
    assert cov == pytest.approx(1.0 / 12.0, abs=1e-6)


def test_relu_arccosine_closed_form():
    rho = 0.5
    expected = (math.sqrt(1 - rho ** 2) + rho * (math.pi - math.acos(rho)) - 1) / (2 * math.pi)
    assert expected == pytest.approx(0.14534, abs=1e-5)
    assert quad_covariance(RELU, RELU, pair(0, 0, 1, 1, rho)) == pytest.approx(expected, abs=1e-5)


def test_perfect_correlation_gives_second_moment():
    g = UnivariateGaussian(0.3, 1.4)
    # H^2 = H
    assert quad_cross_moment(HEAVISIDE, HEAVISIDE, CorrelatedPair(g, g, 1.0)) == pytest.approx(
        activation_mean(HEAVISIDE, g), abs=1e-10)
    relu_cov = quad_covariance(RELU, RELU, CorrelatedPair(g, g, 1.0))
    assert relu_cov == pytest.approx(activation_variance(RELU, g), abs=1e-10)


def test_anti_correlated_heaviside_pair():
    # y_b = -y_a: H(y)H(-y) vanishes almost surely
    cross = quad_cross_moment(HEAVISIDE, HEAVISIDE, pair(0, 0, 1, 1, -1.0))
    assert cross == pytest.approx(0.0, abs=1e-10)


def test_doubling_nodes_is_converged_on_the_error_grid():
    mu = np.linspace(-5, 5, 11)
    coarse, _ = quad_covariance_grid(RELU, RELU, mu, mu, 1.0, 1.0, 0.5, QuadratureConfig(nodes_per_axis=40))
    fine, _ = quad_covariance_grid(RELU, RELU, mu, mu, 1.0, 1.0, 0.5, QuadratureConfig(nodes_per_axis=80))
    assert np.max(np.abs(coarse - fine)) <= 1e-8


def test_grid_matches_pointwise_covariance():
    mu = np.array([-1.0, 0.5])
    _, cov = quad_covariance_grid(GELU, GELU, mu, mu, 1.0, 0.8, 0.3)
    assert cov[0, 1] == pytest.approx(quad_covariance(GELU, GELU, pair(-1.0, 0.5, 1.0, 0.8, 0.3)), abs=1e-12)


def test_oracle_records_follow_csv_columns():
    mu = np.array([0.0, 1.0])
    cross, cov = quad_covariance_grid(RELU, RELU, mu, mu, 1.0, 1.0, 0.5)
    rows = oracle_records(RELU, RELU, mu, mu, 1.0, 1.0, 0.5, cross, cov)
    assert len(rows) == 4
    assert tuple(rows[0]) == ORACLE_COLUMNS
    assert rows[1]['mu_j'] == 1.0 and rows[1]['covariance'] == cov[0, 1]


def test_configuration_and_domain_checks():
    with pytest.raises(DomainError):
        QuadratureConfig(nodes_per_axis=1)
    with pytest.raises(DomainError):
        quad_mean(RELU, UnivariateGaussian(0, 0))


def heaviside_orthant(mu_a, mu_b, sigma_a, sigma_b, rho):
    off = rho * sigma_a * sigma_b
    return multivariate_normal.cdf(
        [0.0, 0.0], mean=[-mu_a, -mu_b], cov=[[sigma_a ** 2, off], [off, sigma_b ** 2]],
        abseps=1e-11, releps=1e-11,
    )


@pytest.mark.parametrize('rho', [0.9, 0.99, 0.999, -0.9, -0.99, -0.999])
@pytest.mark.parametrize('mu_a,mu_b,sigma_a,sigma_b', [
    (0.0, 0.0, 1.0, 1.0),
    (5.0, 0.0, 1.0, 1.0),
    (1.0, -0.5, 1.0, 1.0),
    (-2.0, 1.5, 0.7, 2.0),
])
def test_heaviside_cross_moment_at_high_correlation(mu_a, mu_b, sigma_a, sigma_b, rho):
    cross = quad_cross_moment(HEAVISIDE, HEAVISIDE, pair(mu_a, mu_b, sigma_a, sigma_b, rho))
    assert cross == pytest.approx(heaviside_orthant(mu_a, mu_b, sigma_a, sigma_b, rho), abs=1e-7)


@pytest.mark.parametrize('rho', [0.9, 0.99, 0.999, -0.999])
@pytest.mark.parametrize('mu_a,mu_b', [(0.0, 0.0), (5.0, 0.0), (-1.0, 2.0)])
def test_relu_covariance_converged_at_high_correlation(mu_a, mu_b, rho):
    p = pair(mu_a, mu_b, 1.0, 1.0, rho)
    coarse = quad_covariance(RELU, RELU, p, QuadratureConfig(nodes_per_axis=60))
    fine = quad_covariance(RELU, RELU, p, QuadratureConfig(nodes_per_axis=120))
    assert coarse == pytest.approx(fine, abs=1e-8)


def test_high_correlation_grid_matches_pointwise():
    mu_b = np.array([-1.0, 0.0, 3.0])
    rows = quad_cross_moments(HEAVISIDE, HEAVISIDE, 0.5, 1.0, mu_b, 1.0, 0.99)
    expected = [heaviside_orthant(0.5, mb, 1.0, 1.0, 0.99) for mb in mu_b]
    assert np.allclose(rows, expected, atol=1e-7)


@pytest.mark.parametrize('kind', [HEAVISIDE, RELU])
@pytest.mark.parametrize('rho', [-0.999, -0.9, 0.5, 0.9, 0.99, 0.999])
def test_covariance_obeys_cauchy_schwarz(kind, rho):
    for mu_a in (-3.0, -1.0, 0.0, 1.5, 4.0):
        for mu_b in (-3.0, -1.0, 0.0, 1.5, 4.0):
            p = pair(mu_a, mu_b, 1.0, 1.0, rho)
            cov = quad_covariance(kind, kind, p)
            bound = quad_variance(kind, p.a) * quad_variance(kind, p.b)
            assert cov * cov <= bound * (1 + 1e-9) + 1e-15, (mu_a, mu_b)


def test_scheme_follows_breakpoints():
    assert scheme_for(RELU) == 'split-gauss-legendre'
    assert scheme_for(HEAVISIDE) == 'split-gauss-legendre'
    assert scheme_for(GELU) == 'gauss-hermite'
    assert scheme_for(IDENTITY) == 'gauss-hermite'
