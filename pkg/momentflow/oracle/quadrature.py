"""Numerical expectations of activations of (bivariate) Gaussian inputs.

Smooth activations use Gauss-Hermite nodes y = mu + sqrt(2) sigma t.
Activations with a breakpoint are integrated piecewise: the range
mu +/- span*sigma is cut at every breakpoint and each piece gets its own
Gauss-Legendre rule weighted by the normal density, which keeps the
convergence spectral despite the kink or jump.

The cross moment E[g_a(y_a) g_b(y_b)] is a nested integral: an outer rule
over y_a and, per outer node, an inner rule over y_b | y_a, which is
normal with mean mu_b + rho sigma_b (y_a - mu_a) / sigma_a and standard
deviation sigma_b sqrt(1 - rho^2).
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

from ..moments.activation_stats import ActivationKind, CorrelatedPair, UnivariateGaussian, activation_value
from ..utils.errors import DomainError


@dataclass(frozen=True)
class QuadratureConfig:
    nodes_per_axis: int = 60
    span: float = 12.0

    def __post_init__(self):
        if int(self.nodes_per_axis) != self.nodes_per_axis or self.nodes_per_axis < 2:
            raise DomainError(f"nodes_per_axis must be an integer >= 2, got {self.nodes_per_axis}")
        if not self.span > 0:
            raise DomainError(f"span must be positive, got {self.span}")


# Offsets, in transition widths, of the extra outer cuts placed around each
# mapped breakpoint of the partner activation
TRANSITION_PANELS = (1.0, 2.0, 4.0, 8.0)


def scheme_for(kind: ActivationKind) -> str:
    return 'split-gauss-legendre' if kind.breakpoints else 'gauss-hermite'


@lru_cache(maxsize=32)
def _hermite_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    t, w = hermgauss(n)
    return math.sqrt(2.0) * t, w / math.sqrt(math.pi)


@lru_cache(maxsize=32)
def _legendre_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def gaussian_rule(mean: np.ndarray, std: np.ndarray, breaks: np.ndarray,
                  q: QuadratureConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(y)], y ~ N(mean[m], std[m]^2), one row per m.

    ``breaks`` has shape (m, b); b == 0 selects Gauss-Hermite.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    n = q.nodes_per_axis
    if breaks.shape[1] == 0:
        t, w = _hermite_rule(n)
        nodes = mean[:, None] + std[:, None] * t[None, :]
        return nodes, np.broadcast_to(w, nodes.shape)

    x, wx = _legendre_rule(n)
    lo = mean - q.span * std
    hi = mean + q.span * std
    cuts = np.clip(breaks, lo[:, None], hi[:, None])
    edges = np.sort(np.concatenate([lo[:, None], cuts, hi[:, None]], axis=1), axis=1)
    nodes = []
    weights = []
    for piece in range(edges.shape[1] - 1):
        a = edges[:, piece]
        c = edges[:, piece + 1]
        half = 0.5 * (c - a)
        y = 0.5 * (a + c)[:, None] + half[:, None] * x[None, :]
        nodes.append(y)
        weights.append(half[:, None] * wx[None, :] * norm.pdf(y, loc=mean[:, None], scale=std[:, None]))
    return np.concatenate(nodes, axis=1), np.concatenate(weights, axis=1)


def _breaks(kind: ActivationKind, m: int) -> np.ndarray:
    return np.tile(np.asarray(kind.breakpoints, dtype=float), (m, 1)).reshape(m, len(kind.breakpoints))


def _outer_breaks(kind_a: ActivationKind, kind_b: ActivationKind, mu_a, sigma_a, mu_b, sigma_b,
                  rho: float) -> np.ndarray:
    """Cuts for the outer rule over y_a.

    E[g_b(y_b) | y_a] jumps from one branch of g_b to the next over a band of
    width sigma_a sqrt(1 - rho^2) / |rho| around each mapped breakpoint. Once
    that band is narrower than sigma_a it gets its own geometrically graded
    panels.
    """
    m = mu_a.shape[0]
    own = _breaks(kind_a, m)
    spread = math.sqrt(1.0 - rho * rho)
    if rho == 0.0 or not kind_b.breakpoints or spread >= abs(rho):
        return own
    slope = rho * sigma_b / sigma_a
    width = sigma_a * spread / abs(rho)
    columns = [own]
    for b in kind_b.breakpoints:
        centre = mu_a + (b - mu_b) / slope
        columns.append(centre[:, None])
        for step in TRANSITION_PANELS:
            columns.append((centre - step * width)[:, None])
            columns.append((centre + step * width)[:, None])
    return np.concatenate(columns, axis=1)


def quad_means(kind: ActivationKind, mu, sigma, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    if np.any(sigma <= 0):
        raise DomainError("quadrature needs sigma > 0")
    nodes, weights = gaussian_rule(mu, sigma, _breaks(kind, mu.shape[0]), q)
    return np.sum(weights * activation_value(kind, nodes), axis=1)


def quad_mean(kind: ActivationKind, g: UnivariateGaussian, q: QuadratureConfig = QuadratureConfig()) -> float:
    return float(quad_means(kind, g.mu, g.sigma, q)[0])


def quad_variance(kind: ActivationKind, g: UnivariateGaussian, q: QuadratureConfig = QuadratureConfig()) -> float:
    mu = np.array([g.mu])
    sigma = np.array([g.sigma])
    if g.sigma <= 0:
        raise DomainError("quadrature needs sigma > 0")
    nodes, weights = gaussian_rule(mu, sigma, _breaks(kind, 1), q)
    values = activation_value(kind, nodes)
    mean = np.sum(weights * values)
    return float(np.sum(weights * (values - mean) ** 2))


def quad_cross_moments(kind_a: ActivationKind, kind_b: ActivationKind, mu_a, sigma_a, mu_b, sigma_b,
                       rho: float, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """E[g_a(y_a) g_b(y_b)] for each entry of the broadcast (mu_a, mu_b) arrays"""
    mu_a, sigma_a, mu_b, sigma_b = (
        np.ravel(v) for v in np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu_a, sigma_a, mu_b, sigma_b)))
    )
    if np.any(sigma_a <= 0) or np.any(sigma_b <= 0):
        raise DomainError("quadrature needs sigma > 0")
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f"correlation must lie in [-1, 1], got {rho}")
    m = mu_a.shape[0]

    if abs(rho) == 1.0:
        # y_b is an affine function of y_a; breakpoints of g_b map back onto y_a
        slope = rho * sigma_b / sigma_a
        mapped = [mu_a + (b - mu_b) / slope for b in kind_b.breakpoints]
        breaks = np.column_stack([_breaks(kind_a, m)] + [col[:, None] for col in mapped])
        nodes, weights = gaussian_rule(mu_a, sigma_a, breaks, q)
        partner = mu_b[:, None] + slope[:, None] * (nodes - mu_a[:, None])
        return np.sum(weights * activation_value(kind_a, nodes) * activation_value(kind_b, partner), axis=1)

    outer_breaks = _outer_breaks(kind_a, kind_b, mu_a, sigma_a, mu_b, sigma_b, rho)
    outer, outer_w = gaussian_rule(mu_a, sigma_a, outer_breaks, q)
    p = outer.shape[1]
    cond_mean = mu_b[:, None] + rho * (sigma_b / sigma_a)[:, None] * (outer - mu_a[:, None])
    cond_std = np.repeat(sigma_b * math.sqrt(1.0 - rho * rho), p)
    inner, inner_w = gaussian_rule(cond_mean.ravel(), cond_std, _breaks(kind_b, m * p), q)
    inner_expectation = np.sum(inner_w * activation_value(kind_b, inner), axis=1).reshape(m, p)
    return np.sum(outer_w * activation_value(kind_a, outer) * inner_expectation, axis=1)


def quad_cross_moment(kind_a: ActivationKind, kind_b: ActivationKind, pair: CorrelatedPair,
                      q: QuadratureConfig = QuadratureConfig()) -> float:
    return float(quad_cross_moments(kind_a, kind_b, pair.a.mu, pair.a.sigma, pair.b.mu, pair.b.sigma, pair.rho, q)[0])


def quad_covariance(kind_a: ActivationKind, kind_b: ActivationKind, pair: CorrelatedPair,
                    q: QuadratureConfig = QuadratureConfig()) -> float:
    cross = quad_cross_moment(kind_a, kind_b, pair, q)
    return cross - quad_mean(kind_a, pair.a, q) * quad_mean(kind_b, pair.b, q)


def quad_covariance_grid(kind_a: ActivationKind, kind_b: ActivationKind, mu_a: Sequence[float],
                         mu_b: Sequence[float], sigma_a: float, sigma_b: float, rho: float,
                         q: QuadratureConfig = QuadratureConfig()) -> Tuple[np.ndarray, np.ndarray]:
    """Cross moments and covariances on the grid mu_a x mu_b, shape (len(mu_a), len(mu_b))"""
    mu_a = np.asarray(mu_a, dtype=float)
    mu_b = np.asarray(mu_b, dtype=float)
    means_a = quad_means(kind_a, mu_a, sigma_a, q)
    means_b = quad_means(kind_b, mu_b, sigma_b, q)
    cross = np.empty((mu_a.size, mu_b.size))
    for i, value in enumerate(mu_a):
        cross[i] = quad_cross_moments(kind_a, kind_b, value, sigma_a, mu_b, sigma_b, rho, q)
    return cross, cross - np.outer(means_a, means_b)


ORACLE_COLUMNS = ('kind_a', 'kind_b', 'mu_i', 'mu_j', 'sigma_i', 'sigma_j', 'rho', 'cross_moment', 'covariance')


def oracle_records(kind_a: ActivationKind, kind_b: ActivationKind, mu_a: Sequence[float], mu_b: Sequence[float],
                   sigma_a: float, sigma_b: float, rho: float, cross: np.ndarray,
                   covariance: np.ndarray) -> List[Dict]:
    """Rows in the oracle CSV schema"""
    rows = []
    for i, mi in enumerate(mu_a):
        for j, mj in enumerate(mu_b):
            rows.append({
                'kind_a': kind_a.name,
                'kind_b': kind_b.name,
                'mu_i': float(mi),
                'mu_j': float(mj),
                'sigma_i': float(sigma_a),
                'sigma_j': float(sigma_b),
                'rho': float(rho),
                'cross_moment': float(cross[i, j]),
                'covariance': float(covariance[i, j]),
            })
    return rows
