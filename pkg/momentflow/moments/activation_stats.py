"""Gaussian-input statistics of element-wise activations.

For y ~ N(mu, sigma^2) and z = g(y) this module provides E[z], Var(z) and the
scaled derivative terms sigma^k d^k E[z] / d mu^k. The covariance of two
activations of jointly Gaussian inputs with correlation rho is the series

    Cov(z_i, z_j) = sum_k rho^k / k! * term_i(k) * term_j(k)

truncated at ``SeriesConfig.order``. The same series with i == j and rho = 1
gives the variance.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple, Union

import numpy as np
from scipy import special

from ..utils.errors import DomainError
from .gaussian_layer import GaussianMoments, PsdPolicy, psd_repair, symmetrize
from .special_math import INV_SQRT_2PI, hermite_sequence

logger = logging.getLogger(__name__)

SIGMOID_ALPHA = 0.368
SIGMOID_ALPHA_PI8 = math.pi / 8.0
MAX_ORDER = 30
SIGMOID_MAX_ORDER = 5


class ActivationTag(str, Enum):
    HEAVISIDE = 'heaviside'
    RELU = 'relu'
    GELU = 'gelu'
    SIGMOID = 'sigmoid'
    IDENTITY = 'identity'


@dataclass(frozen=True)
class ActivationKind:
    """An activation function; ``alpha`` only matters for the sigmoid approximation"""
    tag: ActivationTag
    alpha: float = SIGMOID_ALPHA

    def __post_init__(self):
        object.__setattr__(self, 'tag', ActivationTag(self.tag))
        if self.tag is ActivationTag.SIGMOID:
            if not (self.alpha > 0 and math.isfinite(self.alpha)):
                raise DomainError(f"sigmoid alpha must be positive, got {self.alpha}")
        else:
            object.__setattr__(self, 'alpha', SIGMOID_ALPHA)

    @property
    def name(self) -> str:
        if self.tag is not ActivationTag.SIGMOID or self.alpha == SIGMOID_ALPHA:
            return self.tag.value
        if self.alpha == SIGMOID_ALPHA_PI8:
            return 'sigmoid-pi8'
        return f"sigmoid:{self.alpha!r}"

    @property
    def max_order(self) -> int:
        return SIGMOID_MAX_ORDER if self.tag is ActivationTag.SIGMOID else MAX_ORDER

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        """Points where g is not smooth"""
        if self.tag in (ActivationTag.HEAVISIDE, ActivationTag.RELU):
            return (0.0,)
        return ()

    def __str__(self):
        return self.name


HEAVISIDE = ActivationKind(ActivationTag.HEAVISIDE)
RELU = ActivationKind(ActivationTag.RELU)
GELU = ActivationKind(ActivationTag.GELU)
SIGMOID = ActivationKind(ActivationTag.SIGMOID)
SIGMOID_PI8 = ActivationKind(ActivationTag.SIGMOID, SIGMOID_ALPHA_PI8)
IDENTITY = ActivationKind(ActivationTag.IDENTITY)

KIND_NAMES = ('heaviside', 'relu', 'gelu', 'sigmoid', 'sigmoid-pi8', 'identity')


def parse_kind(text: Union[str, ActivationKind]) -> ActivationKind:
    """'relu', 'GELU', 'sigmoid', 'sigmoid-pi8' or 'sigmoid:<alpha>'"""
    if isinstance(text, ActivationKind):
        return text
    key = str(text).strip().lower()
    if key == 'sigmoid-pi8':
        return SIGMOID_PI8
    if key.startswith('sigmoid:'):
        try:
            alpha = float(key.split(':', 1)[1])
        except ValueError:
            raise DomainError(f"invalid sigmoid alpha in {text!r}")
        return ActivationKind(ActivationTag.SIGMOID, alpha)
    try:
        return ActivationKind(ActivationTag(key))
    except ValueError:
        raise DomainError(f"unknown activation kind {text!r}; valid kinds: {', '.join(KIND_NAMES)}")


@dataclass(frozen=True)
class UnivariateGaussian:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise DomainError("mu and sigma must be finite")
        if self.sigma < 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class CorrelatedPair:
    a: UnivariateGaussian
    b: UnivariateGaussian
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.rho) and -1.0 <= self.rho <= 1.0):
            raise DomainError(f"correlation must lie in [-1, 1], got {self.rho}")


@dataclass(frozen=True)
class SeriesConfig:
    order: int = 4
    sigma_floor: float = 1e-8
    psd_policy: PsdPolicy = PsdPolicy.SYMMETRIZE

    def __post_init__(self):
        if int(self.order) != self.order or not 1 <= self.order <= MAX_ORDER:
            raise DomainError(f"series order must be an integer in [1, {MAX_ORDER}], got {self.order}")
        if self.sigma_floor < 0:
            raise DomainError(f"sigma_floor must be nonnegative, got {self.sigma_floor}")
        object.__setattr__(self, 'order', int(self.order))
        object.__setattr__(self, 'psd_policy', PsdPolicy(self.psd_policy))


@dataclass(frozen=True)
class DerivativeTerm:
    """sigma^k d^k E[z] / d mu^k"""
    k: int
    value: float


def check_order(kind: ActivationKind, order: int):
    if order < 1 or order > kind.max_order:
        raise DomainError(f"{kind.name} supports series orders 1..{kind.max_order}, got {order}")


def activation_value(kind: ActivationKind, y):
    """g(y), element-wise. The sigmoid approximation evaluates the true logistic."""
    y = np.asarray(y, dtype=float)
    tag = kind.tag
    if tag is ActivationTag.HEAVISIDE:
        return np.where(y >= 0, 1.0, 0.0)
    if tag is ActivationTag.RELU:
        return np.maximum(y, 0.0)
    if tag is ActivationTag.GELU:
        return y * special.ndtr(y)
    if tag is ActivationTag.SIGMOID:
        return special.expit(y)
    return y.copy()


def _pdf(u):
    return INV_SQRT_2PI * np.exp(-0.5 * u * u)


def _times_density(poly, density):
    """poly * density with 0 wherever the density underflowed"""
    with np.errstate(over='ignore', invalid='ignore'):
        out = poly * density
    return np.where(density > 0, out, 0.0)


def _gelu_scale(sigma):
    s = np.sqrt(1.0 + sigma * sigma)
    return s, sigma / s


def _mean(kind: ActivationKind, mu, sigma):
    tag = kind.tag
    if tag is ActivationTag.HEAVISIDE:
        return special.ndtr(mu / sigma)
    if tag is ActivationTag.RELU:
        u = mu / sigma
        return mu * special.ndtr(u) + sigma * _pdf(u)
    if tag is ActivationTag.GELU:
        s, _ = _gelu_scale(sigma)
        u = mu / s
        return mu * special.ndtr(u) + (sigma * sigma / s) * _pdf(u)
    if tag is ActivationTag.SIGMOID:
        return special.expit(mu / np.sqrt(1.0 + kind.alpha * sigma * sigma))
    return np.array(mu, dtype=float, copy=True)


# Derivatives of the logistic function as polynomials in s = expit(v),
# each multiplied by s (1 - s).
_LOGISTIC_DERIVATIVES = (
    lambda s: np.ones_like(s),
    lambda s: 1.0 - 2.0 * s,
    lambda s: 1.0 - 6.0 * s + 6.0 * s ** 2,
    lambda s: (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s ** 2),
    lambda s: 1.0 - 30.0 * s + 150.0 * s ** 2 - 240.0 * s ** 3 + 120.0 * s ** 4,
)


def _terms(kind: ActivationKind, mu, sigma, order: int) -> np.ndarray:
    """Stack of sigma^k d^k E[z]/d mu^k for k = 1..order, shape (order,) + mu.shape"""
    tag = kind.tag
    shape = np.broadcast(mu, sigma).shape
    mu = np.broadcast_to(mu, shape)
    sigma = np.broadcast_to(sigma, shape)
    out = np.zeros((order,) + shape)

    if tag is ActivationTag.IDENTITY:
        out[0] = sigma
        return out

    if tag is ActivationTag.SIGMOID:
        beta = np.sqrt(1.0 + kind.alpha * sigma * sigma)
        s = special.expit(mu / beta)
        base = s * (1.0 - s)
        ratio = sigma / beta
        for k in range(1, order + 1):
            out[k - 1] = ratio ** k * base * _LOGISTIC_DERIVATIVES[k - 1](s)
        return out

    if tag is ActivationTag.HEAVISIDE:
        u = mu / sigma
        density = _pdf(u)
        he = hermite_sequence(order - 1, u)
        for k in range(1, order + 1):
            out[k - 1] = (-1.0) ** (k - 1) * _times_density(he[k - 1], density)
        return out

    if tag is ActivationTag.RELU:
        u = mu / sigma
        density = _pdf(u)
        out[0] = sigma * special.ndtr(u)
        if order >= 2:
            he = hermite_sequence(order - 2, u)
            for k in range(2, order + 1):
                out[k - 1] = sigma * (-1.0) ** k * _times_density(he[k - 2], density)
        return out

    # GELU, with alpha = sigma / sqrt(1 + sigma^2) and u = alpha mu / sigma
    s, alpha = _gelu_scale(sigma)
    u = mu / s
    density = _pdf(u)
    shrink = 1.0 - alpha * alpha
    out[0] = sigma * special.ndtr(u) + alpha * shrink * _times_density(mu, density)
    if order >= 2:
        he = hermite_sequence(order, u)
        for k in range(2, order + 1):
            poly = he[k - 2] - shrink * he[k]
            out[k - 1] = alpha ** (k - 1) * sigma * (-1.0) ** k * _times_density(poly, density)
    return out


def _closed_form_variance(kind: ActivationKind, mu, sigma):
    if kind.tag is ActivationTag.HEAVISIDE:
        p = special.ndtr(mu / sigma)
        return p * (1.0 - p)
    if kind.tag is ActivationTag.RELU:
        u = mu / sigma
        mean = mu * special.ndtr(u) + sigma * _pdf(u)
        return (mu * mu + sigma * sigma) * special.ndtr(u) + mu * sigma * _pdf(u) - mean * mean
    if kind.tag is ActivationTag.IDENTITY:
        return sigma * sigma
    return None


def _split(mu, sigma, sigma_floor):
    """Deterministic mask and a sigma safe to divide by"""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise DomainError("sigma must be nonnegative")
    deterministic = sigma <= sigma_floor
    safe_sigma = np.where(deterministic, 1.0, sigma)
    return mu, deterministic, safe_sigma


def mean_vector(kind: ActivationKind, mu, sigma, cfg: SeriesConfig = SeriesConfig()) -> np.ndarray:
    mu, deterministic, safe_sigma = _split(mu, sigma, cfg.sigma_floor)
    return np.where(deterministic, activation_value(kind, mu), _mean(kind, mu, safe_sigma))


def variance_vector(kind: ActivationKind, mu, sigma, cfg: SeriesConfig = SeriesConfig()) -> Tuple[np.ndarray, int]:
    """Variances and the number of entries clamped up to zero"""
    mu, deterministic, safe_sigma = _split(mu, sigma, cfg.sigma_floor)
    variance = _closed_form_variance(kind, mu, safe_sigma)
    if variance is None:
        check_order(kind, cfg.order)
        terms = _terms(kind, mu, safe_sigma, cfg.order)
        factorials = np.array([math.factorial(k) for k in range(1, cfg.order + 1)], dtype=float)
        variance = np.tensordot(1.0 / factorials, terms * terms, axes=1)
    variance = np.where(deterministic, 0.0, variance)
    negative = variance < 0
    clamped = int(np.count_nonzero(negative))
    if clamped:
        logger.debug("clamped %d negative %s variances (min %.3e)", clamped, kind.name, float(variance.min()))
    return np.where(negative, 0.0, variance), clamped


def term_matrix(kind: ActivationKind, mu, sigma, order: int, sigma_floor: float = 1e-8) -> np.ndarray:
    """(order, n) derivative terms with zero columns for deterministic entries"""
    check_order(kind, order)
    mu, deterministic, safe_sigma = _split(mu, sigma, sigma_floor)
    terms = _terms(kind, mu, safe_sigma, order)
    return np.where(deterministic, 0.0, terms)


def activation_mean(kind: ActivationKind, g: UnivariateGaussian, cfg: SeriesConfig = SeriesConfig()) -> float:
    return float(mean_vector(kind, g.mu, g.sigma, cfg))


def activation_variance(kind: ActivationKind, g: UnivariateGaussian, cfg: SeriesConfig = SeriesConfig()) -> float:
    variance, _ = variance_vector(kind, g.mu, g.sigma, cfg)
    return float(variance)


def derivative_term(kind: ActivationKind, g: UnivariateGaussian, k: int,
                    sigma_floor: float = 1e-8) -> DerivativeTerm:
    if int(k) != k or k < 1:
        raise DomainError(f"derivative order must be a positive integer, got {k}")
    k = int(k)
    check_order(kind, k)
    terms = term_matrix(kind, g.mu, g.sigma, k, sigma_floor)
    return DerivativeTerm(k, float(terms[k - 1]))


def pair_covariance(kind_a: ActivationKind, kind_b: ActivationKind, pair: CorrelatedPair,
                    cfg: SeriesConfig = SeriesConfig()) -> float:
    """Truncated series covariance of g_a(y_a) and g_b(y_b)"""
    if kind_a != kind_b:
        logger.debug("heterogeneous activation pair %s/%s", kind_a.name, kind_b.name)
    order = cfg.order
    terms_a = term_matrix(kind_a, pair.a.mu, pair.a.sigma, order, cfg.sigma_floor)
    terms_b = term_matrix(kind_b, pair.b.mu, pair.b.sigma, order, cfg.sigma_floor)
    total = 0.0
    rho_k = 1.0
    for k in range(1, order + 1):
        rho_k *= pair.rho
        total += rho_k / math.factorial(k) * (float(terms_a[k - 1]) * float(terms_b[k - 1]))
    return total


@dataclass
class LayerDiagnostics:
    order: int = 0
    clamped_variances: int = 0
    psd_adjustment: float = 0.0
    clipped_eigenvalues: int = 0

    def to_dict(self) -> Dict[str, float]:
        return {
            'order': self.order,
            'clamped_variances': self.clamped_variances,
            'psd_adjustment': self.psd_adjustment,
            'clipped_eigenvalues': self.clipped_eigenvalues,
        }


def _series_block(corr_rows: np.ndarray, terms: np.ndarray, rows: slice) -> np.ndarray:
    acc = np.zeros_like(corr_rows)
    power = np.ones_like(corr_rows)
    for k in range(terms.shape[0]):
        power *= corr_rows
        acc += (power / math.factorial(k + 1)) * np.outer(terms[k, rows], terms[k])
    return acc


def activation_layer(kind: ActivationKind, moments: GaussianMoments, cfg: SeriesConfig = SeriesConfig(),
                     threads: int = 1) -> Tuple[GaussianMoments, LayerDiagnostics]:
    """Moments of g(y) for y ~ N(mean, cov), with diagnostics"""
    check_order(kind, cfg.order)
    mu = moments.mean
    sigma = moments.std
    n = moments.dim

    mean = mean_vector(kind, mu, sigma, cfg)
    variance, clamped = variance_vector(kind, mu, sigma, cfg)
    terms = term_matrix(kind, mu, sigma, cfg.order, cfg.sigma_floor)

    deterministic = sigma <= cfg.sigma_floor
    safe_sigma = np.where(deterministic, 1.0, sigma)
    corr = symmetrize(moments.cov) / np.outer(safe_sigma, safe_sigma)
    corr = np.clip(corr, -1.0, 1.0)
    corr[deterministic, :] = 0.0
    corr[:, deterministic] = 0.0

    if threads > 1 and n > 1:
        bounds = np.linspace(0, n, min(threads, n) + 1).astype(int)
        blocks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda rows: _series_block(corr[rows], terms, rows), blocks))
        cov = np.vstack(parts)
    else:
        cov = _series_block(corr, terms, slice(0, n))

    cov[np.diag_indices(n)] = variance
    repair = psd_repair(cov, cfg.psd_policy)
    diagnostics = LayerDiagnostics(
        order=cfg.order,
        clamped_variances=clamped,
        psd_adjustment=repair.adjustment,
        clipped_eigenvalues=repair.clipped,
    )
    return GaussianMoments(mean, repair.matrix), diagnostics


def layer_output_moments(kind: ActivationKind, moments: GaussianMoments,
                         cfg: SeriesConfig = SeriesConfig(), threads: int = 1) -> GaussianMoments:
    result, _ = activation_layer(kind, moments, cfg, threads)
    return result
