"""Monte Carlo forward simulation of whole networks.

Samples are drawn in chunks; chunk c uses its own generator seeded with
SeedSequence(seed, spawn_key=(c,)), and per-chunk sufficient statistics are
combined in chunk order. A run therefore gives the same bits whether the
chunks are evaluated serially or on a thread pool.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from ..moments.activation_stats import activation_value
from ..moments.gaussian_layer import GaussianMoments, PsdPolicy, psd_repair
from ..network.model import Activation, Conv2D, Dense, Flatten, GaussianDense, NetworkSpec
from ..utils.context import DEFAULT_ELEMENT_BUDGET, DEFAULT_MC_CHUNK
from ..utils.errors import CholeskyError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class McConfig:
    samples: int = 20000
    seed: int = 0
    chunk: int = DEFAULT_MC_CHUNK

    def __post_init__(self):
        if self.samples < 1 or self.chunk < 1:
            raise DomainError(f"samples and chunk must be positive, got {self.samples} and {self.chunk}")

    def to_dict(self):
        return {'samples': self.samples, 'seed': self.seed, 'chunk': self.chunk}


@dataclass(frozen=True)
class MomentEstimate:
    mean: np.ndarray
    variance: np.ndarray
    cov: np.ndarray
    samples: int
    stderr: np.ndarray


class _ChunkStats(NamedTuple):
    count: int
    mean: np.ndarray
    m2: np.ndarray


def sampling_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, after eigenvalue clipping if the matrix is not PD"""
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    repaired = psd_repair(cov, PsdPolicy.CLIP_EIGENVALUES).matrix
    jitter = 1e-12 * max(float(np.trace(repaired)) / repaired.shape[0], np.finfo(float).tiny)
    try:
        factor = np.linalg.cholesky(repaired + jitter * np.eye(repaired.shape[0]))
    except np.linalg.LinAlgError:
        raise CholeskyError(float(np.linalg.eigvalsh(cov).min()))
    logger.debug("sampling covariance needed eigenvalue clipping")
    return factor


def forward(net: NetworkSpec, x: np.ndarray, rng: np.random.Generator,
            element_budget: int = DEFAULT_ELEMENT_BUDGET) -> np.ndarray:
    """Run a batch (rows are samples) through the network"""
    for layer in net.layers:
        if isinstance(layer, Dense):
            x = x @ layer.weight.T + layer.bias
        elif isinstance(layer, GaussianDense):
            # Per-sample pre-activations are independent Gaussians given x
            mean = x @ layer.weight_mean.T + layer.bias_mean
            var = (x * x) @ layer.weight_var.T + layer.bias_var
            x = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
        elif isinstance(layer, Conv2D):
            lowered = layer.lowered(element_budget)
            x = x @ lowered.weight.T + lowered.bias
        elif isinstance(layer, Activation):
            x = activation_value(layer.kind, x)
        elif isinstance(layer, Flatten):
            continue
        else:
            raise DomainError(f"cannot simulate layer type '{layer.type_name}'")
    return x


def _chunk_stats(net: NetworkSpec, mean: np.ndarray, factor: np.ndarray, seed: int, index: int,
                 size: int, element_budget: int) -> _ChunkStats:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    x = mean + rng.standard_normal((size, mean.shape[0])) @ factor.T
    y = forward(net, x, rng, element_budget)
    chunk_mean = y.mean(axis=0)
    centered = y - chunk_mean
    return _ChunkStats(size, chunk_mean, centered.T @ centered)


def _combine(parts: List[_ChunkStats]) -> _ChunkStats:
    count, mean, m2 = parts[0]
    for part in parts[1:]:
        total = count + part.count
        delta = part.mean - mean
        mean = mean + delta * (part.count / total)
        m2 = m2 + part.m2 + np.outer(delta, delta) * (count * part.count / total)
        count = total
    return _ChunkStats(count, mean, m2)


def mc_propagate(net: NetworkSpec, moments: GaussianMoments, mc: McConfig = McConfig(), threads: int = 1,
                 element_budget: int = DEFAULT_ELEMENT_BUDGET) -> MomentEstimate:
    if moments.dim != net.input_dim:
        raise DomainError(f"network expects input dimension {net.input_dim}, got {moments.dim}")
    factor = sampling_factor(moments.cov)
    n_chunks = math.ceil(mc.samples / mc.chunk)
    sizes = [min(mc.chunk, mc.samples - c * mc.chunk) for c in range(n_chunks)]

    def run(index: int) -> _ChunkStats:
        return _chunk_stats(net, moments.mean, factor, mc.seed, index, sizes[index], element_budget)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(index) for index in range(n_chunks)]

    count, mean, m2 = _combine(parts)
    if count > 1:
        cov = m2 / (count - 1)
        variance = np.diag(cov).copy()
        stderr = np.sqrt(variance / count)
    else:
        cov = np.zeros_like(m2)
        variance = np.zeros(mean.shape)
        stderr = np.full(mean.shape, np.nan)
    logger.debug("monte carlo: %d samples in %d chunks", count, n_chunks)
    return MomentEstimate(mean, variance, 0.5 * (cov + cov.T), count, stderr)


def estimate_from_moments(moments: GaussianMoments, samples: int = 1) -> MomentEstimate:
    """Wrap exact moments as an estimate (used to check ratio bookkeeping)"""
    variance = np.diag(moments.cov).copy()
    return MomentEstimate(np.array(moments.mean), variance, np.array(moments.cov), samples,
                          np.sqrt(variance / samples))
