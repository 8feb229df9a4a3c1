"""Moment propagation through linear maps and covariance utilities"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Tuple

import numpy as np

from ..utils.context import DEFAULT_ELEMENT_BUDGET
from ..utils.errors import DomainError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-9


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianMoments:
    """Mean vector and symmetric covariance of one layer interface"""
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise DomainError(f"mean must be a vector, got shape {mean.shape}")
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise DomainError(f"covariance shape {cov.shape} does not match mean length {n}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DomainError("moments must be finite")
        scale = float(np.max(np.abs(cov))) if cov.size else 0.0
        asym = float(np.max(np.abs(cov - cov.T))) if cov.size else 0.0
        if asym > SYMMETRY_RTOL * scale:
            raise DomainError(f"covariance is not symmetric (max asymmetry {asym:.3e})")
        diag = np.diag(cov)
        if np.any(diag < -SYMMETRY_RTOL * max(scale, 1.0)):
            raise DomainError(f"covariance has negative variance {float(diag.min()):.3e}")
        object.__setattr__(self, 'mean', _readonly(mean))
        object.__setattr__(self, 'cov', _readonly(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variance(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @classmethod
    def from_diagonal(cls, mean, variance) -> "GaussianMoments":
        return cls(np.asarray(mean, dtype=float), np.diag(np.asarray(variance, dtype=float)))

    def scaled(self, factor: float) -> "GaussianMoments":
        """Same mean, covariance multiplied by ``factor``"""
        return GaussianMoments(self.mean, self.cov * factor)


@dataclass(frozen=True)
class AffineLayer:
    """y = W x + b"""
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weight = np.atleast_2d(np.asarray(self.weight, dtype=float))
        bias = np.atleast_1d(np.asarray(self.bias, dtype=float))
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise DomainError(f"weight {weight.shape} and bias {bias.shape} are inconsistent")
        object.__setattr__(self, 'weight', weight)
        object.__setattr__(self, 'bias', bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class FactorizedGaussianAffine:
    """Affine map whose weights and biases are independent Gaussians"""
    weight_mean: np.ndarray
    weight_var: np.ndarray
    bias_mean: np.ndarray
    bias_var: np.ndarray

    def __post_init__(self):
        wm = np.atleast_2d(np.asarray(self.weight_mean, dtype=float))
        wv = np.atleast_2d(np.asarray(self.weight_var, dtype=float))
        bm = np.atleast_1d(np.asarray(self.bias_mean, dtype=float))
        bv = np.atleast_1d(np.asarray(self.bias_var, dtype=float))
        if wv.shape != wm.shape or bm.shape != (wm.shape[0],) or bv.shape != bm.shape:
            raise DomainError(
                f"inconsistent shapes: weight_mean {wm.shape}, weight_var {wv.shape}, "
                f"bias_mean {bm.shape}, bias_var {bv.shape}"
            )
        if np.any(wv < 0) or np.any(bv < 0):
            raise DomainError("weight and bias variances must be nonnegative")
        object.__setattr__(self, 'weight_mean', wm)
        object.__setattr__(self, 'weight_var', wv)
        object.__setattr__(self, 'bias_mean', bm)
        object.__setattr__(self, 'bias_var', bv)

    @property
    def in_dim(self) -> int:
        return self.weight_mean.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight_mean.shape[0]


def _check_dims(in_dim: int, moments: GaussianMoments, what: str):
    if in_dim != moments.dim:
        raise DomainError(f"{what} expects input dimension {in_dim}, got {moments.dim}")


def affine_propagate(layer: AffineLayer, moments: GaussianMoments) -> GaussianMoments:
    """mean = W mu + b, cov = W Sigma W^T"""
    _check_dims(layer.in_dim, moments, "affine layer")
    w = layer.weight
    mean = w @ moments.mean + layer.bias
    cov = symmetrize(w @ moments.cov @ w.T)
    return GaussianMoments(mean, cov)


def dvi_affine_propagate(layer: FactorizedGaussianAffine, moments: GaussianMoments) -> GaussianMoments:
    """Affine propagation with factorized Gaussian weights and biases.

    With every parameter independent, the weight and bias terms only reach
    the diagonal:

        Cov(y_i, y_k) = [i == k] (Var(b_i) + sum_j E[x_j^2] Var(W_ij))
                        + (E[W] Sigma_x E[W]^T)_ik
    """
    _check_dims(layer.in_dim, moments, "gaussian affine layer")
    wm = layer.weight_mean
    second_moment = np.diag(moments.cov) + moments.mean ** 2
    mean = wm @ moments.mean + layer.bias_mean
    cov = wm @ moments.cov @ wm.T
    cov[np.diag_indices_from(cov)] += layer.weight_var @ second_moment + layer.bias_var
    return GaussianMoments(mean, symmetrize(cov))


def conv2d_output_shape(kernel_shape: Tuple[int, int, int, int], stride: int, padding: str,
                        input_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
    out_ch, in_ch, kh, kw = kernel_shape
    h, w, c = input_shape
    if c != in_ch:
        raise DomainError(f"kernel expects {in_ch} input channels, input has {c}")
    if stride < 1:
        raise DomainError(f"stride must be positive, got {stride}")
    if padding == 'valid':
        oh = (h - kh) // stride + 1 if h >= kh else 0
        ow = (w - kw) // stride + 1 if w >= kw else 0
    elif padding == 'same':
        oh = math.ceil(h / stride)
        ow = math.ceil(w / stride)
    else:
        raise DomainError(f"padding must be 'same' or 'valid', got {padding!r}")
    if oh <= 0 or ow <= 0:
        raise DomainError(f"convolution output is empty for input {input_shape} and kernel {kh}x{kw}")
    return oh, ow, out_ch


def check_element_budget(kernel_shape: Tuple[int, int, int, int], stride: int, padding: str,
                         input_shape: Tuple[int, int, int], element_budget: int = DEFAULT_ELEMENT_BUDGET) -> int:
    """Element count of the lowered matrix; DomainError when it exceeds the budget"""
    oh, ow, out_ch = conv2d_output_shape(kernel_shape, stride, padding, input_shape)
    elements = oh * ow * out_ch * math.prod(input_shape)
    if elements > element_budget:
        raise DomainError(
            f"lowered convolution needs {elements} matrix elements, budget is {element_budget}"
        )
    return elements


def conv2d_as_matrix(kernel: np.ndarray, stride: int, padding: str, input_shape: Tuple[int, int, int],
                     bias: Optional[np.ndarray] = None,
                     element_budget: int = DEFAULT_ELEMENT_BUDGET) -> AffineLayer:
    """Lower a 2-D cross-correlation to an explicit affine layer.

    Inputs and outputs are flattened row-major from (height, width, channels).
    Kernels are laid out (out_ch, in_ch, kh, kw).
    """
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 4:
        raise DomainError(f"kernel must be 4-D (out_ch, in_ch, kh, kw), got shape {kernel.shape}")
    out_ch, in_ch, kh, kw = kernel.shape
    h, w, c = (int(v) for v in input_shape)
    oh, ow, _ = conv2d_output_shape(kernel.shape, stride, padding, (h, w, c))
    check_element_budget(kernel.shape, stride, padding, (h, w, c), element_budget)

    if padding == 'same':
        pad_top = max((oh - 1) * stride + kh - h, 0) // 2
        pad_left = max((ow - 1) * stride + kw - w, 0) // 2
    else:
        pad_top = pad_left = 0

    dense = np.zeros((oh, ow, out_ch, h, w, c))
    oy = np.arange(oh)
    ox = np.arange(ow)
    for ky in range(kh):
        iy = oy * stride - pad_top + ky
        vy = (iy >= 0) & (iy < h)
        for kx in range(kw):
            ix = ox * stride - pad_left + kx
            vx = (ix >= 0) & (ix < w)
            if not vy.any() or not vx.any():
                continue
            dense[oy[vy][:, None], ox[vx][None, :], :, iy[vy][:, None], ix[vx][None, :], :] += kernel[:, :, ky, kx]

    if bias is None:
        bias = np.zeros(out_ch)
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (out_ch,):
        raise DomainError(f"bias must have {out_ch} entries, got shape {bias.shape}")
    return AffineLayer(dense.reshape(oh * ow * out_ch, h * w * c), np.tile(bias, oh * ow))


@dataclass(frozen=True)
class CovFactory:
    """Seeded source of random input covariances"""
    seed: int
    n: int
    max_variance: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"covariance dimension must be at least 1, got {self.n}")
        if not self.max_variance > 0:
            raise DomainError(f"max_variance must be positive, got {self.max_variance}")

    def to_dict(self):
        return {
            'seed': self.seed,
            'n': self.n,
            'max_variance': self.max_variance,
            'eigenvalues': 'uniform(0,1]',
            'basis': 'qr(gaussian), sign-corrected',
            'rescale': 'max diagonal',
        }


def random_covariance(factory: CovFactory, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Q diag(lambda) Q^T with lambda ~ U(0, 1], rescaled so the largest variance is max_variance"""
    if rng is None:
        rng = np.random.default_rng(factory.seed)
    n = factory.n
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    eigenvalues = 1.0 - rng.random(n)
    cov = symmetrize((q * eigenvalues) @ q.T)
    cov *= factory.max_variance / np.max(np.diag(cov))
    return cov


class PsdPolicy(str, Enum):
    NONE = 'none'
    SYMMETRIZE = 'symmetrize'
    CLIP_EIGENVALUES = 'clip_eigenvalues'


class PsdRepair(NamedTuple):
    matrix: np.ndarray
    adjustment: float
    clipped: int


def psd_repair(cov: np.ndarray, policy: PsdPolicy = PsdPolicy.SYMMETRIZE) -> PsdRepair:
    """Symmetrize, and with CLIP_EIGENVALUES project negative eigenvalues to zero.

    ``adjustment`` is the Frobenius norm of the change made by clipping.
    """
    policy = PsdPolicy(policy)
    sym = symmetrize(np.asarray(cov, dtype=float))
    if policy is not PsdPolicy.CLIP_EIGENVALUES:
        return PsdRepair(sym, 0.0, 0)
    eigenvalues, vectors = np.linalg.eigh(sym)
    negative = eigenvalues < 0
    if not negative.any():
        return PsdRepair(sym, 0.0, 0)
    repaired = symmetrize((vectors * np.clip(eigenvalues, 0.0, None)) @ vectors.T)
    adjustment = float(np.linalg.norm(repaired - sym, 'fro'))
    logger.debug("clipped %d negative eigenvalues, Frobenius adjustment %.3e", int(negative.sum()), adjustment)
    return PsdRepair(repaired, adjustment, int(negative.sum()))
