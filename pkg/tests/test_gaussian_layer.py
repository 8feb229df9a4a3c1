import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentflow.moments.gaussian_layer import (
    AffineLayer, CovFactory, FactorizedGaussianAffine, GaussianMoments, PsdPolicy, affine_propagate,
    conv2d_as_matrix, conv2d_output_shape, dvi_affine_propagate, psd_repair, random_covariance,
)
from momentflow.utils.errors import DomainError


def naive_conv(x, kernel, stride, padding):
    """Direct cross-correlation of an (h, w, c) array"""
    out_ch, in_ch, kh, kw = kernel.shape
    h, w, _ = x.shape
    if padding == 'same':
        oh, ow = math.ceil(h / stride), math.ceil(w / stride)
        pad_h = max((oh - 1) * stride + kh - h, 0)
        pad_w = max((ow - 1) * stride + kw - w, 0)
        x = np.pad(x, ((pad_h // 2, pad_h - pad_h // 2), (pad_w // 2, pad_w - pad_w // 2), (0, 0)))
    else:
        oh, ow = (h - kh) // stride + 1, (w - kw) // stride + 1
    out = np.zeros((oh, ow, out_ch))
    for i in range(oh):
        for j in range(ow):
            patch = x[i * stride:i * stride + kh, j * stride:j * stride + kw, :]
            for o in range(out_ch):
                out[i, j, o] = np.sum(patch * kernel[o].transpose(1, 2, 0))
    return out


def test_affine_propagate_mean_and_cov():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(3)
    moments = GaussianMoments(rng.standard_normal(4), random_covariance(CovFactory(1, 4)))
    out = affine_propagate(AffineLayer(w, b), moments)
    assert np.allclose(out.mean, w @ moments.mean + b)
    assert np.allclose(out.cov, w @ moments.cov @ w.T)


def test_affine_dimension_mismatch():
    moments = GaussianMoments.from_diagonal(np.zeros(3), np.ones(3))
    with pytest.raises(DomainError):
        affine_propagate(AffineLayer(np.ones((2, 4)), np.zeros(2)), moments)


def test_dvi_with_zero_variances_reduces_to_affine():
    rng = np.random.default_rng(42)
    for trial in range(100):
        n_in, n_out = rng.integers(1, 8, size=2)
        wm = rng.standard_normal((n_out, n_in))
        bm = rng.standard_normal(n_out)
        moments = GaussianMoments(rng.standard_normal(n_in), random_covariance(CovFactory(trial, int(n_in))))
        exact = affine_propagate(AffineLayer(wm, bm), moments)
        dvi = dvi_affine_propagate(
            FactorizedGaussianAffine(wm, np.zeros_like(wm), bm, np.zeros_like(bm)), moments
        )
        assert np.max(np.abs(dvi.mean - exact.mean)) <= 1e-12
        assert np.max(np.abs(dvi.cov - exact.cov)) <= 1e-12


def test_dvi_adds_parameter_variance_on_diagonal():
    moments = GaussianMoments(np.array([1.0, 2.0]), np.array([[1.0, 0.5], [0.5, 2.0]]))
    wm = np.array([[1.0, -1.0]])
    wv = np.array([[0.1, 0.2]])
    out = dvi_affine_propagate(FactorizedGaussianAffine(wm, wv, np.zeros(1), np.array([0.3])), moments)
    base = 1.0 + 2.0 - 2 * 0.5
    extra = 0.1 * (1.0 + 1.0) + 0.2 * (2.0 + 4.0) + 0.3
    assert out.cov[0, 0] == pytest.approx(base + extra)
    with pytest.raises(DomainError):
        FactorizedGaussianAffine(wm, -wv, np.zeros(1), np.zeros(1))


@pytest.mark.parametrize('stride,padding', [(1, 'same'), (2, 'same'), (1, 'valid'), (2, 'valid'), (3, 'same')])
def test_conv_lowering_matches_direct_convolution(stride, padding):
    rng = np.random.default_rng(stride)
    kernel = rng.standard_normal((4, 2, 3, 3))
    bias = rng.standard_normal(4)
    x = rng.standard_normal((7, 6, 2))
    layer = conv2d_as_matrix(kernel, stride, padding, x.shape, bias)
    expected = naive_conv(x, kernel, stride, padding) + bias
    assert layer.out_dim == expected.size
    assert np.allclose(layer.weight @ x.ravel() + layer.bias, expected.ravel())


def test_conv_same_padding_keeps_shape():
    assert conv2d_output_shape((10, 1, 3, 3), 1, 'same', (20, 20, 1)) == (20, 20, 10)
    assert conv2d_output_shape((10, 10, 3, 3), 2, 'same', (20, 20, 10)) == (10, 10, 10)


def test_conv_lowering_respects_element_budget():
    with pytest.raises(DomainError):
        conv2d_as_matrix(np.ones((10, 1, 3, 3)), 1, 'same', (20, 20, 1), element_budget=1000)


def test_conv_rejects_channel_mismatch_and_bad_padding():
    with pytest.raises(DomainError):
        conv2d_output_shape((2, 3, 3, 3), 1, 'same', (5, 5, 1))
    with pytest.raises(DomainError):
        conv2d_output_shape((2, 1, 3, 3), 1, 'full', (5, 5, 1))


def test_gaussian_moments_validation():
    with pytest.raises(DomainError):
        GaussianMoments(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(DomainError):
        GaussianMoments(np.zeros(2), np.eye(3))
    with pytest.raises(DomainError):
        GaussianMoments(np.zeros(2), np.diag([1.0, -1.0]))
    moments = GaussianMoments(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        moments.cov[0, 0] = 5.0


def test_random_covariance_is_seeded_psd_with_max_variance():
    factory = CovFactory(seed=9, n=12, max_variance=2.5)
    a = random_covariance(factory)
    b = random_covariance(factory)
    assert np.array_equal(a, b)
    assert np.array_equal(a, a.T)
    assert np.linalg.eigvalsh(a).min() > 0
    assert np.max(np.diag(a)) == pytest.approx(2.5)


def test_psd_repair_clips_negative_eigenvalues():
    cov = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
    assert np.linalg.eigvalsh(cov).min() < 0
    repaired = psd_repair(cov, PsdPolicy.CLIP_EIGENVALUES)
    assert np.linalg.eigvalsh(repaired.matrix).min() >= -1e-12
    assert repaired.adjustment > 0
    assert repaired.clipped == 1
    untouched = psd_repair(np.eye(3), PsdPolicy.CLIP_EIGENVALUES)
    assert np.array_equal(untouched.matrix, np.eye(3))
    assert untouched.adjustment == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10_000),
       st.floats(min_value=0.1, max_value=5.0))
def test_affine_chains_scale_covariance_quadratically(n, seed, c):
    rng = np.random.default_rng(seed)
    layers = [AffineLayer(rng.standard_normal((n, n)), rng.standard_normal(n)) for _ in range(3)]
    moments = GaussianMoments(rng.standard_normal(n), random_covariance(CovFactory(seed, n)))
    base, scaled = moments, moments.scaled(c * c)
    for layer in layers:
        base = affine_propagate(layer, base)
        scaled = affine_propagate(layer, scaled)
    assert np.allclose(scaled.cov, c * c * base.cov, rtol=1e-9, atol=1e-12)
    assert np.allclose(scaled.mean, base.mean)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=10_000))
def test_affine_propagation_preserves_psd(n, seed):
    rng = np.random.default_rng(seed)
    moments = GaussianMoments(np.zeros(n), random_covariance(CovFactory(seed, n)))
    out = affine_propagate(AffineLayer(rng.standard_normal((n + 2, n)), np.zeros(n + 2)), moments)
    scale = max(1.0, np.max(np.abs(out.cov)))
    assert np.linalg.eigvalsh(out.cov).min() >= -1e-10 * scale
