import numpy as np
import pytest

from streamdec.preprocess import (causal_kernel, causal_smooth, log_zscore,
                                  noise_and_shift)


def test_log_zscore_recompute_oracle(rng):
    block = [rng.gamma(2.0, 1.0, size=(20, 4)) for _ in range(3)]
    out = log_zscore(block)
    cat = np.concatenate([np.log1p(x) for x in block], axis=0)
    mu, sd = cat.mean(axis=0), cat.std(axis=0)
    for x, z in zip(block, out):
        np.testing.assert_allclose(z, (np.log1p(x) - mu) / sd, atol=1e-12)
    zcat = np.concatenate(out, axis=0)
    np.testing.assert_allclose(zcat.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(zcat.std(axis=0), 1.0, atol=1e-12)


def test_log_zscore_zero_variance_channel(rng):
    x = rng.gamma(2.0, 1.0, size=(10, 3))
    x[:, 1] = 5.0
    (z,) = log_zscore([x])
    assert np.all(z[:, 1] == 0.0)
    assert np.all(np.isfinite(z))


def test_log_zscore_empty_block():
    with pytest.raises(ValueError):
        log_zscore([])


def test_causal_kernel_normalized():
    k = causal_kernel(2.0)
    assert abs(k.sum() - 1.0) < 1e-12
    assert np.all(np.diff(k) <= 0)  # decaying into the past
    assert k[0] == k.max()


def test_causal_kernel_invalid_width():
    with pytest.raises(ValueError):
        causal_kernel(0.0)


def test_causal_smooth_convolution_oracle(rng):
    x = rng.normal(size=(30, 2))
    width = 2.0
    k = causal_kernel(width)
    got = causal_smooth(x, width)
    want = np.zeros_like(x)
    for t in range(x.shape[0]):
        lags = np.arange(min(t + 1, len(k)))
        w = k[lags] / k[lags].sum()       # leading-edge renormalization
        want[t] = (w[:, None] * x[t - lags]).sum(axis=0)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_causal_smooth_preserves_constant():
    x = np.full((25, 3), 4.2)
    np.testing.assert_allclose(causal_smooth(x, 2.0), x, atol=1e-12)


def test_causal_smooth_is_causal(rng):
    x = rng.normal(size=(40, 2))
    y = causal_smooth(x, 2.0)
    x2 = x.copy()
    x2[20:] += rng.normal(size=(20, 2))   # perturb the future
    y2 = causal_smooth(x2, 2.0)
    np.testing.assert_array_equal(y[:20], y2[:20])


def test_causal_smooth_linearity(rng):
    a = rng.normal(size=(15, 3))
    b = rng.normal(size=(15, 3))
    lhs = causal_smooth(2.0 * a + b, 1.5)
    rhs = 2.0 * causal_smooth(a, 1.5) + causal_smooth(b, 1.5)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_noise_and_shift_statistics():
    rng = np.random.default_rng(1)
    x = np.zeros((4000, 3))
    y = noise_and_shift(x, white_noise_sd=0.5, offset_sd=0.0, rng=rng)
    assert abs(y.std() - 0.5) < 0.02
    y = noise_and_shift(x, white_noise_sd=0.0, offset_sd=1.0,
                        rng=np.random.default_rng(2))
    # per-channel constant offset
    assert np.all(y.std(axis=0) < 1e-12)
    assert y[0].std() > 0


def test_noise_and_shift_never_aliases_input(rng):
    x = np.ones((5, 2))
    y = noise_and_shift(x, 0.0, 0.0, rng)
    assert y is not x
    np.testing.assert_array_equal(y, x)
