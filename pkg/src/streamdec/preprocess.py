"""Feature preprocessing: log transform, block z-scoring, causal smoothing,
and the white-noise / baseline-shift augmentations."""

from __future__ import annotations

import numpy as np

__all__ = ["log_zscore", "causal_smooth", "causal_kernel", "noise_and_shift"]


def log_zscore(block_features):
    """log1p then per-channel z-score across a whole block of trials.

    ``block_features`` is a non-empty list of [T x C] arrays (one per trial in
    the block). Channels with zero variance come out as all zeros. Returns new
    arrays in the same order.
    """
    if not block_features:
        raise ValueError("log_zscore: empty block")
    logged = [np.log1p(np.asarray(x, dtype=np.float64)) for x in block_features]
    cat = np.concatenate(logged, axis=0)
    mu = cat.mean(axis=0)
    sd = cat.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    out = [(x - mu) / safe for x in logged]
    if np.any(sd == 0):
        dead = sd == 0
        for x in out:
            x[:, dead] = 0.0
    return out


def causal_kernel(width, truncate=4.0):
    """One-sided Gaussian kernel (current bin first), normalized to sum 1."""
    if width <= 0:
        raise ValueError(f"causal_smooth: width must be > 0, got {width}")
    half = int(np.ceil(truncate * width))
    lags = np.arange(half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (lags / width) ** 2)
    return k / k.sum()


def causal_smooth(x, width):
    """Causal Gaussian smoothing along time: bin t uses only bins <= t."""
    x = np.asarray(x, dtype=np.float64)
    k = causal_kernel(width)
    T = x.shape[0]
    out = np.zeros_like(x)
    for lag, w in enumerate(k):
        if lag >= T:
            break
        out[lag:] += w * x[: T - lag]
    # renormalize the leading edge where the kernel is clipped by t=0
    csum = np.cumsum(k)
    norm = csum[np.minimum(np.arange(T), len(k) - 1)]
    return out / norm[:, None]


def noise_and_shift(x, white_noise_sd, offset_sd, rng):
    """i.i.d. Gaussian noise per element plus one constant offset per channel."""
    x = np.asarray(x, dtype=np.float64)
    out = x
    if white_noise_sd > 0:
        out = out + rng.normal(0.0, white_noise_sd, size=x.shape)
    if offset_sd > 0:
        out = out + rng.normal(0.0, offset_sd, size=(1, x.shape[1]))
    return out if out is not x else x.copy()
