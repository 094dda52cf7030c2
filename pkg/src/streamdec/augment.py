"""Training-time masking augmentations.

Time masking replaces contiguous runs of patches with a learnable mask token;
channel masking zeroes spatially contiguous electrode channels on the 8x8
array grid. Masks are allowed to overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import mask_rows

__all__ = [
    "AugmentConfig", "ArrayLayout", "time_mask", "time_mask_rows",
    "expected_mask_fraction", "channel_mask", "diagnostics",
]

# incremented when a degenerate draw makes a mask a no-op (F == 0)
diagnostics = {"time_mask_noop": 0}


@dataclass
class ArrayLayout:
    """Channel coordinates for one 64-channel 8x8 electrode array."""
    coords: list  # list[(row, col)], one per channel, unique

    def __post_init__(self):
        if len(set(map(tuple, self.coords))) != len(self.coords):
            raise ValueError("ArrayLayout: duplicate channel coordinates")

    @classmethod
    def grid8x8(cls):
        return cls([(r, c) for r in range(8) for c in range(8)])


@dataclass
class AugmentConfig:
    white_noise_sd: float = 0.2
    offset_sd: float = 0.05
    gauss_width: float = 2.0
    input_dropout: float = 0.2
    n_masks: int = 20
    max_mask_frac: float = 0.075
    channel_mask: dict | None = None  # {"n_masks": int, "max_frac": float}

    def __post_init__(self):
        if not 0.0 <= self.input_dropout < 1.0:
            raise ValueError("AugmentConfig: input_dropout outside [0, 1)")
        if not 0.0 < self.max_mask_frac <= 1.0:
            raise ValueError("AugmentConfig: max_mask_frac outside (0, 1]")
        if self.n_masks < 0:
            raise ValueError("AugmentConfig: n_masks must be >= 0")


def time_mask_rows(n_patches, n_masks, max_mask_frac, rng):
    """Draw the boolean row mask for time masking a length-L patch sequence.

    Each of the ``n_masks`` masks picks a length D ~ U{0..F} with
    F = floor(max_mask_frac * L), then a start S ~ U{0..L-D} so the whole
    span lies inside the trial; overlaps are permitted. Sampling the start
    conditioned on the drawn length keeps per-patch coverage nearly uniform,
    so the empirical masked fraction tracks 1-(1-M/2)^N closely.
    Returned mask marks patches to be replaced with the mask token.
    """
    L = int(n_patches)
    if L < 1:
        raise ValueError("time_mask_rows: need at least one patch")
    mask = np.zeros(L, dtype=bool)
    if n_masks == 0:
        return mask
    F = int(np.floor(max_mask_frac * L))
    if F == 0:
        diagnostics["time_mask_noop"] += 1
        return mask
    lengths = rng.integers(0, F + 1, size=n_masks)
    for d in lengths:
        s = int(rng.integers(0, L - d + 1))
        mask[s:s + d] = True
    return mask


def time_mask(patches, n_masks, max_mask_frac, mask_token, rng):
    """Apply time masking to a [L x D] patch Tensor with a learnable token."""
    L = patches.shape[-2]
    row_mask = time_mask_rows(L, n_masks, max_mask_frac, rng)
    if not row_mask.any():
        return patches
    return mask_rows(patches, row_mask, mask_token)


def expected_mask_fraction(n_masks, max_mask_frac):
    """Expected fraction of masked patches, ignoring boundary effects."""
    if n_masks < 0:
        raise ValueError("expected_mask_fraction: n_masks must be >= 0")
    if not 0.0 < max_mask_frac <= 1.0:
        raise ValueError("expected_mask_fraction: max_mask_frac outside (0, 1]")
    return 1.0 - (1.0 - max_mask_frac / 2.0) ** n_masks


def nearest_channels(layout, start, p):
    """Indices of the p channels nearest to ``start`` by Euclidean grid
    distance, ties broken by channel index. Includes ``start`` itself."""
    coords = np.asarray(layout.coords, dtype=np.float64)
    d = np.linalg.norm(coords - coords[start], axis=1)
    order = np.lexsort((np.arange(len(coords)), d))
    return order[:p]


def channel_mask(x, layouts, n_masks, max_frac, rng):
    """Zero spatially contiguous channels, per array, across all time bins."""
    x = np.asarray(x, dtype=np.float64)
    C = x.shape[1]
    per_array = [len(lay.coords) for lay in layouts]
    if sum(per_array) != C:
        raise ValueError(
            f"channel_mask: layouts cover {sum(per_array)} channels, data has {C}")
    out = x.copy()
    offset = 0
    for lay in layouts:
        n_ch = len(lay.coords)
        pmax = int(np.floor(max_frac * n_ch))
        for _ in range(n_masks):
            start = int(rng.integers(0, n_ch))
            p = int(rng.integers(0, pmax + 1))
            if p == 0:
                continue
            idx = nearest_channels(lay, start, p)
            out[:, offset + idx] = 0.0
        offset += n_ch
    return out
