"""Parameter and FLOP accounting plus forward-latency measurement.

FLOPs are reported as multiply-add counts for 10 seconds of
input divided by 10 (i.e. per second of input), 2 floating point ops per
multiply-add. The analytic count enumerates exactly the matmuls the forward
pass performs, and can be cross-checked against the engine's instrumented
MAC counter.
"""

from __future__ import annotations

import time

import numpy as np

from . import tensor as T
from .tensor import no_grad

__all__ = ["flops_report", "instrumented_macs", "latency_stats"]


def analytic_macs(config, n_patches):
    """Multiply-add counts per component for one forward pass of L patches."""
    L = n_patches
    D = config.model_dim
    A = config.attn_dim
    H = config.n_heads
    hd = config.head_dim
    P = config.patch_dim
    embed = L * P * D
    attn = config.n_layers * (3 * L * D * A      # Q, K, V projections
                              + 2 * H * L * L * hd  # scores and att @ V
                              + L * A * D)       # output projection
    ffn = config.n_layers * 2 * L * D * (config.ffn_mult * D)
    head = L * D * config.vocab_size
    return {"patch_embedding": embed, "attention": attn, "ffn": ffn,
            "head": head}


def flops_report(config, seconds=10.0, bin_ms=20):
    """Per-second FLOPs using ``seconds`` of input divided by ``seconds``."""
    bins = int(round(seconds * 1000.0 / bin_ms))
    L = min(bins // config.patch_bins, config.max_patches)
    macs = analytic_macs(config, L)
    comps = {k: 2.0 * v / seconds for k, v in macs.items()}
    comps["total"] = sum(comps.values())
    return {"n_patches": L, "macs": macs, "flops_per_second": comps}


def instrumented_macs(model, n_patches):
    """Count MACs actually executed by a forward pass via the engine hook."""
    x = np.zeros((n_patches, model.config.patch_dim))
    T.reset_counters()
    T.counters["count_macs"] = True
    try:
        with no_grad():
            model.forward(x)
    finally:
        T.counters["count_macs"] = False
    return T.counters["macs"]


def latency_stats(model, n_chunks=1000, window_patches=None):
    """Wall-clock forward latency per 100 ms chunk (one patch arrives, the
    causal forward runs on the current window)."""
    Lmax = window_patches or min(model.config.max_patches, 10)
    x = np.zeros((Lmax, model.config.patch_dim))
    times = []
    with no_grad():
        L = 1
        for _ in range(n_chunks):
            t0 = time.perf_counter()
            model.forward(x[:L])
            times.append(time.perf_counter() - t0)
            L = 1 if L >= Lmax else L + 1
    arr = np.asarray(times)
    return {"mean_s": float(arr.mean()), "sd_s": float(arr.std()),
            "n_chunks": len(times), "window_patches": Lmax}
