"""Connectionist temporal classification.

``ctc_loss`` runs the log-space forward DP over the blank-augmented label
sequence through the autodiff graph, so the backward pass comes from the
tensor engine. ``ctc_brute`` enumerates every label path and is the test
oracle.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = ["ctc_loss", "ctc_brute", "greedy_decode", "collapse",
           "InfeasibleTargetError", "min_frames"]


class InfeasibleTargetError(ValueError):
    """Target cannot be emitted in the given number of frames."""


def min_frames(target):
    """Minimum logit frames needed: length plus adjacent repeats."""
    reps = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + reps


def ctc_loss(logits, target, blank=None):
    """Negative log probability of ``target`` under the CTC alignment model.

    logits: Tensor or array [L x V]; target: list of label indices (blank
    excluded). Differentiable w.r.t. logits (and anything upstream).
    """
    x = logits if isinstance(logits, Tensor) else T.constant(logits)
    L, V = x.shape
    if blank is None:
        blank = V - 1
    target = list(target)
    if any(t == blank for t in target):
        raise InfeasibleTargetError("target contains the blank index")
    if any(not 0 <= t < V for t in target):
        raise InfeasibleTargetError("target index out of vocabulary range")
    if min_frames(target) > L:
        raise InfeasibleTargetError(
            f"target needs {min_frames(target)} frames, only {L} available")

    logp = T.log_softmax(x)                       # [L, V]
    aug = [blank]
    for t in target:
        aug += [t, blank]
    S = len(aug)
    lpa = T.take_last(logp, np.asarray(aug))      # [L, S]

    ninf = -np.inf
    init = np.full(S, ninf)
    init[0] = 0.0
    if S > 1:
        init[1] = 0.0
    # skip transition s-2 -> s allowed when labels differ and s is a label
    skip_ok = np.full(S, ninf)
    for s in range(2, S):
        if aug[s] != blank and aug[s] != aug[s - 2]:
            skip_ok[s] = 0.0

    shift1 = np.full(1, ninf)
    alpha = lpa[0] + T.constant(init)
    for t in range(1, L):
        a1 = T.concat([T.constant(shift1), alpha[: S - 1]])
        stay = T.logaddexp(alpha, a1)
        if S > 2:
            a2 = T.concat([T.constant(np.full(2, ninf)), alpha[: S - 2]])
            stay = T.logaddexp(stay, a2 + T.constant(skip_ok))
        alpha = stay + lpa[t]
    if S > 1:
        total = T.logaddexp(alpha[S - 1], alpha[S - 2])
    else:
        total = alpha[0]
    return T.neg(total)


def collapse(path, blank):
    """Collapse a frame-level label path: merge adjacent repeats, drop blanks."""
    out, prev = [], None
    for s in path:
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return out


def ctc_brute(logits, target, blank=None, limit=10 ** 6):
    """Exact CTC loss by enumerating all V^L label paths (test oracle)."""
    x = np.asarray(logits.data if isinstance(logits, Tensor) else logits,
                   dtype=np.float64)
    L, V = x.shape
    if blank is None:
        blank = V - 1
    if V ** L > limit:
        raise ValueError(f"ctc_brute: {V}**{L} paths exceeds limit {limit}")
    m = x.max(axis=1, keepdims=True)
    p = np.exp(x - m)
    p /= p.sum(axis=1, keepdims=True)
    target = list(target)
    total = 0.0
    for path in itertools.product(range(V), repeat=L):
        if collapse(path, blank) == target:
            prob = 1.0
            for t, s in enumerate(path):
                prob *= p[t, s]
            total += prob
    if total == 0.0:
        raise InfeasibleTargetError("no path collapses to the target")
    return -float(np.log(total))


def greedy_decode(logits, blank=None):
    """Per-frame argmax, collapse repeats, drop blanks."""
    x = np.asarray(logits.data if isinstance(logits, Tensor) else logits,
                   dtype=np.float64)
    if blank is None:
        blank = x.shape[1] - 1
    return collapse(x.argmax(axis=1).tolist(), blank)
