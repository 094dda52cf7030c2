"""Single-step test-time adaptation with LM-refined pseudo-labels.

Per trial: decode with the current weights (that decode is the reported
output and the pseudo-label), then take exactly one AdamW step on the mean
CTC loss over Z augmented copies of the trial, updating only the patch
embedding parameter group. Weights and optimizer moments carry across trials
and sessions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, time_mask_rows
from .beam import DecodeConfig, prefix_beam_search, decode_diagnostics
from .ctc import min_frames
from .model import patchify
from .optim import AdamW
from .preprocess import causal_smooth, noise_and_shift
from .rng import stream
from .tensor import no_grad
from .train import batch_ctc_loss, preprocess_bundle

__all__ = ["AdaptConfig", "pseudo_label", "dietcorp_step", "adapt_session",
           "make_adapt_optimizer"]


@dataclass
class AdaptConfig:
    n_augment: int = 64              # Z: copies per trial (training batch size)
    learning_rate: float = 1e-3      # pre-schedule training LR
    trainable_group: str = "embedding"
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_augment < 1:
            raise ValueError("AdaptConfig: n_augment must be >= 1")


def make_adapt_optimizer(model, cfg: AdaptConfig):
    groups = model.parameter_groups()
    names = {g.name for g in groups}
    if cfg.trainable_group not in names:
        raise ValueError(f"AdaptConfig: unknown group '{cfg.trainable_group}'")
    for g in groups:
        g.trainable = g.name == cfg.trainable_group
    return AdamW(groups, lr=cfg.learning_rate, weight_decay=0.0)


def pseudo_label(model, smoothed_features, lm, lexicon, decode_cfg):
    """Decode in evaluation mode; the top beam's phoneme sequence (SIL
    boundaries included) is the adaptation target. Returns (phonemes, beam)."""
    patches = patchify(smoothed_features, model.config.patch_bins)
    with no_grad():
        logits = model.forward(patches).data
    hyps = prefix_beam_search(logits, lm, lexicon, decode_cfg)
    top = hyps[0]
    return list(top.phonemes), top


def dietcorp_step(model, optimizer, smoothed_features, label, cfg: AdaptConfig,
                  trial_tag=0):
    """One optimizer step on the mean CTC loss over Z augmented copies.

    The copies get white noise, baseline shift, and time masking (smoothing
    was already applied as preprocessing). Non-embedding parameters are left
    bit-identical. Returns a report dict."""
    report = {"skipped": False, "reason": None, "loss": None,
              "embedding_delta": 0.0}
    patch_bins = model.config.patch_bins
    L = smoothed_features.shape[0] // patch_bins
    if not label or min_frames(label) > L:
        report.update(skipped=True, reason="infeasible_label")
        return report
    aug = cfg.augment
    patch_list, masks = [], []
    for z in range(cfg.n_augment):
        rng = stream(cfg.seed, "adapt", trial_tag, z)
        x = noise_and_shift(smoothed_features, aug.white_noise_sd,
                            aug.offset_sd, rng)
        p = patchify(x, patch_bins)
        patch_list.append(p)
        masks.append(time_mask_rows(L, aug.n_masks, aug.max_mask_frac, rng))
    drng = stream(cfg.seed, "adapt-dropout", trial_tag)
    loss, _, _ = batch_ctc_loss(model, patch_list, [label] * cfg.n_augment,
                                train=True, rng=drng, mask_rows_list=masks)
    loss_val = loss.item()
    report["loss"] = loss_val
    if not np.isfinite(loss_val):
        report.update(skipped=True, reason="non_finite_loss")
        return report
    before = {k: p.data.copy() for k, p in model.params.items()
              if model.group_of(k) == cfg.trainable_group}
    model.zero_grad()
    loss.backward()
    optimizer.step()
    delta = 0.0
    for k, old in before.items():
        d = model.params[k].data - old
        delta += float(np.dot(d.ravel(), d.ravel()))
    report["embedding_delta"] = float(np.sqrt(delta))
    return report


def adapt_session(model, bundle, trials, lm, cfg: AdaptConfig, optimizer=None,
                  feats=None):
    """Continuous adaptation over time-ordered trials.

    Each trial is decoded with the weights as they stand (this decode is the
    reported output), then adapted on its own pseudo-label. Weights and
    optimizer state carry over. Returns (per-trial reports, optimizer)."""
    if optimizer is None:
        optimizer = make_adapt_optimizer(model, cfg)
    feats = feats if feats is not None else preprocess_bundle(bundle)
    width = cfg.augment.gauss_width
    reports = []
    for t in trials:
        smoothed = causal_smooth(feats[t.trial_id], width)
        label, top = pseudo_label(model, smoothed, lm, bundle.lexicon,
                                  cfg.decode)
        if not label:
            decode_diagnostics["empty_pseudo_labels"] += 1
            reports.append({"trial_id": t.trial_id, "session": t.session,
                            "text": top.text, "pseudo_label": "",
                            "skipped": True, "reason": "empty_decode",
                            "loss": None, "embedding_delta": 0.0})
            continue
        rep = dietcorp_step(model, optimizer, smoothed, label, cfg,
                            trial_tag=t.trial_id)
        rep.update(trial_id=t.trial_id, session=t.session, text=top.text,
                   pseudo_label=top.text)
        reports.append(rep)
    return reports, optimizer
