"""Training and evaluation driver.

Pipeline per trial: log1p + block z-score (cached), then per step white
noise / baseline shift, causal Gaussian smoothing, patchify, time masking
with the learnable mask token, forward, CTC loss. LR drops by a fixed factor
at one scheduled epoch; the best-validation-PER parameters are retained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .augment import AugmentConfig, time_mask_rows
from .beam import DecodeConfig, prefix_beam_search
from .ctc import ctc_loss, greedy_decode, min_frames
from .metrics import corpus_error_rate
from .model import patchify
from .optim import AdamW
from .preprocess import causal_smooth, log_zscore, noise_and_shift
from .rng import stream
from .tensor import no_grad

__all__ = ["TrainConfig", "preprocess_bundle", "batch_ctc_loss", "train",
           "evaluate", "DivergenceError", "strip_sil"]


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 600
    lr: float = 1e-3
    lr_drop_epoch: int = 400
    lr_drop_factor: float = 10.0
    batch_size: int = 64
    weight_decay: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if not self.lr_drop_epoch < self.epochs:
            raise ValueError("TrainConfig: lr_drop_epoch must be < epochs")


def preprocess_bundle(bundle):
    """log1p + z-score each (session, block); returns {trial_id: [T x C]}.

    Smoothing is applied later (after augmentation at train time, directly at
    eval time)."""
    groups = {}
    for t in bundle.trials:
        groups.setdefault((t.session, t.block), []).append(t)
    out = {}
    for trials in groups.values():
        zs = log_zscore([t.features for t in trials])
        for t, z in zip(trials, zs):
            out[t.trial_id] = z
    return out


def strip_sil(seq, sil_index):
    return [p for p in seq if p != sil_index]


def batch_ctc_loss(model, patch_list, targets, train=False, rng=None,
                   mask_rows_list=None):
    """Mean per-trial CTC loss over a padded batch of patch sequences.

    ``patch_list``: list of [L_i x P] arrays; ``mask_rows_list``: optional
    per-trial boolean time masks (applied with the learnable mask token).
    Returns (loss Tensor, logits Tensor, lengths).
    """
    B = len(patch_list)
    lengths = [p.shape[0] for p in patch_list]
    Lmax = max(lengths)
    P = patch_list[0].shape[1]
    batch = np.zeros((B, Lmax, P))
    bmask = np.zeros((B, Lmax), dtype=bool)
    for i, p in enumerate(patch_list):
        batch[i, : lengths[i]] = p
        if mask_rows_list is not None and mask_rows_list[i] is not None:
            bmask[i, : lengths[i]] = mask_rows_list[i]
    x = T.constant(batch)
    if mask_rows_list is not None:
        # always route through mask_rows so the mask token gets a (possibly
        # zero) gradient even when this batch masks nothing
        x = T.mask_rows(x, bmask, model.mask_token)
    logits = model.forward(x, train=train, rng=rng)
    losses = [ctc_loss(logits[i, : lengths[i]], targets[i]) for i in range(B)]
    total = losses[0]
    for l in losses[1:]:
        total = total + l
    return T.scale(total, 1.0 / B), logits, lengths


def _augmented_patches(z, model, aug: AugmentConfig, rng):
    x = noise_and_shift(z, aug.white_noise_sd, aug.offset_sd, rng)
    x = causal_smooth(x, aug.gauss_width)
    patches = patchify(x, model.config.patch_bins)
    mask = time_mask_rows(patches.shape[0], aug.n_masks, aug.max_mask_frac, rng)
    return patches, mask


def eval_patches(z, model, gauss_width):
    return patchify(causal_smooth(z, gauss_width), model.config.patch_bins)


def _epoch_lr(cfg: TrainConfig, epoch):
    return cfg.lr / cfg.lr_drop_factor if epoch >= cfg.lr_drop_epoch else cfg.lr


def train(model, bundle, cfg: TrainConfig, aug: AugmentConfig,
          train_trials=None, val_trials=None, log_every=1, progress=None):
    """Train in place. Returns (per-epoch log records, best-state dict)."""
    feats = preprocess_bundle(bundle)
    train_trials = train_trials if train_trials is not None \
        else bundle.split_trials("train")
    val_trials = val_trials if val_trials is not None \
        else bundle.split_trials("val")
    sil = bundle.alphabet.sil_index
    opt = AdamW(model.parameter_groups(), lr=cfg.lr,
                weight_decay=cfg.weight_decay)
    # drop trials whose (unmasked) patch count cannot fit the target
    usable = []
    for t in train_trials:
        L = feats[t.trial_id].shape[0] // model.config.patch_bins
        if min_frames(t.phonemes) <= L:
            usable.append(t)
    if not usable:
        raise ValueError("train: no trial satisfies the CTC length bound "
                         "(targets too long for the patch count)")
    logs = []
    best = {"val_per": np.inf, "state": model.copy_state(), "epoch": -1}
    for epoch in range(cfg.epochs):
        opt.lr = _epoch_lr(cfg, epoch)
        order = stream(cfg.seed, "order", epoch).permutation(len(usable))
        losses = []
        for b0 in range(0, len(usable), cfg.batch_size):
            idx = order[b0: b0 + cfg.batch_size]
            patch_list, masks, targets = [], [], []
            for i in idx:
                t = usable[i]
                rng = stream(cfg.seed, "augment", epoch, t.trial_id)
                p, m = _augmented_patches(feats[t.trial_id], model, aug, rng)
                patch_list.append(p)
                masks.append(m)
                targets.append(t.phonemes)
            drng = stream(cfg.seed, "dropout", epoch, b0)
            loss, _, _ = batch_ctc_loss(model, patch_list, targets,
                                        train=True, rng=drng,
                                        mask_rows_list=masks)
            if not np.isfinite(loss.item()):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}")
            model.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        rec = {"epoch": epoch, "lr": opt.lr,
               "train_loss": float(np.mean(losses))}
        if val_trials and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            val_loss, val_per = evaluate_greedy(model, bundle, feats,
                                                val_trials, aug.gauss_width)
            rec.update(val_loss=val_loss, val_per=val_per)
            if val_per < best["val_per"]:
                best = {"val_per": val_per, "state": model.copy_state(),
                        "epoch": epoch}
        logs.append(rec)
        if progress:
            progress(rec)
    return logs, best


def evaluate_greedy(model, bundle, feats, trials, gauss_width):
    """(mean CTC loss, PER) with greedy decoding, no augmentation."""
    sil = bundle.alphabet.sil_index
    losses, pairs = [], []
    with no_grad():
        for b0 in range(0, len(trials), 64):
            chunk = trials[b0: b0 + 64]
            patch_list = [eval_patches(feats[t.trial_id], model, gauss_width)
                          for t in chunk]
            targets = [t.phonemes for t in chunk]
            ok = [i for i, (p, tg) in enumerate(zip(patch_list, targets))
                  if min_frames(tg) <= p.shape[0]]
            if not ok:
                continue
            loss, logits, lengths = batch_ctc_loss(
                model, [patch_list[i] for i in ok], [targets[i] for i in ok])
            losses.append(loss.item())
            for j, i in enumerate(ok):
                hyp = greedy_decode(logits.data[j, : lengths[j]])
                pairs.append((strip_sil(targets[i], sil), strip_sil(hyp, sil)))
    if not pairs:
        return float("inf"), float("inf")
    per = corpus_error_rate(pairs)
    return float(np.mean(losses)), per.rate


def evaluate(model, bundle, trials, decode_cfg: DecodeConfig, lm,
             gauss_width=2.0, feats=None):
    """Full evaluation: beam WER, greedy PER, S/D/I, per-trial records."""
    feats = feats or preprocess_bundle(bundle)
    sil = bundle.alphabet.sil_index
    records, word_pairs, phon_pairs = [], [], []
    with no_grad():
        for t in trials:
            patches = eval_patches(feats[t.trial_id], model, gauss_width)
            logits = model.forward(patches).data
            hyps = prefix_beam_search(logits, lm, bundle.lexicon, decode_cfg)
            top = hyps[0]
            greedy = greedy_decode(logits)
            ref_words = t.text.split()
            word_pairs.append((ref_words, list(top.words)))
            phon_pairs.append((strip_sil(t.phonemes, sil),
                               strip_sil(greedy, sil)))
            records.append({
                "trial_id": t.trial_id, "session": t.session,
                "text": top.text, "ref_text": t.text,
                "phonemes": list(top.phonemes),
                "enc_logprob": top.enc_logprob, "lm_logprob": top.lm_logprob,
                "score": top.score,
            })
    wer = corpus_error_rate(word_pairs)
    per = corpus_error_rate(phon_pairs)
    summary = {
        "wer": wer.rate, "per": per.rate,
        "word_S": wer.S, "word_D": wer.D, "word_I": wer.I, "word_N": wer.n_ref,
        "phoneme_S": per.S, "phoneme_D": per.D, "phoneme_I": per.I,
        "phoneme_N": per.n_ref,
    }
    return summary, records, word_pairs, phon_pairs
