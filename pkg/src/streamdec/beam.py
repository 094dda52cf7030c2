"""Lexicon-constrained CTC prefix beam search with n-gram LM fusion.

Hypotheses extend phoneme-by-phoneme along the pronunciation trie; emitting
SIL closes the pending phonemes into a word (homophones fork) and adds that
word's LM increment. Scores combine the encoder and LM log probabilities as
alpha * log P_enc + log P_lm, with a constant penalty subtracted from the
blank log probability before use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DecodeConfig", "Beam", "StreamingDecoder", "prefix_beam_search",
           "rescore", "decode_diagnostics"]

NEG_INF = float("-inf")

decode_diagnostics = {"pruned_non_lexical": 0, "rescore_failures": 0,
                      "empty_pseudo_labels": 0}


@dataclass
class DecodeConfig:
    beam_size: int = 18
    alpha: float = 0.8
    blank_penalty: float = float(np.log(2.0))   # log(7) for the offline setup
    top_k: int = 100
    beta: float = 0.5

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("DecodeConfig: beam_size must be >= 1")
        if self.alpha < 0:
            raise ValueError("DecodeConfig: alpha must be >= 0")
        if self.top_k < 1:
            raise ValueError("DecodeConfig: top_k must be >= 1")


@dataclass
class Beam:
    """A finalized hypothesis."""
    text: str
    words: tuple
    phonemes: tuple
    enc_logprob: float
    lm_logprob: float
    score: float


class _Hyp:
    __slots__ = ("words", "pending", "p_b", "p_nb", "lm")

    def __init__(self, words, pending, p_b, p_nb, lm):
        self.words = words
        self.pending = pending
        self.p_b = p_b
        self.p_nb = p_nb
        self.lm = lm

    @property
    def total(self):
        return np.logaddexp(self.p_b, self.p_nb)

    def last(self, sil):
        if self.pending:
            return self.pending[-1]
        return sil if self.words else None


def _lm_word(lm, history, word):
    return lm.logprob_word(list(history), word)


class StreamingDecoder:
    """Incremental prefix beam search over logit chunks.

    Feeding the first t frames leaves the decoder in exactly the state a
    whole-utterance search over those t frames would reach, so earlier output
    may be revised as more frames arrive.
    """

    def __init__(self, lm, lexicon, config=None):
        self.lm = lm
        self.lex = lexicon
        self.cfg = config or DecodeConfig()
        self.alphabet = lexicon.alphabet
        self.frames_seen = 0
        self._frontier = {((), ()): _Hyp((), (), 0.0, NEG_INF, 0.0)}

    # ------------------------------------------------------------------
    def push(self, logits, start_frame=None):
        """Consume a [n x V] chunk of logits (time order). ``start_frame``
        must equal the number of frames already consumed when provided."""
        logits = np.asarray(logits, dtype=np.float64)
        if logits.ndim != 2:
            raise ValueError("push: logits chunk must be [frames x vocab]")
        if start_frame is not None and start_frame != self.frames_seen:
            raise ValueError(
                f"push: out-of-order chunk (expected frame {self.frames_seen}, "
                f"got {start_frame})")
        for row in logits:
            self._step(row)
            self.frames_seen += 1
        return self.best()

    def _step(self, logit_row):
        cfg, lex, sil = self.cfg, self.lex, self.alphabet.sil_index
        blank = self.alphabet.blank_index
        m = logit_row.max()
        lp = logit_row - (m + np.log(np.exp(logit_row - m).sum()))
        lp_blank = lp[blank] - cfg.blank_penalty

        nxt = {}

        def emit(words, pending, lm, p_b=NEG_INF, p_nb=NEG_INF):
            key = (words, pending)
            h = nxt.get(key)
            if h is None:
                nxt[key] = _Hyp(words, pending, p_b, p_nb, lm)
            else:
                h.p_b = np.logaddexp(h.p_b, p_b)
                h.p_nb = np.logaddexp(h.p_nb, p_nb)

        for h in self._frontier.values():
            tot = h.total
            last = h.last(sil)
            # blank keeps the prefix, ends in blank
            emit(h.words, h.pending, h.lm, p_b=tot + lp_blank)
            # repeated last symbol collapses onto the same prefix
            if last is not None:
                emit(h.words, h.pending, h.lm, p_nb=h.p_nb + lp[last])
            # extend the pending pronunciation along the trie
            for c in lex.next_phonemes(h.pending):
                base = h.p_b if c == last else tot
                if base == NEG_INF:
                    continue
                emit(h.words, h.pending + (c,), h.lm, p_nb=base + lp[c])
            # SIL closes a complete pronunciation into a word
            if h.pending:
                for word in lex.words_for(h.pending):
                    emit(h.words + (word,), (),
                         h.lm + _lm_word(self.lm, h.words, word),
                         p_nb=tot + lp[sil])

        ranked = sorted(nxt.values(),
                        key=lambda h: cfg.alpha * h.total + h.lm, reverse=True)
        ranked = ranked[: cfg.beam_size]
        self._frontier = {(h.words, h.pending): h for h in ranked}

    # ------------------------------------------------------------------
    def _finalize_one(self, h):
        """Final hypotheses for one frontier entry (homophones fork)."""
        cfg, lex, sil = self.cfg, self.lex, self.alphabet.sil_index
        tot = h.total
        outs = []

        def mk(words, lm, pending):
            phon = []
            for w in words:
                phon.extend(lex.pronounce(w))
                phon.append(sil)
            # a word closed by end-of-utterance has no trailing SIL emitted
            if pending == "closed":
                phon = phon[:-1]
                pend = ()
            else:
                pend = tuple(pending)
            phon.extend(pend)
            lm_total = lm + self.lm.logprob_word(list(words), "</s>")
            score = cfg.alpha * tot + lm_total
            return Beam(text=" ".join(words), words=tuple(words),
                        phonemes=tuple(phon), enc_logprob=tot,
                        lm_logprob=lm_total, score=score)

        closing = lex.words_for(h.pending) if h.pending else []
        if closing:
            for word in closing:
                outs.append(mk(h.words + (word,),
                               h.lm + _lm_word(self.lm, h.words, word), "closed"))
        else:
            outs.append(mk(h.words, h.lm, h.pending))
        return outs

    def hypotheses(self):
        """Current finalized hypotheses, best combined score first."""
        outs = []
        for h in self._frontier.values():
            outs.extend(self._finalize_one(h))
        outs.sort(key=lambda b: b.score, reverse=True)
        return outs

    def best(self):
        hyps = self.hypotheses()
        return hyps[0] if hyps else Beam("", (), (), 0.0, 0.0, 0.0)


def prefix_beam_search(logits, lm, lexicon, config=None):
    """Decode a whole utterance. Returns hypotheses best-first; empty logits
    yield a single empty hypothesis with score 0."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        return [Beam("", (), (), 0.0, 0.0, 0.0)]
    dec = StreamingDecoder(lm, lexicon, config)
    dec.push(logits)
    return dec.hypotheses()


def rescore(beams, external_scorer, config):
    """Second-pass rescoring: alpha*enc + beta*lm + (1-beta)*external.

    Stable: ties keep first-pass order. A scorer failure leaves that beam at
    its first-pass score and is counted in decode_diagnostics.
    """
    cfg = config
    rescored = []
    for b in beams[: cfg.top_k]:
        try:
            ext = float(external_scorer(b.text))
            score = cfg.alpha * b.enc_logprob + cfg.beta * b.lm_logprob \
                + (1.0 - cfg.beta) * ext
        except Exception:
            decode_diagnostics["rescore_failures"] += 1
            score = b.score
        rescored.append(Beam(b.text, b.words, b.phonemes, b.enc_logprob,
                             b.lm_logprob, score))
    rescored.sort(key=lambda b: b.score, reverse=True)
    return rescored
