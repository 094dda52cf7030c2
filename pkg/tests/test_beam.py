import itertools
from collections import defaultdict

import numpy as np
import pytest

from streamdec.beam import (Beam, DecodeConfig, StreamingDecoder,
                            decode_diagnostics, prefix_beam_search, rescore)
from streamdec.ctc import collapse
from streamdec.lexicon import EOS


def exhaustive_oracle(logits, lm, lex, alpha, blank_penalty):
    """Enumerate every frame path, pool encoder mass per collapsed phoneme
    sequence, parse against the lexicon, and maximize alpha*enc + lm."""
    alphabet = lex.alphabet
    sil, blank = alphabet.sil_index, alphabet.blank_index
    V = alphabet.vocab_size
    L = logits.shape[0]
    m = logits.max(1, keepdims=True)
    lp = logits - (m + np.log(np.exp(logits - m).sum(1, keepdims=True)))
    lp = lp.copy()
    lp[:, blank] -= blank_penalty

    mass = defaultdict(lambda: -np.inf)
    for path in itertools.product(range(V), repeat=L):
        seq = tuple(collapse(list(path), blank))
        s = sum(lp[t, p] for t, p in enumerate(path))
        mass[seq] = np.logaddexp(mass[seq], s)

    best = None
    for seq, enc in mass.items():
        segs, cur = [], []
        for p in seq:
            if p == sil:
                segs.append(tuple(cur))
                cur = []
            else:
                cur.append(p)
        last = tuple(cur)
        if any(len(s) == 0 for s in segs):
            continue
        word_options = []
        ok = True
        for s in segs:
            ws = lex.words_for(s)
            if not ws:
                ok = False
                break
            word_options.append(ws)
        if not ok:
            continue
        if last == ():
            tail_choices = [[]]
        else:
            ws = lex.words_for(last)
            if ws:
                tail_choices = [[w] for w in ws]
            elif lex.is_prefix(last):
                tail_choices = [[]]   # incomplete pending pronunciation
            else:
                continue
        for combo in (itertools.product(*word_options) if word_options else [()]):
            for tail in tail_choices:
                words = list(combo) + list(tail)
                lm_score, hist = 0.0, []
                for w in words:
                    lm_score += lm.logprob_word(hist, w)
                    hist.append(w)
                lm_score += lm.logprob_word(hist, EOS)
                score = alpha * enc + lm_score
                if best is None or score > best[0]:
                    best = (score, words)
    return best


def test_beam_matches_exhaustive_oracle(tiny_lm, tiny_lexicon, rng):
    cfg = DecodeConfig(beam_size=10000, alpha=0.8, blank_penalty=np.log(2.0))
    V = tiny_lexicon.alphabet.vocab_size
    for _ in range(30):
        logits = rng.normal(0, 2, size=(6, V))
        got = prefix_beam_search(logits, tiny_lm, tiny_lexicon, cfg)[0]
        want_score, want_words = exhaustive_oracle(
            logits, tiny_lm, tiny_lexicon, cfg.alpha, cfg.blank_penalty)
        assert abs(got.score - want_score) < 1e-9
        assert list(got.words) == want_words


def test_streaming_equals_whole_utterance(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    logits = rng.normal(0, 2, size=(10, V))
    cfg = DecodeConfig(beam_size=8)
    whole = prefix_beam_search(logits, tiny_lm, tiny_lexicon, cfg)
    dec = StreamingDecoder(tiny_lm, tiny_lexicon, cfg)
    dec.push(logits[:4])
    dec.push(logits[4:7], start_frame=4)
    dec.push(logits[7:])
    chunked = dec.hypotheses()
    assert [(b.score, b.words) for b in whole] == \
           [(b.score, b.words) for b in chunked]


def test_out_of_order_chunk_rejected(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    dec = StreamingDecoder(tiny_lm, tiny_lexicon)
    dec.push(rng.normal(size=(3, V)))
    with pytest.raises(ValueError):
        dec.push(rng.normal(size=(2, V)), start_frame=7)


def test_blank_penalty_one_is_identity(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    logits = rng.normal(0, 2, size=(8, V))
    a = prefix_beam_search(logits, tiny_lm, tiny_lexicon,
                           DecodeConfig(blank_penalty=np.log(1.0)))
    b = prefix_beam_search(logits, tiny_lm, tiny_lexicon,
                           DecodeConfig(blank_penalty=0.0))
    assert [(x.score, x.words) for x in a] == [(x.score, x.words) for x in b]


def test_larger_blank_penalty_discourages_blank(tiny_lm, tiny_lexicon):
    # logits strongly favor blank; a huge penalty should change the winner
    V = tiny_lexicon.alphabet.vocab_size
    logits = np.full((4, V), -5.0)
    logits[:, tiny_lexicon.alphabet.blank_index] = 2.0
    logits[:, 0] = 1.5
    soft = prefix_beam_search(logits, tiny_lm, tiny_lexicon,
                              DecodeConfig(blank_penalty=0.0))[0]
    hard = prefix_beam_search(logits, tiny_lm, tiny_lexicon,
                              DecodeConfig(blank_penalty=20.0))[0]
    assert soft.enc_logprob >= hard.enc_logprob or soft.words != hard.words
    assert hard.words != ()


def test_beam_size_monotone_in_best_score(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    for _ in range(10):
        logits = rng.normal(0, 2, size=(7, V))
        scores = []
        for bs in (1, 4, 16, 256):
            top = prefix_beam_search(logits, tiny_lm, tiny_lexicon,
                                     DecodeConfig(beam_size=bs))[0]
            scores.append(top.score)
        assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))


def test_score_decomposition(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    logits = rng.normal(0, 2, size=(6, V))
    cfg = DecodeConfig(alpha=0.8)
    for b in prefix_beam_search(logits, tiny_lm, tiny_lexicon, cfg):
        assert abs(b.score - (cfg.alpha * b.enc_logprob + b.lm_logprob)) < 1e-12
        # lm term includes the sentence-end probability
        want_lm = 0.0
        hist = []
        for w in b.words:
            want_lm += tiny_lm.logprob_word(hist, w)
            hist.append(w)
        want_lm += tiny_lm.logprob_word(hist, EOS)
        assert abs(b.lm_logprob - want_lm) < 1e-12


def test_empty_logits(tiny_lm, tiny_lexicon):
    hyps = prefix_beam_search(np.zeros((0, 5)), tiny_lm, tiny_lexicon)
    assert len(hyps) == 1
    assert hyps[0].words == () and hyps[0].score == 0.0


def test_decode_config_validation():
    with pytest.raises(ValueError):
        DecodeConfig(beam_size=0)
    with pytest.raises(ValueError):
        DecodeConfig(alpha=-0.1)
    with pytest.raises(ValueError):
        DecodeConfig(top_k=0)


def test_rescore_beta_identities(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    logits = rng.normal(0, 2, size=(6, V))
    beams = prefix_beam_search(logits, tiny_lm, tiny_lexicon)
    # beta=1: external scorer has zero weight
    out = rescore(beams, lambda text: 123.0, DecodeConfig(beta=1.0))
    for o in out:
        assert abs(o.score - (0.8 * o.enc_logprob + o.lm_logprob)) < 1e-12
    # beta=0: LM term fully replaced by the external scorer
    out = rescore(beams, lambda text: -1.0, DecodeConfig(beta=0.0))
    for o in out:
        assert abs(o.score - (0.8 * o.enc_logprob - 1.0)) < 1e-12


def test_rescore_failure_keeps_first_pass_score(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    logits = rng.normal(0, 2, size=(5, V))
    beams = prefix_beam_search(logits, tiny_lm, tiny_lexicon)

    def broken(text):
        raise RuntimeError("scorer down")

    before = decode_diagnostics["rescore_failures"]
    out = rescore(beams, broken, DecodeConfig())
    assert decode_diagnostics["rescore_failures"] == before + len(out)
    assert sorted(b.score for b in out) == sorted(b.score for b in beams[:100])


def test_rescore_respects_top_k(tiny_lm, tiny_lexicon, rng):
    V = tiny_lexicon.alphabet.vocab_size
    logits = rng.normal(0, 2, size=(6, V))
    beams = prefix_beam_search(logits, tiny_lm, tiny_lexicon,
                               DecodeConfig(beam_size=32))
    out = rescore(beams, lambda t: 0.0, DecodeConfig(top_k=3))
    assert len(out) == min(3, len(beams))


def test_homophones_fork_with_lm_disambiguation(tiny_alphabet, rng):
    from streamdec.lexicon import Lexicon
    from streamdec.ngram import train_lm
    lex = Lexicon({"son": [0, 1], "sun": [0, 1]}, tiny_alphabet)
    lm = train_lm([["sun"], ["sun"], ["sun"], ["son"]], order=2)
    sil = tiny_alphabet.sil_index
    V = tiny_alphabet.vocab_size
    logits = np.full((3, V), -8.0)
    logits[0, 0] = 3.0
    logits[1, 1] = 3.0
    logits[2, sil] = 3.0
    hyps = prefix_beam_search(logits, lm, lex, DecodeConfig(beam_size=16))
    # identical pronunciation: both words present, LM prefers "sun"
    texts = [h.text for h in hyps]
    assert "sun" in texts and "son" in texts
    assert hyps[0].text == "sun"
    assert texts.index("sun") < texts.index("son")
