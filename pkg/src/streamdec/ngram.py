"""Word-level n-gram language model with interpolated absolute discounting.

Probabilities are stored ARPA-style: per order, a table of log-probs for seen
n-grams plus a log backoff weight per seen history. Queries on unseen n-grams
recurse to the next lower order. A single UNK token guarantees every
in-vocabulary continuation has finite log probability.
"""

from __future__ import annotations

import math
from collections import defaultdict

from .lexicon import BOS, EOS, UNK

__all__ = ["NGramModel", "train_lm", "save_lm", "load_lm", "LMFormatError"]

_DISCOUNT = 0.75
_FORMAT = "STREAMDEC-NGRAM-1"


class LMFormatError(ValueError):
    pass


class NGramModel:
    def __init__(self, order, vocab, logprob, backoff, discount=_DISCOUNT):
        self.order = order
        self.vocab = sorted(vocab)          # predictable words (EOS, UNK incl.)
        self._vocab_set = set(self.vocab)
        self.logprob = logprob              # dict[ngram tuple] -> float
        self.backoff = backoff              # dict[history tuple] -> float (log)
        self.discount = discount

    def _norm_word(self, w):
        if w == BOS:
            return w
        return w if w in self._vocab_set else UNK

    def logprob_word(self, history, word):
        """log P(word | history). History longer than order-1 is truncated;
        OOV words map to UNK."""
        word = self._norm_word(word)
        hist = tuple(self._norm_word(w) for w in history)[-(self.order - 1):] \
            if self.order > 1 else ()
        return self._logprob(hist + (word,))

    def _logprob(self, ngram):
        if len(ngram) == 1:
            return self.logprob[ngram]      # unigrams cover the whole vocab
        lp = self.logprob.get(ngram)
        if lp is not None:
            return lp
        hist = ngram[:-1]
        bo = self.backoff.get(hist, 0.0)
        return bo + self._logprob(ngram[1:])

    def sentence_logprob(self, words):
        """log P(words </s>) with BOS padding."""
        hist = [BOS] * (self.order - 1)
        total = 0.0
        for w in list(words) + [EOS]:
            total += self.logprob_word(hist, w)
            hist = (hist + [self._norm_word(w)])[-(self.order - 1):] \
                if self.order > 1 else []
        return total


def train_lm(corpus, order, discount=_DISCOUNT):
    """Train from an iterable of token-list sentences.

    Deterministic and invariant to sentence order (pure counting).
    """
    if order < 1:
        raise ValueError(f"train_lm: order must be >= 1, got {order}")
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise ValueError("train_lm: empty corpus")

    vocab = sorted({w for s in sentences for w in s} | {EOS, UNK})
    counts = [defaultdict(int) for _ in range(order + 1)]  # counts[k]: k-grams
    for s in sentences:
        padded = [BOS] * (order - 1) + [w if w in vocab else w for w in s] + [EOS]
        n_pred = len(s) + 1
        for i in range(order - 1, order - 1 + n_pred):
            for k in range(1, order + 1):
                if i - k + 1 >= 0:
                    counts[k][tuple(padded[i - k + 1: i + 1])] += 1

    V = len(vocab)
    d = discount
    logprob = {}
    backoff = {}

    # unigrams: discounted counts with uniform interpolation over the vocab
    total = sum(counts[1].values())
    n_seen = len(counts[1])
    uni = {}
    for w in vocab:
        c = counts[1].get((w,), 0)
        p = (max(c - d, 0.0) + d * n_seen / V) / total
        uni[w] = p
        logprob[(w,)] = math.log(p)

    prev = {(w,): uni[w] for w in vocab}
    for k in range(2, order + 1):
        hist_counts = defaultdict(int)
        hist_types = defaultdict(int)
        for ng, c in counts[k].items():
            hist_counts[ng[:-1]] += c
            hist_types[ng[:-1]] += 1
        cur = {}
        for ng, c in counts[k].items():
            h = ng[:-1]
            lower = prev.get(ng[1:])
            if lower is None:
                lower = math.exp(_backoff_prob(ng[1:], logprob, backoff))
            p = (c - d) / hist_counts[h] + (d * hist_types[h] / hist_counts[h]) * lower
            cur[ng] = p
            logprob[ng] = math.log(p)
        for h in hist_counts:
            backoff[h] = math.log(d * hist_types[h] / hist_counts[h])
        prev = cur
    return NGramModel(order, vocab, logprob, backoff, discount=d)


def _backoff_prob(ngram, logprob, backoff):
    if len(ngram) == 1:
        return logprob[ngram]
    lp = logprob.get(ngram)
    if lp is not None:
        return lp
    return backoff.get(ngram[:-1], 0.0) + _backoff_prob(ngram[1:], logprob, backoff)


# file io --------------------------------------------------------------------

def save_lm(model, path):
    """Plain-text, ARPA-like, canonical (sorted) order; floats via repr so the
    round trip is bit-exact."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{_FORMAT}\n")
        f.write(f"order {model.order}\n")
        f.write(f"discount {model.discount!r}\n")
        f.write("vocab " + " ".join(model.vocab) + "\n")
        for k in range(1, model.order + 1):
            grams = sorted(g for g in model.logprob if len(g) == k)
            f.write(f"\\{k}-grams: {len(grams)}\n")
            for g in grams:
                f.write(f"{model.logprob[g]!r}\t{' '.join(g)}\n")
        # histories can contain <s> and need not be stored n-grams themselves
        hists = sorted(model.backoff)
        f.write(f"\\backoffs: {len(hists)}\n")
        for h in hists:
            f.write(f"{model.backoff[h]!r}\t{' '.join(h)}\n")
        f.write("\\end\\\n")


def load_lm(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    it = iter(lines)
    try:
        if next(it) != _FORMAT:
            raise LMFormatError("bad LM format header")
        order = int(next(it).split()[1])
        discount = float(next(it).split()[1])
        vocab = next(it).split()[1:]
        logprob, backoff = {}, {}
        for k in range(1, order + 1):
            head = next(it).split()
            if head[0] != f"\\{k}-grams:":
                raise LMFormatError(f"expected {k}-gram section, got {head[0]}")
            for _ in range(int(head[1])):
                parts = next(it).split("\t")
                gram = tuple(parts[1].split())
                if len(gram) != k:
                    raise LMFormatError(f"bad {k}-gram line: {parts}")
                logprob[gram] = float(parts[0])
        head = next(it).split()
        if head[0] != "\\backoffs:":
            raise LMFormatError("expected backoff section")
        for _ in range(int(head[1])):
            parts = next(it).split("\t")
            backoff[tuple(parts[1].split())] = float(parts[0])
        if next(it) != "\\end\\":
            raise LMFormatError("missing end marker")
    except (StopIteration, IndexError, ValueError) as e:
        if isinstance(e, LMFormatError):
            raise
        raise LMFormatError(f"malformed LM file: {e}")
    return NGramModel(order, vocab, logprob, backoff, discount=discount)
