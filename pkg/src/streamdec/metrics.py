"""Edit-distance metrics: WER/PER with S/D/I breakdown and phoneme confusion
matrices.

The alignment traceback is canonical: at equal cost, match beats substitute
beats delete beats insert, so the S/D/I split is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EditBreakdown", "edit_breakdown", "align", "confusion_matrix",
           "corpus_error_rate", "EmptyReferenceError"]


class EmptyReferenceError(ZeroDivisionError):
    """Rate is undefined for an empty reference."""


@dataclass
class EditBreakdown:
    S: int
    D: int
    I: int
    n_ref: int

    @property
    def distance(self):
        return self.S + self.D + self.I

    @property
    def rate(self):
        if self.n_ref == 0:
            raise EmptyReferenceError("error rate undefined: empty reference")
        return self.distance / self.n_ref


def _dp(ref, hyp):
    n, m = len(ref), len(hyp)
    D = np.zeros((n + 1, m + 1), dtype=np.int64)
    D[:, 0] = np.arange(n + 1)
    D[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        ri = ref[i - 1]
        for j in range(1, m + 1):
            sub = D[i - 1, j - 1] + (ri != hyp[j - 1])
            D[i, j] = min(sub, D[i - 1, j] + 1, D[i, j - 1] + 1)
    return D


def align(ref, hyp):
    """Minimal-cost alignment as a list of (op, ref_tok, hyp_tok) with op in
    {"match", "sub", "del", "ins"}; canonical tie-break order."""
    ref, hyp = list(ref), list(hyp)
    D = _dp(ref, hyp)
    ops = []
    i, j = len(ref), len(hyp)
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and D[i, j] == D[i - 1, j - 1]:
            ops.append(("match", ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and D[i, j] == D[i - 1, j - 1] + 1:
            ops.append(("sub", ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and D[i, j] == D[i - 1, j] + 1:
            ops.append(("del", ref[i - 1], None))
            i -= 1
        else:
            ops.append(("ins", None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def edit_breakdown(ref, hyp):
    ops = align(ref, hyp)
    s = sum(1 for op, _, _ in ops if op == "sub")
    d = sum(1 for op, _, _ in ops if op == "del")
    i = sum(1 for op, _, _ in ops if op == "ins")
    return EditBreakdown(S=s, D=d, I=i, n_ref=len(list(ref)))


def confusion_matrix(pairs, vocab_size):
    """Substitution counts over a corpus of (ref, hyp) index-sequence pairs.

    Entry (i, j) counts aligned substitutions of true symbol i by decoded
    symbol j; the diagonal stays zero (matches are not substitutions).
    """
    mat = np.zeros((vocab_size, vocab_size), dtype=np.int64)
    for ref, hyp in pairs:
        for op, r, h in align(ref, hyp):
            if op == "sub":
                mat[r, h] += 1
    return mat


def corpus_error_rate(pairs):
    """Micro-averaged error rate: sum(S+D+I) / sum(N) over all pairs."""
    tot = EditBreakdown(0, 0, 0, 0)
    for ref, hyp in pairs:
        b = edit_breakdown(ref, hyp)
        tot = EditBreakdown(tot.S + b.S, tot.D + b.D, tot.I + b.I,
                            tot.n_ref + b.n_ref)
    return tot
