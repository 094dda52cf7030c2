"""Synthetic multi-session dataset with controllable per-session drift.

Sentences are mapped through the lexicon to phoneme sequences; each phoneme
instance is rendered as a per-phoneme channel template held for a random
number of 20 ms bins plus Gaussian noise. Across sessions the per-phoneme
templates follow a random walk whose step size is set by ``drift_delta``, so
decoding degrades on later sessions and adaptation recovery is reproducible.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .lexicon import Lexicon
from .phonemes import PhonemeAlphabet, default_alphabet
from .rng import stream

__all__ = [
    "SynthConfig", "Trial", "DatasetBundle", "generate", "split_days",
    "save_dataset", "load_dataset", "default_lexicon_entries",
    "default_corpus", "DatasetFormatError", "CONFUSABLE_WORDS",
]

_MAGIC = b"SDECDATA"
_VERSION = 1

# 40 words with simple ARPAbet-style pronunciations; "son"/"sun" are
# deliberate homophones so the LM has to disambiguate at word close.
_DEFAULT_WORDS = {
    "the": ["DH", "AH"],
    "a": ["AH"],
    "cat": ["K", "AE", "T"],
    "dog": ["D", "AO", "G"],
    "bird": ["B", "ER", "D"],
    "fish": ["F", "IH", "SH"],
    "man": ["M", "AE", "N"],
    "woman": ["W", "UH", "M", "AH", "N"],
    "child": ["CH", "AY", "L", "D"],
    "son": ["S", "AH", "N"],
    "sun": ["S", "AH", "N"],
    "moon": ["M", "UW", "N"],
    "sees": ["S", "IY", "Z"],
    "hears": ["HH", "IH", "R", "Z"],
    "finds": ["F", "AY", "N", "D", "Z"],
    "likes": ["L", "AY", "K", "S"],
    "helps": ["HH", "EH", "L", "P", "S"],
    "wants": ["W", "AA", "N", "T", "S"],
    "big": ["B", "IH", "G"],
    "small": ["S", "M", "AO", "L"],
    "old": ["OW", "L", "D"],
    "new": ["N", "UW"],
    "red": ["R", "EH", "D"],
    "green": ["G", "R", "IY", "N"],
    "house": ["HH", "AW", "S"],
    "tree": ["T", "R", "IY"],
    "river": ["R", "IH", "V", "ER"],
    "stone": ["S", "T", "OW", "N"],
    "road": ["R", "OW", "D"],
    "town": ["T", "AW", "N"],
    "runs": ["R", "AH", "N", "Z"],
    "walks": ["W", "AO", "K", "S"],
    "jumps": ["JH", "AH", "M", "P", "S"],
    "sings": ["S", "IH", "NG", "Z"],
    "there": ["DH", "EH", "R"],
    "here": ["HH", "IY", "R"],
    "now": ["N", "AW"],
    "today": ["T", "AH", "D", "EY"],
    "boy": ["B", "OY"],
    "they": ["DH", "EY"],
    # dense cluster of CVC minimal pairs: one phoneme substitution flips one
    # of these words into another, so word error rate stays sensitive to
    # moderate phoneme error rates instead of being absorbed by the lexicon
    "bat": ["B", "AE", "T"],
    "hat": ["HH", "AE", "T"],
    "mat": ["M", "AE", "T"],
    "rat": ["R", "AE", "T"],
    "sat": ["S", "AE", "T"],
    "fat": ["F", "AE", "T"],
    "pat": ["P", "AE", "T"],
    "can": ["K", "AE", "N"],
    "tan": ["T", "AE", "N"],
    "ran": ["R", "AE", "N"],
    "cap": ["K", "AE", "P"],
    "tap": ["T", "AE", "P"],
}

# the minimal-pair cluster plus its neighbors already in the lexicon
CONFUSABLE_WORDS = ["bat", "hat", "mat", "rat", "sat", "fat", "pat", "cat",
                    "can", "tan", "ran", "man", "cap", "tap", "the", "a"]


def default_lexicon_entries(alphabet):
    return {w: [alphabet.index(s) for s in pron]
            for w, pron in _DEFAULT_WORDS.items()}


def default_corpus(n_sentences=200, seed=7, words=None):
    """Sample subject-verb-object-ish sentences with a fixed bigram bias so a
    trained n-gram LM carries real signal."""
    words = sorted(words or _DEFAULT_WORDS)
    rng = stream(seed, "corpus")
    n = len(words)
    # sparse random bigram preference, fixed by the corpus seed
    pref = rng.gamma(0.3, 1.0, size=(n, n))
    pref /= pref.sum(axis=1, keepdims=True)
    start = rng.gamma(0.3, 1.0, size=n)
    start /= start.sum()
    corpus = []
    for _ in range(n_sentences):
        length = int(rng.integers(2, 5))
        w = int(rng.choice(n, p=start))
        sent = [words[w]]
        for _ in range(length - 1):
            w = int(rng.choice(n, p=pref[w]))
            sent.append(words[w])
        corpus.append(sent)
    return corpus


@dataclass
class SynthConfig:
    n_channels: int = 64
    bin_ms: int = 20
    sessions: int = 8
    trials_per_session: int = 150
    noise_sd: float = 0.25
    drift_delta: float = 0.0
    dur_min: int = 7                  # bins per phoneme instance
    dur_max: int = 12
    sil_dur_min: int = 7
    sil_dur_max: int = 14
    template_low: float = 0.5
    template_high: float = 4.0
    offset_drift_sd: float = 0.5      # scale of per-channel drift offsets
    block_min: int = 20
    block_max: int = 50
    seed: int = 0
    corpus: list = field(default_factory=list)   # list[list[word]]

    def canonical_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    def content_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


@dataclass
class Trial:
    trial_id: int
    session: int
    block: int
    features: np.ndarray              # [T x C], raw (pre-normalization)
    phonemes: list                    # target phoneme indices (SIL included)
    text: str
    split: str = "train"              # train | val | test


@dataclass
class DatasetBundle:
    config: SynthConfig
    alphabet: PhonemeAlphabet
    lexicon: Lexicon
    trials: list

    def by_session(self):
        out = {}
        for t in self.trials:
            out.setdefault(t.session, []).append(t)
        return out

    def split_trials(self, split, sessions=None):
        return [t for t in self.trials
                if t.split == split and (sessions is None or t.session in sessions)]


class DatasetFormatError(RuntimeError):
    pass


def _phoneme_templates(cfg, alphabet):
    rng = stream(cfg.seed, "templates")
    n = alphabet.vocab_size - 1      # blank has no template
    return rng.uniform(cfg.template_low, cfg.template_high,
                       size=(n, cfg.n_channels))


def _drift(cfg, templates):
    # tuning-drift random walk: session s renders phoneme p with template
    # t_p + delta*W_s[p] where W_s = W_{s-1} + s*E_s and E_s is a fresh
    # random increment each session (session 0 is undrifted), plus a slowly
    # walking per-channel offset.  The step size grows with the session
    # index, so later sessions wander progressively further than anything
    # spanned by the earlier ones; moving the class means cannot be
    # normalized away, so decoding degrades as the walk wanders.  Because
    # there are fewer phonemes than channels, a linear map of the input can
    # still re-align the drifted means, so the shift stays recoverable by
    # the patch-embedding layer during adaptation.
    n, C = templates.shape
    per_session, offsets = [], []
    W = np.zeros((n, C))
    o = np.zeros(C)
    for s in range(cfg.sessions):
        if s > 0:
            rng = stream(cfg.seed, "drift", s)
            W = W + s * rng.normal(0.0, 1.0, size=(n, C))
            o = o + s * rng.normal(0.0, cfg.offset_drift_sd, size=C)
        per_session.append(np.clip(templates + cfg.drift_delta * W, 0.0, None))
        offsets.append(cfg.drift_delta * o)
    return per_session, offsets


def generate(cfg: SynthConfig) -> DatasetBundle:
    """Render the full multi-session dataset. Deterministic given cfg.seed;
    per-trial randomness uses independent substreams."""
    alphabet = default_alphabet()
    lexicon = Lexicon(default_lexicon_entries(alphabet), alphabet)
    corpus = cfg.corpus or default_corpus()
    for sent in corpus:
        for w in sent:
            if w not in lexicon.entries:
                raise ValueError(f"generate: corpus word '{w}' not in lexicon")
    templates = _phoneme_templates(cfg, alphabet)
    session_templates, offsets = _drift(cfg, templates)
    sil = alphabet.sil_index

    trials = []
    trial_id = 0
    for s in range(cfg.sessions):
        srng = stream(cfg.seed, "session", s)
        n = cfg.trials_per_session
        # block boundaries of 20-50 trials
        blocks = []
        left = n
        while left > 0:
            size = int(srng.integers(cfg.block_min, cfg.block_max + 1))
            blocks.append(min(size, left))
            left -= blocks[-1]
        split_draw = srng.random(n)
        sent_idx = srng.integers(0, len(corpus), size=n)
        block_of = np.repeat(np.arange(len(blocks)), blocks)
        for i in range(n):
            words = corpus[int(sent_idx[i])]
            phons = lexicon.phonemes_for_sentence(words, trailing_sil=True)
            trng = stream(cfg.seed, "trial", s, i)
            rows = []
            for p in phons:
                lo, hi = ((cfg.sil_dur_min, cfg.sil_dur_max) if p == sil
                          else (cfg.dur_min, cfg.dur_max))
                dur = int(trng.integers(lo, hi + 1))
                block = np.tile(session_templates[s][p], (dur, 1))
                rows.append(block)
            x = np.concatenate(rows, axis=0)
            x = x + trng.normal(0.0, cfg.noise_sd, size=x.shape)
            x = x + offsets[s]
            np.clip(x, 0.0, None, out=x)
            split = ("train" if split_draw[i] < 0.8
                     else "val" if split_draw[i] < 0.9 else "test")
            trials.append(Trial(trial_id=trial_id, session=s,
                                block=int(block_of[i]), features=x,
                                phonemes=list(phons), text=" ".join(words),
                                split=split))
            trial_id += 1
    return DatasetBundle(cfg, alphabet, lexicon, trials)


def split_days(bundle, train_days, heldout_days):
    """Chronological day split: (train trials, {day: held-out trials})."""
    if train_days + heldout_days > bundle.config.sessions:
        raise ValueError("split_days: requested more days than sessions")
    train = [t for t in bundle.trials if t.session < train_days]
    held = {}
    for d in range(train_days, train_days + heldout_days):
        held[d] = [t for t in bundle.trials if t.session == d]
    return train, held


# file io --------------------------------------------------------------------

def save_dataset(bundle, path):
    header = {
        "version": _VERSION,
        "config": asdict(bundle.config),
        "config_hash": bundle.config.content_hash(),
        "alphabet": bundle.alphabet.symbols,
        "lexicon": {w: list(p) for w, p in bundle.lexicon.entries.items()},
        "trials": [
            {"trial_id": t.trial_id, "session": t.session, "block": t.block,
             "shape": list(t.features.shape), "phonemes": t.phonemes,
             "text": t.text, "split": t.split}
            for t in bundle.trials
        ],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        for t in bundle.trials:
            f.write(np.ascontiguousarray(t.features, dtype="<f8").tobytes())


def load_dataset(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(_MAGIC) + 4 or blob[: len(_MAGIC)] != _MAGIC:
        raise DatasetFormatError("not a dataset file (bad magic)")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + hlen:
        raise DatasetFormatError("truncated dataset header")
    try:
        header = json.loads(blob[off:off + hlen].decode())
    except ValueError as e:
        raise DatasetFormatError(f"malformed dataset header: {e}")
    off += hlen
    if header.get("version") != _VERSION:
        raise DatasetFormatError(f"unsupported dataset version {header.get('version')}")
    cfg = SynthConfig(**header["config"])
    if cfg.content_hash() != header["config_hash"]:
        warnings.warn("dataset config hash mismatch: file and config diverged")
    alphabet = PhonemeAlphabet(header["alphabet"])
    lexicon = Lexicon(header["lexicon"], alphabet)
    trials = []
    for rec in header["trials"]:
        shape = tuple(rec["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        if len(blob) < off + n * 8:
            raise DatasetFormatError(f"truncated dataset at trial {rec['trial_id']}")
        x = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
        off += n * 8
        trials.append(Trial(trial_id=rec["trial_id"], session=rec["session"],
                            block=rec["block"],
                            features=x.astype(np.float64).reshape(shape),
                            phonemes=list(rec["phonemes"]), text=rec["text"],
                            split=rec["split"]))
    if off != len(blob):
        raise DatasetFormatError("trailing bytes after dataset payload")
    return DatasetBundle(cfg, alphabet, lexicon, trials)
