"""Phoneme alphabet: 39 ARPAbet phonemes plus SIL, with the CTC blank
reserved as the final vocabulary index."""

from __future__ import annotations

ARPABET = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER",
    "EY", "F", "G", "HH", "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW",
    "P", "R", "S", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
    "SH", "OY",
]

SIL = "SIL"


class PhonemeAlphabet:
    """Stable symbol <-> index mapping. Blank is index V-1 and never appears
    in target sequences."""

    def __init__(self, symbols=None):
        self.symbols = list(symbols) if symbols is not None else ARPABET + [SIL]
        self.blank_index = len(self.symbols)  # == V - 1
        self.vocab_size = len(self.symbols) + 1
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("PhonemeAlphabet: duplicate symbols")

    @property
    def sil_index(self):
        return self._index[SIL]

    def index(self, symbol):
        return self._index[symbol]

    def label(self, index):
        return self.symbols[index]

    def encode(self, symbols):
        return [self._index[s] for s in symbols]

    def decode(self, indices):
        return [self.symbols[i] for i in indices]


def default_alphabet():
    return PhonemeAlphabet()
