import numpy as np
import pytest

from streamdec.lexicon import Lexicon
from streamdec.ngram import train_lm
from streamdec.phonemes import PhonemeAlphabet


@pytest.fixture
def tiny_alphabet():
    # a b c SIL (+ implicit blank at index 4)
    return PhonemeAlphabet(["a", "b", "c", "SIL"])


@pytest.fixture
def tiny_lexicon(tiny_alphabet):
    return Lexicon({"ab": [0, 1], "ac": [0, 2], "a": [0]}, tiny_alphabet)


@pytest.fixture
def tiny_lm():
    return train_lm([["ab", "a"], ["ac", "ab"], ["a", "a", "ab"]], order=2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
