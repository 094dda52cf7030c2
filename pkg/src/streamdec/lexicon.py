"""Word -> phoneme-sequence lexicon with a pronunciation prefix trie."""

from __future__ import annotations

from collections import defaultdict

__all__ = ["Lexicon", "BOS", "EOS", "UNK"]

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class Lexicon:
    """Maps words to phoneme index sequences (blank and SIL excluded)."""

    def __init__(self, entries, alphabet):
        self.alphabet = alphabet
        self.entries = {}
        self.by_pron = defaultdict(list)     # pron tuple -> [word, ...]
        bad = {alphabet.blank_index, alphabet.sil_index}
        for word, pron in entries.items():
            pron = tuple(int(p) for p in pron)
            if not pron:
                raise ValueError(f"lexicon: empty pronunciation for '{word}'")
            if any(p in bad or not 0 <= p < alphabet.vocab_size for p in pron):
                raise ValueError(f"lexicon: invalid phoneme in '{word}'")
            self.entries[word] = pron
            self.by_pron[pron].append(word)
        for words in self.by_pron.values():
            words.sort()
        # prefix set for the trie constraint
        self._prefixes = defaultdict(set)    # prefix tuple -> set of next phonemes
        for pron in self.by_pron:
            for i in range(len(pron)):
                self._prefixes[pron[:i]].add(pron[i])

    def words(self):
        return sorted(self.entries)

    def pronounce(self, word):
        return self.entries[word]

    def next_phonemes(self, prefix):
        """Phonemes extending ``prefix`` toward at least one word."""
        return self._prefixes.get(tuple(prefix), set())

    def words_for(self, pron):
        """All words with exactly this pronunciation (homophones)."""
        return self.by_pron.get(tuple(pron), [])

    def is_prefix(self, prefix):
        prefix = tuple(prefix)
        return prefix in self._prefixes or prefix in self.by_pron

    def phonemes_for_sentence(self, words, trailing_sil=True):
        """Phoneme indices for a word sequence, SIL between words (and at the
        end when ``trailing_sil``)."""
        sil = self.alphabet.sil_index
        out = []
        for i, w in enumerate(words):
            if i:
                out.append(sil)
            out.extend(self.entries[w])
        if trailing_sil and words:
            out.append(sil)
        return out

    # file io ----------------------------------------------------------
    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for word in sorted(self.entries):
                syms = " ".join(self.alphabet.label(p) for p in self.entries[word])
                f.write(f"{word}\t{syms}\n")

    @classmethod
    def load(cls, path, alphabet):
        entries = {}
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, syms = line.split("\t")
                    entries[word] = [alphabet.index(s) for s in syms.split()]
                except (ValueError, KeyError) as e:
                    raise ValueError(f"lexicon line {line_no}: {e}")
        return cls(entries, alphabet)
