"""Word-level vocabulary with reserved special tokens."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD, UNK, MASK, RAND = "<pad>", "<unk>", "<mask>", "<rand>"
SPECIALS = (PAD, UNK, MASK, RAND)
PAD_ID, UNK_ID, MASK_ID, RAND_ID = range(4)


@dataclass(frozen=True)
class Vocab:
    """Immutable token <-> id map. Ids ``0..3`` are the special tokens.

    ``rand_pretrained`` records whether the control token's embedding was
    ever exposed to a pretraining gradient; it stays False unless a
    pretraining run explicitly opts in.
    """

    tokens: tuple[str, ...]
    rand_pretrained: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        index = {t: i for i, t in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def id(self, word: str) -> int:
        return self._index.get(word, UNK_ID)

    def encode(self, words: Sequence[str]) -> list[int]:
        return encode(words, self)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @property
    def corpus_ids(self) -> range:
        """Ids of ordinary (non-special) words."""
        return range(len(SPECIALS), len(self.tokens))


def build_vocab(corpus: Sequence, min_count: int = 1) -> Vocab:
    """Build a vocabulary from sentences (word lists or objects with ``.words``).

    Ids after the specials are assigned by descending frequency, then
    lexicographically, so identical corpora give identical vocabularies.
    """
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for sent in corpus:
        counts.update(getattr(sent, "words", sent))
    for special in SPECIALS:
        counts.pop(special, None)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return Vocab(SPECIALS + tuple(kept))


def encode(words: Sequence[str], vocab: Vocab) -> list[int]:
    """One id per word; out-of-vocabulary words map to ``UNK_ID``."""
    return [vocab.id(w) for w in words]


def marker_id(vocab: Vocab, marker: str) -> tuple[int, bool]:
    """Return ``(id, pretrained)`` for the ``"mask"`` or ``"rand"`` marker."""
    if marker == "mask":
        return MASK_ID, True
    if marker == "rand":
        return RAND_ID, vocab.rand_pretrained
    raise ValueError(f"unknown marker {marker!r}; expected 'mask' or 'rand'")
