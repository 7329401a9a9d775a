"""Synthetic low-resource "languages" with gazetteers and template grammars.

Each language has its own surface vocabulary: every word carries the
language prefix, so two languages never share a word. Sentences are made
by filling template slots. Entity slots are filled from per-type
gazetteers and emit IOB2 labels. Everything is a pure function of the
seeds passed in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .model import ENTITY_TYPES, LABELS

_ONSETS = ("p", "t", "k", "b", "d", "g", "m", "n", "s", "l", "r", "v", "z", "h", "f", "j")
_VOWELS = ("a", "e", "i", "o", "u")
_CODAS = ("", "", "", "n", "s", "r", "l")

# Clause skeletons. "@X" marks a cue word for entity type X; "$X" an entity slot.
_CLAUSES = {
    "PER": (
        ("$PER", "@PER", "$F", "$N"),
        ("$F", "$N", "@PER", "$PER"),
        ("$PER", "$V", "$F", "$A", "$N"),
    ),
    "LOC": (
        ("$F", "$N", "$V", "@LOC", "$LOC"),
        ("@LOC", "$LOC", "$F", "$N", "$V"),
        ("$LOC", "$V", "$F", "$N"),
    ),
    "ORG": (
        ("$F", "@ORG", "$ORG", "$V", "$N"),
        ("$ORG", "@ORG", "$F", "$A", "$N"),
        ("$F", "$N", "$V", "$ORG"),
    ),
    "PAIR": (
        ("$PER", "@ORG", "$ORG"),
        ("$PER", "$V", "@LOC", "$LOC"),
        ("$ORG", "$V", "@LOC", "$LOC"),
        ("$PER", "@PER", "$PER"),
    ),
    "NONE": (
        ("$F", "$A", "$N", "$V", "$F", "$N"),
        ("$N", "$V", "$F", "$A", "$N"),
        ("$F", "$N", "$V"),
    ),
}


@dataclass(frozen=True)
class LanguageSpec:
    """Size knobs for :func:`gen_language`."""

    n_function: int = 10
    n_verbs: int = 16
    n_nouns: int = 24
    n_adjectives: int = 10
    n_cues: int = 3
    gazetteer_size: int = 40
    name_parts: int = 30
    n_templates: int = 24
    ambiguity: float = 0.3
    max_clauses: int = 2

    def validate(self) -> None:
        for name, value in self.__dict__.items():
            if name != "ambiguity" and value < 1:
                raise ValueError(f"LanguageSpec.{name} must be >= 1")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ValueError("LanguageSpec.ambiguity must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticLanguage:
    language_id: str
    seed: int
    function_words: tuple[str, ...]
    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    adjectives: tuple[str, ...]
    cues: dict
    gazetteers: dict
    templates: tuple[tuple[str, ...], ...]

    @property
    def prefix(self) -> str:
        return self.language_id.lower() + "_"

    def lexicon(self) -> set[str]:
        words = set(self.function_words) | set(self.verbs) | set(self.nouns) | set(self.adjectives)
        for cues in self.cues.values():
            words.update(cues)
        for entities in self.gazetteers.values():
            for ent in entities:
                words.update(ent)
        return words


@dataclass(frozen=True)
class TaggedSentence:
    words: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.words) != len(self.labels):
            raise ValueError(f"{len(self.words)} words but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.words)

    def to_json(self) -> str:
        return json.dumps({"words": list(self.words), "labels": list(self.labels)}, ensure_ascii=False)


@dataclass(frozen=True)
class DatasetSplit:
    language_id: str
    train: tuple[TaggedSentence, ...]
    test: tuple[TaggedSentence, ...]
    heldout_entities: frozenset = field(default_factory=frozenset, repr=False)

    def unseen_test_fraction(self) -> float:
        """Share of distinct test entity surface forms absent from the train sentences."""
        train_forms = _entity_forms(self.train)
        test_forms = _entity_forms(self.test)
        if not test_forms:
            return 0.0
        return len(test_forms - train_forms) / len(test_forms)


@dataclass(frozen=True)
class PretrainCorpus:
    sentences: tuple[tuple[str, ...], ...]
    coverage: tuple[str, ...]


class Iob2Violation(NamedTuple):
    position: int
    reason: str


def _entity_forms(sentences: Iterable[TaggedSentence]) -> set[tuple[str, tuple[str, ...]]]:
    from .metrics import extract_spans

    forms = set()
    for s in sentences:
        for span in extract_spans(s.labels):
            forms.add((span.type, s.words[span.start : span.end]))
    return forms


def language_id(index: int) -> str:
    return f"L{index:02d}"


def _stems(rng: np.random.Generator, n: int) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        k = int(rng.integers(1, 4))
        stem = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(k)
        ) + _CODAS[rng.integers(len(_CODAS))]
        if stem not in seen:
            seen.add(stem)
            out.append(stem)
    return out


def gen_language(seed: int, spec: LanguageSpec = LanguageSpec(), lang_id: str | None = None) -> SyntheticLanguage:
    """Deterministically generate one synthetic language from ``seed``."""
    spec.validate()
    lang_id = lang_id or f"X{seed}"
    rng = np.random.default_rng([seed, 0x1A9])
    prefix = lang_id.lower() + "_"
    n_cue_words = spec.n_cues * len(ENTITY_TYPES)
    n_parts = spec.name_parts * (len(ENTITY_TYPES) + 1)
    counts = [spec.n_function, spec.n_verbs, spec.n_nouns, spec.n_adjectives, n_cue_words, n_parts]
    words = [prefix + s for s in _stems(rng, sum(counts))]
    rng.shuffle(words)
    pools = []
    start = 0
    for c in counts:
        pools.append(tuple(words[start : start + c]))
        start += c
    function_words, verbs, nouns, adjectives, cue_words, parts = pools

    cues = {t: cue_words[i * spec.n_cues : (i + 1) * spec.n_cues] for i, t in enumerate(ENTITY_TYPES)}
    shared = parts[: spec.name_parts]
    typed = {
        t: parts[(i + 1) * spec.name_parts : (i + 2) * spec.name_parts] for i, t in enumerate(ENTITY_TYPES)
    }

    gazetteers = {}
    for etype in ENTITY_TYPES:
        entities: list[tuple[str, ...]] = []
        seen: set[tuple[str, ...]] = set()
        while len(entities) < spec.gazetteer_size:
            n_words = int(rng.choice([1, 2, 3], p=[0.4, 0.4, 0.2]))
            ent = tuple(
                (shared if rng.random() < spec.ambiguity else typed[etype])[rng.integers(spec.name_parts)]
                for _ in range(n_words)
            )
            if ent not in seen:
                seen.add(ent)
                entities.append(ent)
        gazetteers[etype] = tuple(entities)

    kinds = list(_CLAUSES)
    templates = []
    for _ in range(spec.n_templates):
        n_clauses = int(rng.integers(1, spec.max_clauses + 1))
        template: list[str] = []
        for c in range(n_clauses):
            kind = kinds[rng.integers(len(kinds))]
            skeleton = _CLAUSES[kind][rng.integers(len(_CLAUSES[kind]))]
            for sym in skeleton:
                if sym.startswith("@"):
                    options = cues[sym[1:]]
                    template.append(options[rng.integers(len(options))])
                else:
                    template.append(sym)
            if c < n_clauses - 1:
                template.append(function_words[rng.integers(len(function_words))])
        templates.append(tuple(template))

    return SyntheticLanguage(
        language_id=lang_id,
        seed=seed,
        function_words=function_words,
        verbs=verbs,
        nouns=nouns,
        adjectives=adjectives,
        cues=cues,
        gazetteers=gazetteers,
        templates=tuple(templates),
    )


def _fill(lang: SyntheticLanguage, template, pools: dict, rng: np.random.Generator) -> TaggedSentence:
    fillers = {"$F": lang.function_words, "$N": lang.nouns, "$V": lang.verbs, "$A": lang.adjectives}
    words: list[str] = []
    labels: list[str] = []
    for sym in template:
        if sym in fillers:
            options = fillers[sym]
            words.append(options[rng.integers(len(options))])
            labels.append("O")
        elif sym.startswith("$"):
            etype = sym[1:]
            options = pools[etype]
            ent = options[rng.integers(len(options))]
            words.extend(ent)
            labels.extend([f"B-{etype}"] + [f"I-{etype}"] * (len(ent) - 1))
        else:
            words.append(sym)
            labels.append("O")
    return TaggedSentence(tuple(words), tuple(labels))


def _sentences(lang, pools, n, rng) -> list[TaggedSentence]:
    return [_fill(lang, lang.templates[rng.integers(len(lang.templates))], pools, rng) for _ in range(n)]


def gen_split(
    lang: SyntheticLanguage, n_train: int, n_test: int, seed: int, heldout_fraction: float = 0.4
) -> DatasetSplit:
    """Train/test sentences for ``lang``.

    A ``heldout_fraction`` of each gazetteer never appears in training; test
    sentences draw half their mentions from it. Train and test use separate
    random streams, so a smaller train set is a prefix of a larger one.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("split sizes must be >= 1")
    part_rng = np.random.default_rng([seed, lang.seed, 2])
    train_pool, heldout = {}, {}
    for etype, entities in lang.gazetteers.items():
        order = part_rng.permutation(len(entities))
        n_hold = max(1, int(round(heldout_fraction * len(entities))))
        if n_hold >= len(entities):
            n_hold = len(entities) - 1 if len(entities) > 1 else 0
        heldout[etype] = tuple(entities[i] for i in order[:n_hold])
        train_pool[etype] = tuple(entities[i] for i in order[n_hold:])

    train = _sentences(lang, train_pool, n_train, np.random.default_rng([seed, lang.seed, 0]))

    test_rng = np.random.default_rng([seed, lang.seed, 1])
    test = []
    for _ in range(n_test):
        pools = {t: (heldout[t] if heldout[t] and test_rng.random() < 0.5 else train_pool[t]) for t in ENTITY_TYPES}
        test.append(_fill(lang, lang.templates[test_rng.integers(len(lang.templates))], pools, test_rng))

    held = frozenset((t, e) for t, ents in heldout.items() for e in ents)
    return DatasetSplit(lang.language_id, tuple(train), tuple(test), held)


def validate_iob2(labels: Sequence[str]) -> Iob2Violation | None:
    """Return the first IOB2 violation, or None if the sequence is valid."""
    prev = "O"
    for i, label in enumerate(labels):
        if label not in LABELS:
            return Iob2Violation(i, f"unknown label {label!r}")
        if label.startswith("I-"):
            if prev == "O":
                return Iob2Violation(i, "I without B")
            if prev[2:] != label[2:]:
                return Iob2Violation(i, "type switch inside span")
        prev = label
    return None


def gen_pretrain_corpus(
    languages: Sequence[SyntheticLanguage], sentences_per_lang: int, seed: int
) -> PretrainCorpus:
    """Unlabelled text for the covered languages, drawn from full gazetteers."""
    if not languages:
        raise ValueError("pretraining needs at least one language")
    sentences = []
    for lang in languages:
        rng = np.random.default_rng([seed, lang.seed, 3])
        for s in _sentences(lang, lang.gazetteers, sentences_per_lang, rng):
            sentences.append(s.words)
    return PretrainCorpus(tuple(sentences), tuple(lang.language_id for lang in languages))


def write_jsonl(path, sentences: Iterable[TaggedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(s.to_json() + "\n")


def read_jsonl(path) -> list[TaggedSentence]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            out.append(TaggedSentence(rec["words"], rec["labels"]))
    return out
