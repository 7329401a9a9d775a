"""
Synthetic languages and their NER data
======================================

Each language has its own vocabulary (every word carries a language
prefix), three gazetteers and a set of sentence templates built from
clause skeletons with cue words. Splits hold part of each gazetteer back
for the test set.
"""

from maner import corpus as cp
from maner.metrics import extract_spans

spec = cp.LanguageSpec()
lang = cp.gen_language(seed=1000, spec=spec, lang_id="L00")
print(len(lang.lexicon()), "words; first template:", " ".join(lang.templates[0]))

for etype, names in lang.gazetteers.items():
    print(etype, [" ".join(n) for n in names[:3]])

# %% a labelled split
split = cp.gen_split(lang, n_train=100, n_test=100, seed=0)
for s in split.train[:3]:
    print(" ".join(f"{w}/{t}" for w, t in zip(s.words, s.labels)))
print("unseen test entity forms:", round(split.unseen_test_fraction(), 2))

# %% spans, and the IOB2 checker
s = split.train[0]
print(extract_spans(s.labels))
print(cp.validate_iob2(["O", "I-PER"]))

# %% smaller train sets are prefixes of larger ones
small = cp.gen_split(lang, 50, 10, seed=0)
print("prefix holds:", split.train[:50] == small.train)
