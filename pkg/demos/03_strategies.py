"""
Three ways to feed a sentence to the tagger
===========================================

Baseline 1 classifies each word. Baseline 2 does the same but hides
random words behind ``<mask>`` while training. MANER puts a marker in
front of every word and reads each word's label off its marker.
"""

import numpy as np

from maner.corpus import TaggedSentence
from maner.strategies import reformat_baseline1, reformat_baseline2, reformat_maner
from maner.vocab import build_vocab

sent = TaggedSentence(("ada", "lovelace", "visited", "paris"), ("B-PER", "I-PER", "O", "B-LOC"))
vocab = build_vocab([sent.words])


def show(name, ex):
    toks = vocab.decode(ex.token_ids)
    labs = ["-" if i < 0 else str(i) for i in ex.label_ids]
    print(f"{name:10s}", list(zip(toks, labs)), "labels at", ex.alignment)


show("baseline1", reformat_baseline1(sent, vocab))
show("baseline2", reformat_baseline2(sent, vocab, p_ner=0.5, rng=np.random.default_rng(3)))
show("maner", reformat_maner(sent, vocab))
show("maner-rand", reformat_maner(sent, vocab, marker="rand"))
