import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maner import model as mdl
from maner import strategies as S
from maner import tensor as tn
from maner.corpus import TaggedSentence
from maner.model import LABEL2ID, LABELS, ModelConfig, init_params
from maner.strategies import FinetuneConfig, Strategy
from maner.tensor import IGNORE
from maner.vocab import MASK_ID, RAND_ID, build_vocab

WORDS = ["w%d" % i for i in range(8)]
VOCAB = build_vocab([WORDS])
CFG = ModelConfig(vocab_size=len(VOCAB), layers=1, dim=8, heads=2, ff_dim=16, max_len=24, dropout=0.1)

# 12 words, seed 42, p_ner = 0.5: which positions become <mask>
B2_TRACE_SEED42 = [0, 1, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0]


def sent(words, labels):
    return TaggedSentence(tuple(words), tuple(labels))


TWO = sent(["w0", "w1"], ["B-PER", "O"])


def tagged_sentences(max_len=10):
    def build(pairs):
        labels, prev = [], "O"
        for w, lab in pairs:
            if lab.startswith("I-") and (prev == "O" or prev[2:] != lab[2:]):
                lab = "B-" + lab[2:]
            labels.append(lab)
            prev = lab
        return sent([w for w, _ in pairs], labels)

    return st.lists(st.tuples(st.sampled_from(WORDS), st.sampled_from(LABELS)), max_size=max_len).map(build)


class TestReformat:
    def test_baseline1(self):
        ex = S.reformat_baseline1(TWO, VOCAB)
        assert ex.token_ids == (VOCAB.id("w0"), VOCAB.id("w1"))
        assert ex.label_ids == (LABEL2ID["B-PER"], 0)
        assert ex.alignment == (0, 1)

    def test_empty(self):
        empty = sent([], [])
        for ex in (S.reformat_baseline1(empty, VOCAB), S.reformat_maner(empty, VOCAB)):
            assert ex.token_ids == ex.label_ids == ex.alignment == ()

    def test_maner_two_words(self):
        ex = S.reformat_maner(TWO, VOCAB)
        assert ex.token_ids == (MASK_ID, VOCAB.id("w0"), MASK_ID, VOCAB.id("w1"))
        assert ex.label_ids == (LABEL2ID["B-PER"], IGNORE, 0, IGNORE)
        assert ex.alignment == (0, 2)

    def test_maner_rand_marker(self):
        ex = S.reformat_maner(TWO, VOCAB, marker="rand")
        assert ex.token_ids[0::2] == (RAND_ID, RAND_ID)

    def test_maner_length_limit(self):
        with pytest.raises(mdl.SequenceTooLong):
            S.reformat_maner(sent(["w0"] * 5, ["O"] * 5), VOCAB, max_len=9)

    def test_baseline2_degenerate_probabilities(self):
        s = sent(WORDS, ["O"] * 8)
        assert S.reformat_baseline2(s, VOCAB, 0.0, 1) == S.reformat_baseline1(s, VOCAB)
        all_masked = S.reformat_baseline2(s, VOCAB, 1.0, 1)
        assert set(all_masked.token_ids) == {MASK_ID}
        assert all_masked.label_ids == S.reformat_baseline1(s, VOCAB).label_ids

    def test_baseline2_seeded_trace(self):
        s = sent((WORDS * 2)[:12], ["O"] * 12)
        ex = S.reformat_baseline2(s, VOCAB, 0.5, 42)
        assert [int(t == MASK_ID) for t in ex.token_ids] == B2_TRACE_SEED42
        reference = np.random.default_rng(42).random(12) < 0.5
        assert [int(x) for x in reference] == B2_TRACE_SEED42

    def test_baseline2_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            S.reformat_baseline2(TWO, VOCAB, 1.5, 0)


@settings(max_examples=1000, deadline=None)
@given(tagged_sentences(), st.integers(0, 2**32 - 1))
def test_reformat_contracts(s, seed):
    n = len(s.words)
    gold = sorted(LABEL2ID[x] for x in s.labels)
    b1 = S.reformat_baseline1(s, VOCAB)
    assert S.reformat_baseline2(s, VOCAB, 0.0, seed) == b1
    b2 = S.reformat_baseline2(s, VOCAB, 0.3, seed)
    m = S.reformat_maner(s, VOCAB)
    assert len(m.token_ids) == len(m.label_ids) == 2 * n
    assert all(t == MASK_ID for t in m.token_ids[0::2])
    assert list(m.label_ids[1::2]) == [IGNORE] * n
    assert list(m.label_ids[0::2]) == list(b1.label_ids)
    for ex in (b1, b2, m):
        assert len(ex.alignment) == n
        assert sorted(x for x in ex.label_ids if x != IGNORE) == gold
        assert [ex.label_ids[a] for a in ex.alignment] == list(b1.label_ids)


class TestStrategy:
    def test_parse(self):
        assert Strategy.parse("maner-rand") == Strategy("maner", marker="rand")
        assert Strategy.parse("baseline2", p_ner=0.3).p_ner == 0.3
        assert [Strategy.parse(n).name for n in S.STRATEGY_NAMES] == list(S.STRATEGY_NAMES)
        with pytest.raises(ValueError):
            Strategy.parse("crf")

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            Strategy("baseline2", p_ner=-0.1)


TRAIN = [
    sent(["w0", "w1", "w2"], ["B-PER", "I-PER", "O"]),
    sent(["w3", "w4"], ["O", "B-LOC"]),
    sent(["w5", "w6", "w7", "w0"], ["B-ORG", "O", "O", "B-PER"]),
]


def _all_equal(a, b):
    return all(np.array_equal(a.arrays()[k], b.arrays()[k]) for k in a.names())


class TestFinetune:
    def test_does_not_mutate_input(self):
        p = init_params(CFG, 0)
        before = p.copy()
        S.finetune(p, TRAIN, VOCAB, Strategy("baseline1"), FinetuneConfig(epochs=1, lr=1e-2, batch=2))
        assert _all_equal(p, before)

    def test_zero_lr_keeps_params(self):
        p = init_params(CFG, 0)
        out = S.finetune(p, TRAIN, VOCAB, Strategy("maner"), FinetuneConfig(epochs=2, lr=0.0, batch=2))
        assert _all_equal(p, out)

    def test_deterministic(self):
        p = init_params(CFG, 0)
        cfg = FinetuneConfig(epochs=2, lr=1e-2, batch=2, seed=5)
        a = S.finetune(p, TRAIN, VOCAB, Strategy("baseline2", p_ner=0.5), cfg)
        b = S.finetune(p, TRAIN, VOCAB, Strategy("baseline2", p_ner=0.5), cfg)
        assert _all_equal(a, b)

    @pytest.mark.parametrize("name", S.STRATEGY_NAMES)
    def test_one_epoch_decreases_loss(self, name):
        p = init_params(CFG.__class__(**{**CFG.to_dict(), "dropout": 0.0}), 0)
        strategy = Strategy.parse(name)
        ex = [S.reformat(TRAIN[0], VOCAB, strategy)]
        before = float(S.batch_loss(p, ex).data)
        tuned = S.finetune(p, TRAIN[:1], VOCAB, strategy, FinetuneConfig(epochs=1, lr=1e-2, batch=1))
        assert float(S.batch_loss(tuned, ex).data) < before

    def test_baseline2_at_zero_replays_baseline1(self):
        p = init_params(CFG, 0)
        cfg = FinetuneConfig(epochs=3, lr=1e-2, batch=2, seed=9)
        a = S.finetune(p, TRAIN, VOCAB, Strategy("baseline1"), cfg)
        b = S.finetune(p, TRAIN, VOCAB, Strategy("baseline2", p_ner=0.0), cfg)
        assert _all_equal(a, b)

    def test_baseline2_rerolls_each_epoch(self, monkeypatch):
        patterns = []
        real = S.reformat_baseline2

        def spy(sentence, vocab, p_ner, rng):
            ex = real(sentence, vocab, p_ner, rng)
            patterns.append(ex.token_ids)
            return ex

        monkeypatch.setattr(S, "reformat_baseline2", spy)
        long = [sent(WORDS, ["O"] * 8)]
        S.finetune(init_params(CFG, 0), long, VOCAB, Strategy("baseline2", p_ner=0.5), FinetuneConfig(epochs=4, lr=0.0))
        assert len(patterns) == 4 and len(set(patterns)) > 1

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            S.finetune(init_params(CFG, 0), [], VOCAB, Strategy("baseline1"))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_reported(self):
        # float32 overflows after the first step of size ~lr
        with pytest.raises(S.TrainingDiverged, match="baseline1"):
            S.finetune(init_params(CFG, 0), TRAIN, VOCAB, Strategy("baseline1"), FinetuneConfig(epochs=3, lr=1e30))


def test_maner_head_gradient_only_through_markers():
    p = init_params(CFG.__class__(**{**CFG.to_dict(), "dropout": 0.0}), 3, dtype=np.float64)
    ex = S.reformat_maner(TRAIN[2], VOCAB)
    ids = np.array([ex.token_ids])
    emb = mdl.encode_batch(p, ids)
    loss = tn.masked_cross_entropy(mdl.ner_logits(p, emb).reshape(-1, 7), np.array(ex.label_ids))
    gw, = tn.grad(loss, [p["ner.w"]])
    e = emb.data[0]
    probs = tn.softmax(tn.Tensor(e @ p["ner.w"].data + p["ner.b"].data)).data
    onehot = np.zeros_like(probs)
    markers = np.arange(0, len(ex.token_ids), 2)
    onehot[markers, np.array(ex.label_ids)[markers]] = 1
    delta = np.zeros_like(probs)
    delta[markers] = (probs - onehot)[markers] / len(markers)
    assert np.allclose(gw, e.T @ delta, atol=1e-12)


class TestPredict:
    def test_zero_head_predicts_all_o(self):
        p = init_params(CFG, 0)
        p["ner.w"].data[:] = 0
        for name in S.STRATEGY_NAMES:
            assert S.predict(p, ["w0", "w1", "w2"], VOCAB, Strategy.parse(name)) == ["O"] * 3

    def test_maner_output_length(self):
        p = init_params(CFG, 0)
        assert len(S.predict(p, WORDS[:5], VOCAB, Strategy("maner"))) == 5
        assert S.predict(p, [], VOCAB, Strategy("maner")) == []

    def test_zero_layer_oracle(self):
        cfg = ModelConfig(vocab_size=len(VOCAB), layers=0, dim=4, heads=1, ff_dim=4, max_len=8)
        p = init_params(cfg, 0, dtype=np.float64)
        rng = np.random.default_rng(1)
        p["ner.w"].data[:] = rng.normal(size=(4, 7))
        p["ner.b"].data[:] = rng.normal(size=7)
        words = ["w3", "w6"]
        for strategy, ids, pos in (
            (Strategy("baseline1"), [VOCAB.id("w3"), VOCAB.id("w6")], [0, 1]),
            (Strategy("maner"), [MASK_ID, VOCAB.id("w3"), MASK_ID, VOCAB.id("w6")], [0, 2]),
        ):
            x = p["tok_emb"].data[ids] + p["pos_emb"].data[: len(ids)]
            x = (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5)
            scores = x @ p["ner.w"].data + p["ner.b"].data
            expect = [LABELS[int(np.argmax(scores[i]))] for i in pos]
            assert S.predict(p, words, VOCAB, strategy) == expect

    def test_baseline2_inference_has_no_masking(self):
        p = init_params(CFG, 4)
        b1 = S.predict_batch(p, TRAIN, VOCAB, Strategy("baseline1"))
        assert S.predict_batch(p, TRAIN, VOCAB, Strategy("baseline2", p_ner=1.0)) == b1

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.sampled_from(WORDS), min_size=0, max_size=6), min_size=1, max_size=6))
    def test_batch_invariance(self, sentences):
        p = init_params(CFG, 4)
        for name in ("baseline1", "maner-mask"):
            strategy = Strategy.parse(name)
            batched = S.predict_batch(p, sentences, VOCAB, strategy)
            assert batched == [S.predict(p, s, VOCAB, strategy) for s in sentences]
