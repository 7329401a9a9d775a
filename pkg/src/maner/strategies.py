"""Input/label reformatting strategies, the shared fine-tuning loop, and inference.

* ``baseline1``: classify every word of the unmodified sentence.
* ``baseline2``: during training each word is independently replaced by the
  mask token with probability ``p_ner``; labels stay on their positions.
  Inference is identical to ``baseline1``.
* ``maner``: a marker token (``<mask>`` or the control ``<rand>``) is
  prepended to every word; each word's label sits on its marker and the
  word positions are ignored by the loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import model as mdl
from . import tensor as tn
from .model import LABEL2ID, LABELS, ModelParams, SequenceTooLong
from .tensor import IGNORE
from .vocab import MASK_ID, PAD_ID, Vocab, marker_id

log = logging.getLogger(__name__)

STRATEGY_NAMES = ("baseline1", "baseline2", "maner-mask", "maner-rand")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Strategy:
    kind: str  # "baseline1" | "baseline2" | "maner"
    p_ner: float = 0.15
    marker: str = "mask"

    def __post_init__(self):
        if self.kind not in ("baseline1", "baseline2", "maner"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if not 0.0 <= self.p_ner <= 1.0:
            raise ValueError(f"p_ner must lie in [0, 1], got {self.p_ner}")
        if self.marker not in ("mask", "rand"):
            raise ValueError(f"unknown marker {self.marker!r}")

    @property
    def name(self) -> str:
        return f"maner-{self.marker}" if self.kind == "maner" else self.kind

    @classmethod
    def parse(cls, name: str, p_ner: float = 0.15) -> "Strategy":
        if name in ("baseline1", "baseline2"):
            return cls(name, p_ner=p_ner)
        if name in ("maner", "maner-mask"):
            return cls("maner", marker="mask")
        if name == "maner-rand":
            return cls("maner", marker="rand")
        raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}")


class ReformattedExample(NamedTuple):
    token_ids: tuple[int, ...]
    label_ids: tuple[int, ...]
    alignment: tuple[int, ...]  # word index -> position carrying its label


def _label_ids(labels) -> tuple[int, ...]:
    return tuple(LABEL2ID[label] for label in labels)


def reformat_baseline1(sentence, vocab: Vocab) -> ReformattedExample:
    n = len(sentence.words)
    return ReformattedExample(tuple(vocab.encode(sentence.words)), _label_ids(sentence.labels), tuple(range(n)))


def reformat_baseline2(sentence, vocab: Vocab, p_ner: float, rng) -> ReformattedExample:
    """Replace each word by ``<mask>`` when its uniform draw falls below ``p_ner``.

    ``rng`` is a seed or a ``numpy.random.Generator``; one draw is consumed
    per word in order.
    """
    if not 0.0 <= p_ner <= 1.0:
        raise ValueError(f"p_ner must lie in [0, 1], got {p_ner}")
    rng = np.random.default_rng(rng)
    base = reformat_baseline1(sentence, vocab)
    draws = rng.random(len(base.token_ids))
    tokens = tuple(MASK_ID if u < p_ner else t for u, t in zip(draws, base.token_ids))
    return base._replace(token_ids=tokens)


def reformat_maner(sentence, vocab: Vocab, marker: str = "mask", max_len: int | None = None) -> ReformattedExample:
    n = len(sentence.words)
    if max_len is not None and 2 * n > max_len:
        raise SequenceTooLong(f"MANER input of {2 * n} tokens exceeds max_len={max_len}")
    m, _ = marker_id(vocab, marker)
    tokens: list[int] = []
    labels: list[int] = []
    for wid, lid in zip(vocab.encode(sentence.words), _label_ids(sentence.labels)):
        tokens += [m, wid]
        labels += [lid, IGNORE]
    return ReformattedExample(tuple(tokens), tuple(labels), tuple(range(0, 2 * n, 2)))


def reformat(sentence, vocab: Vocab, strategy: Strategy, rng=None, max_len: int | None = None) -> ReformattedExample:
    if strategy.kind == "maner":
        return reformat_maner(sentence, vocab, strategy.marker, max_len)
    if strategy.kind == "baseline2" and rng is not None:
        return reformat_baseline2(sentence, vocab, strategy.p_ner, rng)
    return reformat_baseline1(sentence, vocab)


def pad_batch(examples: Sequence[ReformattedExample]):
    """Right-pad to the longest example; padded labels are IGNORE."""
    lengths = [len(e.token_ids) for e in examples]
    t = max(lengths)
    ids = np.full((len(examples), t), PAD_ID, dtype=np.int64)
    labels = np.full((len(examples), t), IGNORE, dtype=np.int64)
    for i, e in enumerate(examples):
        ids[i, : lengths[i]] = e.token_ids
        labels[i, : lengths[i]] = e.label_ids
    return ids, labels, lengths


def batch_loss(params: ModelParams, examples: Sequence[ReformattedExample], rng=None, active=None) -> tn.Tensor:
    """Masked NER cross-entropy for a batch of reformatted examples."""
    ids, labels, lengths = pad_batch(examples)
    emb = mdl.encode_batch(params, ids, lengths, rng)
    logits = mdl.ner_logits(params, emb)
    return tn.masked_cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1), active)


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 30
    lr: float = 3e-4
    batch: int = 16
    seed: int = 0


def finetune(params: ModelParams, train, vocab: Vocab, strategy: Strategy, cfg: FinetuneConfig = FinetuneConfig()) -> ModelParams:
    """Fine-tune a copy of ``params`` on ``train`` with the given strategy.

    ``train`` is a sequence of tagged sentences or a ``DatasetSplit``.
    Baseline 2 draws a fresh masking pattern every epoch from its own
    random stream, so shuffling and dropout match Baseline 1 exactly.
    """
    sentences = list(getattr(train, "train", train))
    if not sentences:
        raise ValueError("finetune needs at least one training sentence")
    params = params.copy()
    tensors = params.values()
    state = tn.AdamState.for_params([t.data for t in tensors], lr=cfg.lr)
    order_rng = np.random.default_rng([cfg.seed, 0])
    drop_rng = np.random.default_rng([cfg.seed, 1])
    mask_rng = np.random.default_rng([cfg.seed, 2])
    max_len = params.config.max_len
    fixed = None
    if strategy.kind != "baseline2":
        fixed = [reformat(s, vocab, strategy, max_len=max_len) for s in sentences]

    for epoch in range(cfg.epochs):
        if fixed is None:
            examples = [reformat_baseline2(s, vocab, strategy.p_ner, mask_rng) for s in sentences]
        else:
            examples = fixed
        order = order_rng.permutation(len(examples))
        for start in range(0, len(order), cfg.batch):
            batch = [examples[i] for i in order[start : start + cfg.batch]]
            try:
                loss = batch_loss(params, batch, drop_rng)
                grads = tn.grad(loss, tensors)
                tn.adam_step([t.data for t in tensors], grads, state)
            except tn.NonFiniteError as exc:
                raise TrainingDiverged(
                    f"{strategy.name}: non-finite value at epoch {epoch}, step {state.t}: {exc}"
                ) from exc
        log.debug("%s epoch %d loss %.4f", strategy.name, epoch, float(loss.data))
    return params


def _model_input(words, vocab: Vocab, strategy: Strategy) -> ReformattedExample:
    sent = _Words(tuple(words))
    if strategy.kind == "maner":
        return reformat_maner(sent, vocab, strategy.marker)
    return reformat_baseline1(sent, vocab)


class _Words(NamedTuple):
    words: tuple[str, ...]

    @property
    def labels(self):
        return ("O",) * len(self.words)


def predict(params: ModelParams, words: Sequence[str], vocab: Vocab, strategy: Strategy) -> list[str]:
    """IOB2 labels for ``words``; argmax ties resolve to the lowest label index."""
    return predict_batch(params, [words], vocab, strategy)[0]


def predict_batch(params: ModelParams, sentences, vocab: Vocab, strategy: Strategy) -> list[list[str]]:
    """Predict many sentences; equal-length sentences share one forward pass."""
    sentences = [tuple(getattr(s, "words", s)) for s in sentences]
    out: list[list[str] | None] = [None] * len(sentences)
    groups: dict[int, list[int]] = {}
    for i, words in enumerate(sentences):
        if not words:
            out[i] = []
        else:
            groups.setdefault(len(words), []).append(i)
    with tn.no_grad():
        for n, idx in sorted(groups.items()):
            examples = [_model_input(sentences[i], vocab, strategy) for i in idx]
            ids = np.array([e.token_ids for e in examples], dtype=np.int64)
            emb = mdl.encode_batch(params, ids)
            logits = mdl.ner_logits(params, emb).data
            pos = np.asarray(examples[0].alignment)
            best = logits[:, pos, :].argmax(axis=-1)
            for row, i in enumerate(idx):
                out[i] = [LABELS[k] for k in best[row]]
    return out
