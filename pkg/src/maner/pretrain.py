"""Masked-language-model pretraining of the encoder."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import model as mdl
from . import tensor as tn
from .model import ModelConfig, ModelParams
from .tensor import IGNORE
from .vocab import MASK_ID, PAD_ID, RAND_ID, Vocab

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlmConfig:
    p_mlm: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1
    epochs: int = 10
    lr: float = 3e-4
    batch: int = 32
    seed: int = 0
    pack_len: int = 64

    def validate(self) -> None:
        if not 0.0 < self.p_mlm < 1.0:
            raise ValueError("p_mlm must lie in (0, 1)")
        fracs = (self.mask_frac, self.random_frac, self.keep_frac)
        if min(fracs) < 0 or abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("mask/random/keep fractions must be non-negative and sum to 1")
        if self.pack_len < 0:
            raise ValueError("pack_len must be >= 0 (0 disables packing)")
        if self.epochs < 0 or self.batch < 1 or self.lr < 0:
            raise ValueError("epochs, batch and lr must be non-negative (batch >= 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def corrupt(token_ids: Sequence[int], cfg: MlmConfig, rng: np.random.Generator, replacement_ids: Sequence[int]):
    """BERT-style corruption of one sentence.

    Each non-padding position is selected with probability ``p_mlm``; a
    selected position becomes ``<mask>``, a random word from
    ``replacement_ids``, or stays unchanged according to the configured
    split. Returns ``(corrupted_ids, targets)`` with IGNORE at unselected
    positions.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    picked = (rng.random(ids.shape[0]) < cfg.p_mlm) & (ids != PAD_ID)
    targets = np.where(picked, ids, IGNORE)
    out = ids.copy()
    action = rng.random(ids.shape[0])
    randoms = np.asarray(replacement_ids)[rng.integers(len(replacement_ids), size=ids.shape[0])]
    to_mask = picked & (action < cfg.mask_frac)
    to_rand = picked & (action >= cfg.mask_frac) & (action < cfg.mask_frac + cfg.random_frac)
    out[to_mask] = MASK_ID
    out[to_rand] = randoms[to_rand]
    return out, targets


def pack_sequences(encoded: Sequence[np.ndarray], pack_len: int) -> list[np.ndarray]:
    """Greedily concatenate consecutive sentences into sequences of at most ``pack_len`` tokens."""
    if pack_len <= 0:
        return list(encoded)
    packed: list[np.ndarray] = []
    current: list[np.ndarray] = []
    size = 0
    for sent in encoded:
        if current and size + len(sent) > pack_len:
            packed.append(np.concatenate(current))
            current, size = [], 0
        current.append(sent)
        size += len(sent)
    if current:
        packed.append(np.concatenate(current))
    return packed


def mlm_output_rows(vocab_size: int) -> np.ndarray:
    """Vocabulary ids scored by the MLM head: everything except the control token."""
    return np.array([i for i in range(vocab_size) if i != RAND_ID], dtype=np.int64)


def pretrain(
    sentences: Sequence[Sequence[str]],
    vocab: Vocab,
    model_config: ModelConfig,
    mlm_config: MlmConfig = MlmConfig(),
    init_seed: int | None = None,
):
    """Train the encoder with the MLM objective.

    The control token never occurs in the input, is never drawn as a random
    replacement and is not an output class, so its embedding row keeps its
    initial value. Returns ``(params, curve)`` where ``curve`` is a list of
    ``(step, epoch, loss)`` tuples.
    """
    mlm_config.validate()
    if not sentences:
        raise ValueError("pretraining corpus is empty")
    if model_config.vocab_size != len(vocab):
        raise ValueError(f"model vocab_size {model_config.vocab_size} != vocabulary size {len(vocab)}")
    seed = mlm_config.seed if init_seed is None else init_seed
    params = mdl.init_params(model_config, seed)
    tensors = params.values()
    state = tn.AdamState.for_params([t.data for t in tensors], lr=mlm_config.lr)

    encoded = [np.asarray(vocab.encode(s), dtype=np.int64) for s in sentences]
    encoded = pack_sequences(encoded, min(mlm_config.pack_len, model_config.max_len))
    if any(len(e) > model_config.max_len for e in encoded):
        raise mdl.SequenceTooLong("pretraining sentence longer than max_len")
    replacement = np.asarray(vocab.corpus_ids, dtype=np.int64)
    rows = mlm_output_rows(len(vocab))
    remap = np.full(len(vocab), -1, dtype=np.int64)
    remap[rows] = np.arange(rows.size)

    order_rng = np.random.default_rng([mlm_config.seed, 10])
    mask_rng = np.random.default_rng([mlm_config.seed, 11])
    drop_rng = np.random.default_rng([mlm_config.seed, 12])
    curve: list[tuple[int, int, float]] = []
    t0 = time.time()
    for epoch in range(mlm_config.epochs):
        order = order_rng.permutation(len(encoded))
        for start in range(0, len(order), mlm_config.batch):
            idx = order[start : start + mlm_config.batch]
            lengths = [len(encoded[i]) for i in idx]
            t = max(lengths)
            ids = np.full((len(idx), t), PAD_ID, dtype=np.int64)
            targets = np.full((len(idx), t), IGNORE, dtype=np.int64)
            for r, i in enumerate(idx):
                ids[r, : lengths[r]], targets[r, : lengths[r]] = corrupt(encoded[i], mlm_config, mask_rng, replacement)
            flat_targets = targets.reshape(-1)
            sel = np.flatnonzero(flat_targets != IGNORE)
            if sel.size == 0:
                continue
            try:
                emb = mdl.encode_batch(params, ids, lengths, drop_rng)
                hidden = tn.take_rows(emb.reshape(-1, model_config.dim), sel)
                logits = mdl.mlm_logits(params, hidden, rows)
                loss = tn.masked_cross_entropy(logits, remap[flat_targets[sel]])
                grads = tn.grad(loss, tensors)
                tn.adam_step([x.data for x in tensors], grads, state)
            except tn.NonFiniteError as exc:
                raise RuntimeError(f"MLM pretraining diverged at step {state.t}: {exc}") from exc
            curve.append((state.t, epoch, float(loss.data)))
        log.info("mlm epoch %d  loss %.4f  (%.0fs)", epoch, curve[-1][2], time.time() - t0)
    return params, curve


def curve_summary(curve, window: int = 50) -> tuple[float, float]:
    """Mean loss over the first and last ``window`` steps."""
    losses = [c[2] for c in curve]
    w = max(1, min(window, len(losses) // 2 or 1))
    return float(np.mean(losses[:w])), float(np.mean(losses[-w:]))
