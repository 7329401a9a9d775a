"""Small pre-norm transformer encoder with an MLM head and an NER head."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import tensor as tn
from .tensor import Tensor

LABELS = ("O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG")
LABEL2ID = {label: i for i, label in enumerate(LABELS)}
ENTITY_TYPES = ("PER", "LOC", "ORG")


class ConfigError(ValueError):
    pass


class SequenceTooLong(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    layers: int = 2
    dim: int = 64
    heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1
    num_labels: int = len(LABELS)

    def validate(self) -> None:
        if self.dim % self.heads:
            raise ConfigError(f"dim={self.dim} is not divisible by heads={self.heads}")
        if min(self.vocab_size, self.dim, self.heads, self.ff_dim, self.max_len) < 1 or self.layers < 0:
            raise ConfigError("model sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class ModelParams:
    """Named parameter tensors plus the config that shapes them."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def values(self) -> list[Tensor]:
        return list(self.tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    @property
    def dtype(self):
        return self["tok_emb"].dtype

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            {k: Tensor(t.data.copy(), requires_grad=True, name=k) for k, t in self.tensors.items()},
        )

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict[str, np.ndarray]) -> "ModelParams":
        return cls(config, {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()})


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f = config.dim, config.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.max_len, d),
    }
    for i in range(config.layers):
        p = f"layer{i}."
        shapes.update({
            p + "ln1.scale": (d,), p + "ln1.offset": (d,),
            p + "attn.wq": (d, d), p + "attn.bq": (d,),
            p + "attn.wk": (d, d), p + "attn.bk": (d,),
            p + "attn.wv": (d, d), p + "attn.bv": (d,),
            p + "attn.wo": (d, d), p + "attn.bo": (d,),
            p + "ln2.scale": (d,), p + "ln2.offset": (d,),
            p + "ff.w1": (d, f), p + "ff.b1": (f,),
            p + "ff.w2": (f, d), p + "ff.b2": (d,),
        })
    shapes.update({
        "final_ln.scale": (d,), "final_ln.offset": (d,),
        "mlm.bias": (config.vocab_size,),
        "ner.w": (d, config.num_labels), "ner.b": (config.num_labels,),
    })
    return shapes


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Normal(0, 0.02) weights and embeddings, zero biases, unit layer-norm scales."""
    config.validate()
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".scale"):
            arr = np.ones(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        arrays[name] = arr.astype(dtype)
    return ModelParams.from_arrays(config, arrays)


def encode_batch(
    params: ModelParams,
    ids: np.ndarray,
    lengths: Sequence[int] | None = None,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Contextual embeddings for a padded batch ``ids[B, T]`` -> ``[B, T, D]``.

    ``rng`` enables dropout (training); ``None`` means evaluation mode.
    """
    cfg = params.config
    ids = np.asarray(ids, dtype=np.int64)
    b, t = ids.shape
    if t > cfg.max_len:
        raise SequenceTooLong(f"sequence length {t} exceeds max_len={cfg.max_len}")
    d, h = cfg.dim, cfg.heads
    dh = d // h
    drop = cfg.dropout if rng is not None else 0.0

    x = tn.take_rows(params["tok_emb"], ids) + tn.take_rows(params["pos_emb"], np.arange(t))
    x = tn.dropout(x, drop, rng)

    bias = None
    if lengths is not None and min(lengths) < t:
        pad = np.arange(t)[None, :] >= np.asarray(lengths)[:, None]
        bias = np.where(pad, -1e9, 0.0).astype(params.dtype)[:, None, None, :]
    scale = 1.0 / np.sqrt(dh)

    for i in range(cfg.layers):
        p = f"layer{i}."
        hN = tn.layer_norm(x, params[p + "ln1.scale"], params[p + "ln1.offset"])
        q = (hN @ params[p + "attn.wq"] + params[p + "attn.bq"]).reshape(b, t, h, dh).transpose(0, 2, 1, 3)
        k = (hN @ params[p + "attn.wk"] + params[p + "attn.bk"]).reshape(b, t, h, dh).transpose(0, 2, 3, 1)
        v = (hN @ params[p + "attn.wv"] + params[p + "attn.bv"]).reshape(b, t, h, dh).transpose(0, 2, 1, 3)
        scores = (q @ k) * scale
        if bias is not None:
            scores = scores + bias
        att = tn.softmax(scores) @ v
        att = att.transpose(0, 2, 1, 3).reshape(b, t, d)
        x = x + tn.dropout(att @ params[p + "attn.wo"] + params[p + "attn.bo"], drop, rng)
        hN = tn.layer_norm(x, params[p + "ln2.scale"], params[p + "ln2.offset"])
        ff = tn.gelu(hN @ params[p + "ff.w1"] + params[p + "ff.b1"]) @ params[p + "ff.w2"] + params[p + "ff.b2"]
        x = x + tn.dropout(ff, drop, rng)

    return tn.layer_norm(x, params["final_ln.scale"], params["final_ln.offset"])


def encode(params: ModelParams, token_ids: Sequence[int]) -> Tensor:
    """Evaluation-mode embeddings ``[T, D]`` for one sequence."""
    ids = np.asarray(token_ids, dtype=np.int64)[None, :]
    out = encode_batch(params, ids)
    return out.reshape(out.shape[1], out.shape[2])


def ner_logits(params: ModelParams, embeddings: Tensor) -> Tensor:
    return embeddings @ params["ner.w"] + params["ner.b"]


def ner_probs(params: ModelParams, embeddings: Tensor) -> Tensor:
    """Per-token label distribution ``softmax(e @ W + b)``."""
    return tn.softmax(ner_logits(params, embeddings))


def mlm_logits(params: ModelParams, embeddings: Tensor, rows: Sequence[int] | None = None) -> Tensor:
    """Vocabulary logits through the tied token-embedding matrix.

    ``rows`` restricts the output classes to a subset of vocabulary ids;
    embedding rows outside the subset then receive no gradient.
    """
    table = params["tok_emb"]
    bias = params["mlm.bias"]
    if rows is not None:
        rows = np.asarray(rows, dtype=np.int64)
        table = tn.take_rows(table, rows)
        bias = tn.take_rows(bias.reshape(-1, 1), rows).reshape(-1)
    return embeddings @ table.transpose() + bias
