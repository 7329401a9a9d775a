"""Versioned, portable checkpoint container.

Layout::

    8 bytes   magic  b"MANERCK\\0"
    4 bytes   format version (uint32, little-endian)
    8 bytes   header length H (uint64, little-endian)
    H bytes   header: canonical JSON (sorted keys, no whitespace), UTF-8
    N bytes   parameter blocks, little-endian float32, in header order
    32 bytes  SHA-256 of header + blocks

The digest is the SHA-256 over the canonical header and the raw blocks,
so it does not depend on the platform or the path.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams
from .vocab import Vocab

MAGIC = b"MANERCK\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file cannot be read; names the bad field."""


class UnsupportedVersion(CheckpointError):
    pass


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    vocab: Vocab
    arrays: dict[str, np.ndarray]
    coverage: tuple[str, ...] = ()
    mlm_config: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_params(cls, params: ModelParams, vocab: Vocab, **meta) -> "Checkpoint":
        arrays = {k: np.ascontiguousarray(v, dtype="<f4").copy() for k, v in params.arrays().items()}
        return cls(params.config, vocab, arrays, **meta)

    def params(self) -> ModelParams:
        return ModelParams.from_arrays(
            self.model_config, {k: v.astype(np.float32).copy() for k, v in self.arrays.items()}
        )

    def _header(self) -> dict:
        blocks = []
        offset = 0
        for name, arr in self.arrays.items():
            nbytes = int(arr.size) * 4
            blocks.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
            offset += nbytes
        return {
            "format_version": self.format_version,
            "model_config": self.model_config.to_dict(),
            "vocab": list(self.vocab.tokens),
            "rand_pretrained": self.vocab.rand_pretrained,
            "coverage": list(self.coverage),
            "mlm_config": self.mlm_config,
            "experiment": self.experiment,
            "provenance": self.provenance,
            "blocks": blocks,
            "payload_bytes": offset,
        }

    def _payload(self) -> bytes:
        return b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in self.arrays.values())

    def to_bytes(self) -> bytes:
        header = canonical_json(self._header())
        payload = self._payload()
        digest = hashlib.sha256(header + payload).digest()
        return MAGIC + struct.pack("<IQ", self.format_version, len(header)) + header + payload + digest

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self._header()) + self._payload()).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path) -> str:
    """Write atomically (temp file + rename); returns the digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(ckpt.to_bytes())
    tmp.replace(path)
    return ckpt.digest()


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("magic: not a checkpoint file (or truncated header)")
    version, header_len = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format_version: file has {version}, this reader supports {FORMAT_VERSION}")
    start = len(MAGIC) + 12
    if len(raw) < start + header_len:
        raise CheckpointError("header: file truncated inside the header")
    header_bytes = raw[start : start + header_len]
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"header: unreadable JSON ({exc})") from exc
    for key in ("model_config", "vocab", "blocks", "payload_bytes"):
        if key not in header:
            raise CheckpointError(f"{key}: missing from header")
    payload_start = start + header_len
    payload_end = payload_start + int(header["payload_bytes"])
    if len(raw) != payload_end + 32:
        raise CheckpointError(
            f"payload_bytes: expected {payload_end + 32} bytes in file, found {len(raw)} (truncated or padded)"
        )
    payload = raw[payload_start:payload_end]
    if hashlib.sha256(header_bytes + payload).digest() != raw[payload_end:]:
        raise CheckpointError("digest: content does not match the stored SHA-256")

    try:
        config = ModelConfig(**header["model_config"])
    except TypeError as exc:
        raise CheckpointError(f"model_config: {exc}") from exc
    arrays = {}
    for block in header["blocks"]:
        off, nbytes, shape = int(block["offset"]), int(block["nbytes"]), tuple(block["shape"])
        if nbytes != int(np.prod(shape, dtype=np.int64)) * 4 or off + nbytes > len(payload):
            raise CheckpointError(f"blocks.{block['name']}: shape/size inconsistent")
        arrays[block["name"]] = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=off).reshape(shape).copy()
    vocab = Vocab(tuple(header["vocab"]), rand_pretrained=bool(header.get("rand_pretrained", False)))
    return Checkpoint(
        model_config=config,
        vocab=vocab,
        arrays=arrays,
        coverage=tuple(header.get("coverage", ())),
        mlm_config=header.get("mlm_config", {}),
        experiment=header.get("experiment", {}),
        provenance=header.get("provenance", {}),
        format_version=version,
    )
