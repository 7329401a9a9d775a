"""Experiment configuration read from a flat ``key = value`` text file.

Lines starting with ``#`` are comments. Unknown keys are an error. Keys:

=====================  =========  ==========================================
key                    default    meaning
=====================  =========  ==========================================
seed                   0          master seed (languages, splits, runs)
n_languages            24         synthetic languages in the suite
n_covered              16         first N languages included in pretraining
n_train / n_test       100 / 100  low-resource split sizes
sweep_languages        4          covered languages used by the size sweep
sweep_sizes            100,200,400,700,1000
sweep_train            1000       train sentences generated for sweep languages
pretrain_sentences     2000       pretraining sentences per covered language
ambiguity              1.0        share of entity name parts shared by types
gazetteer_size         ...        entities per type and language
name_parts             ...        name-part pool size (per type and shared)
n_templates            ...        sentence templates per language
heldout_fraction       0.4        gazetteer share never seen in training
layers dim heads       2 64 4     encoder shape
ff_dim max_len         128 128
dropout                0.1
mlm_p                  0.15       MLM selection probability
mlm_epochs mlm_lr      10 3e-4
mlm_batch              8          sequences per step
mlm_pack_len           0          pack consecutive sentences up to this length (0: off)
ft_preset              toy        ``toy`` (lr 3e-4) or ``large`` (lr 5e-6)
ft_lr                  preset     explicit fine-tuning lr, overrides preset
ft_epochs ft_batch     30 16
p_ner                  0.15       Baseline 2 replacement probability
strategies             baseline1,baseline2,maner-mask
workers                1          parallel fine-tuning processes
=====================  =========  ==========================================
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .corpus import LanguageSpec
from .model import ModelConfig
from .pretrain import MlmConfig
from .strategies import STRATEGY_NAMES, FinetuneConfig

LR_PRESETS = {"toy": 3e-4, "large": 5e-6}
_LANG_DEFAULTS = LanguageSpec()


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_languages: int = 24
    n_covered: int = 16
    n_train: int = 100
    n_test: int = 100
    sweep_languages: int = 4
    sweep_sizes: tuple[int, ...] = (100, 200, 400, 700, 1000)
    sweep_train: int = 1000
    pretrain_sentences: int = 2000
    ambiguity: float = 1.0
    gazetteer_size: int = _LANG_DEFAULTS.gazetteer_size
    name_parts: int = _LANG_DEFAULTS.name_parts
    n_templates: int = _LANG_DEFAULTS.n_templates
    heldout_fraction: float = 0.4
    layers: int = 2
    dim: int = 64
    heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1
    mlm_p: float = 0.15
    mlm_epochs: int = 10
    mlm_lr: float = 3e-4
    mlm_batch: int = 8
    mlm_pack_len: int = 0
    ft_preset: str = "toy"
    ft_lr: float | None = None
    ft_epochs: int = 30
    ft_batch: int = 16
    p_ner: float = 0.15
    strategies: tuple[str, ...] = ("baseline1", "baseline2", "maner-mask")
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok, name, why):
            if not ok:
                raise ConfigError(f"{name}: {why}")

        need(self.n_languages >= 1, "n_languages", "must be >= 1")
        need(0 <= self.n_covered <= self.n_languages, "n_covered", "must lie in [0, n_languages]")
        need(self.n_train >= 1 and self.n_test >= 1, "n_train", "split sizes must be >= 1")
        need(0 <= self.sweep_languages <= self.n_covered, "sweep_languages", "must lie in [0, n_covered]")
        need(all(s >= 1 for s in self.sweep_sizes), "sweep_sizes", "sizes must be >= 1")
        need(
            all(s <= self.sweep_train for s in self.sweep_sizes), "sweep_sizes",
            f"sizes exceed the {self.sweep_train} train sentences available (sweep_train)",
        )
        need(self.pretrain_sentences >= 1, "pretrain_sentences", "must be >= 1")
        need(0.0 <= self.ambiguity <= 1.0, "ambiguity", "must lie in [0, 1]")
        need(0.0 <= self.heldout_fraction < 1.0, "heldout_fraction", "must lie in [0, 1)")
        need(self.dim % max(self.heads, 1) == 0 and self.heads >= 1, "heads", "dim must be divisible by heads")
        need(self.ft_preset in LR_PRESETS, "ft_preset", f"must be one of {sorted(LR_PRESETS)}")
        need(self.ft_epochs >= 0 and self.ft_batch >= 1, "ft_epochs", "epochs >= 0 and batch >= 1")
        need(0.0 <= self.p_ner <= 1.0, "p_ner", "must lie in [0, 1]")
        need(self.workers >= 1, "workers", "must be >= 1")
        for s in self.strategies:
            need(s in STRATEGY_NAMES, "strategies", f"unknown strategy {s!r}")

    # -- derived configs ------------------------------------------------------
    @property
    def finetune_lr(self) -> float:
        return self.ft_lr if self.ft_lr is not None else LR_PRESETS[self.ft_preset]

    def language_spec(self) -> LanguageSpec:
        return dataclasses.replace(
            _LANG_DEFAULTS, ambiguity=self.ambiguity, gazetteer_size=self.gazetteer_size,
            name_parts=self.name_parts, n_templates=self.n_templates,
        )

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size, layers=self.layers, dim=self.dim, heads=self.heads,
            ff_dim=self.ff_dim, max_len=self.max_len, dropout=self.dropout,
        )

    def mlm_config(self) -> MlmConfig:
        return MlmConfig(
            p_mlm=self.mlm_p, epochs=self.mlm_epochs, lr=self.mlm_lr, batch=self.mlm_batch,
            seed=self.seed, pack_len=self.mlm_pack_len,
        )

    def finetune_config(self, run_seed: int) -> FinetuneConfig:
        return FinetuneConfig(epochs=self.ft_epochs, lr=self.finetune_lr, batch=self.ft_batch, seed=run_seed)

    # -- serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sweep_sizes"] = list(self.sweep_sizes)
        d["strategies"] = list(self.strategies)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown config key")
        d = dict(d)
        for key in ("sweep_sizes", "strategies"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        from .checkpoint import canonical_json

        return hashlib.sha256(canonical_json(self.to_dict())).hexdigest()[:16]


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise ConfigError(f"{name}: unknown config key")
    kind = str(types[name])
    try:
        if name == "sweep_sizes":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if name == "strategies":
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        if name == "ft_lr":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} ({exc})") from exc


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _coerce(key, raw)
    base = base or ExperimentConfig()
    try:
        return dataclasses.replace(base, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
