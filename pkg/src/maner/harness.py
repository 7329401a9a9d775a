"""Experiment orchestration: the language universe, pretraining, and fine-tune/eval grids."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus as cp
from .checkpoint import Checkpoint, load_checkpoint
from .config import ConfigError, ExperimentConfig
from .metrics import EvalResult, span_f1
from .model import ENTITY_TYPES
from .pretrain import pretrain
from .strategies import Strategy, finetune, predict_batch
from .vocab import RAND_ID, build_vocab

log = logging.getLogger(__name__)


class InvalidCheckpoint(RuntimeError):
    pass


@dataclass(frozen=True)
class Universe:
    """All languages and splits implied by an experiment config."""

    config: ExperimentConfig
    languages: tuple[cp.SyntheticLanguage, ...]
    splits: dict

    @property
    def covered(self) -> tuple[str, ...]:
        return tuple(lang.language_id for lang in self.languages[: self.config.n_covered])

    @property
    def sweep(self) -> tuple[str, ...]:
        return self.covered[: self.config.sweep_languages]

    def index(self, language_id: str) -> int:
        return [lang.language_id for lang in self.languages].index(language_id)


def language_seed(master_seed: int, index: int) -> int:
    return 1000 * (master_seed + 1) + index


def build_universe(cfg: ExperimentConfig) -> Universe:
    spec = cfg.language_spec()
    langs = tuple(
        cp.gen_language(language_seed(cfg.seed, i), spec, cp.language_id(i)) for i in range(cfg.n_languages)
    )
    splits = {}
    for i, lang in enumerate(langs):
        n_train = max(cfg.n_train, cfg.sweep_train) if i < cfg.sweep_languages else cfg.n_train
        splits[lang.language_id] = cp.gen_split(lang, n_train, cfg.n_test, cfg.seed, cfg.heldout_fraction)
    return Universe(cfg, langs, splits)


def run_pretraining(cfg: ExperimentConfig, universe: Universe | None = None):
    """Pretrain on the covered languages. Returns ``(checkpoint, curve)``."""
    universe = universe or build_universe(cfg)
    covered = [lang for lang in universe.languages[: cfg.n_covered]]
    if not covered:
        raise ConfigError("n_covered: pretraining needs at least one covered language")
    corpus = cp.gen_pretrain_corpus(covered, cfg.pretrain_sentences, cfg.seed)
    # Every language's words get a row, as a shared multilingual vocabulary would;
    # only covered languages' rows are trained by pretraining.
    vocab_source = list(corpus.sentences) + [sorted(lang.lexicon()) for lang in universe.languages]
    vocab = build_vocab(vocab_source)
    model_cfg = cfg.model_config(len(vocab))
    params, curve = pretrain(corpus.sentences, vocab, model_cfg, cfg.mlm_config())
    ckpt = Checkpoint.from_params(
        params,
        vocab,
        coverage=corpus.coverage,
        mlm_config=cfg.mlm_config().to_dict(),
        experiment=cfg.to_dict(),
        provenance={"seed": cfg.seed, "config_digest": cfg.digest(), "init_seed": cfg.seed},
    )
    return ckpt, curve


def rand_row_untouched(ckpt: Checkpoint) -> bool:
    """True if the control-token row still equals its seeded initial value."""
    from .model import init_params

    init = init_params(ckpt.model_config, int(ckpt.provenance.get("init_seed", ckpt.provenance.get("seed", 0))))
    return bool(
        np.array_equal(init["tok_emb"].data[RAND_ID], ckpt.arrays["tok_emb"][RAND_ID])
        and init["mlm.bias"].data[RAND_ID] == ckpt.arrays["mlm.bias"][RAND_ID]
    )


def config_from_checkpoint(ckpt: Checkpoint, **overrides) -> ExperimentConfig:
    base = dict(ckpt.experiment)
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(base)


# -- fine-tune / evaluate ---------------------------------------------------------
def run_seed(cfg: ExperimentConfig, language_index: int) -> int:
    # Shared by all strategies of a language: baseline2(p=0) replays baseline1 exactly.
    return 7919 * (cfg.seed + 1) + language_index


def evaluate(params, test, vocab, strategy: Strategy) -> EvalResult:
    pred = predict_batch(params, test, vocab, strategy)
    return span_f1([s.labels for s in test], pred)


def result_row(language, covered, strategy, n_train, seed, res: EvalResult) -> dict:
    row = {
        "language": language,
        "covered": int(covered),
        "strategy": strategy,
        "n_train": n_train,
        "run_seed": seed,
        "precision": res.precision,
        "recall": res.recall,
        "f1": res.f1,
    }
    for t in ENTITY_TYPES:
        tp, n_pred, n_gold = res.counts.get(t, (0, 0, 0))
        row[f"{t}_tp"], row[f"{t}_pred"], row[f"{t}_gold"] = tp, n_pred, n_gold
    return row


_WORKER: dict = {}


def _init_worker(ckpt_path: str | None, ckpt: Checkpoint | None, cfg: ExperimentConfig):
    _WORKER.clear()
    _WORKER["ckpt"] = ckpt if ckpt is not None else load_checkpoint(ckpt_path)
    _WORKER["cfg"] = cfg
    _WORKER["universe"] = build_universe(cfg)


def _run_job(job):
    language, strategy_name, n_train = job
    ckpt: Checkpoint = _WORKER["ckpt"]
    cfg: ExperimentConfig = _WORKER["cfg"]
    uni: Universe = _WORKER["universe"]
    idx = uni.index(language)
    split = uni.splits[language]
    if n_train > len(split.train):
        raise ConfigError(f"sweep_sizes: {n_train} exceeds the {len(split.train)} sentences available for {language}")
    strategy = Strategy.parse(strategy_name, cfg.p_ner)
    seed = run_seed(cfg, idx)
    tuned = finetune(ckpt.params(), split.train[:n_train], ckpt.vocab, strategy, cfg.finetune_config(seed))
    res = evaluate(tuned, split.test, ckpt.vocab, strategy)
    log.info("%s %-10s n=%-4d F1=%.3f", language, strategy_name, n_train, res.f1)
    return result_row(language, language in ckpt.coverage, strategy_name, n_train, seed, res)


def run_grid(ckpt: Checkpoint, cfg: ExperimentConfig, jobs: Sequence[tuple[str, str, int]], workers: int = 1, ckpt_path=None):
    """Fine-tune and evaluate every ``(language, strategy, n_train)`` job.

    Rows come back sorted by job, so the output does not depend on
    ``workers``.
    """
    jobs = sorted(jobs)
    if workers <= 1:
        _init_worker(None, ckpt, cfg)
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_init_worker,
        initargs=(str(ckpt_path) if ckpt_path else None, None if ckpt_path else ckpt, cfg),
    ) as pool:
        return list(pool.map(_run_job, jobs))


def suite_jobs(universe: Universe, strategies: Sequence[str], n_train: int | None = None):
    n = n_train or universe.config.n_train
    return [(lang.language_id, s, n) for lang in universe.languages for s in strategies]


def sweep_jobs(universe: Universe, strategies=("baseline1", "maner-mask"), sizes=None):
    sizes = sizes or universe.config.sweep_sizes
    return [(lang, s, n) for lang in universe.sweep for s in strategies for n in sizes]


# -- commands ---------------------------------------------------------------------
CHECKPOINT_NAME = "checkpoint.bin"

# Keys that shape the languages, vocabulary or encoder; a suite config must agree
# with the checkpoint on all of them.
PRETRAINING_KEYS = (
    "seed", "n_languages", "n_covered", "pretrain_sentences", "ambiguity", "gazetteer_size", "name_parts",
    "n_templates", "heldout_fraction", "layers", "dim", "heads", "ff_dim", "max_len",
    "mlm_p", "mlm_epochs", "mlm_lr", "mlm_batch", "mlm_pack_len",
)


def _ckpt_and_config(ckpt_path, cfg: ExperimentConfig | None):
    path = Path(ckpt_path)
    if not path.is_file():
        raise ConfigError(f"checkpoint: {path} does not exist (run `pretrain` first)")
    ckpt = load_checkpoint(path)
    if cfg is None:
        return ckpt, config_from_checkpoint(ckpt)
    for key in PRETRAINING_KEYS:
        if key in ckpt.experiment and ckpt.experiment[key] != cfg.to_dict()[key]:
            raise ConfigError(f"{key}: config has {cfg.to_dict()[key]!r} but the checkpoint was built with {ckpt.experiment[key]!r}")
    return ckpt, cfg


def cmd_pretrain(cfg: ExperimentConfig, out) -> Path:
    """Pretrain, then write the checkpoint and ``pretrain_curve.csv`` into ``out``."""
    from .checkpoint import save_checkpoint
    from .report import write_csv

    out = Path(out)
    ckpt, curve = run_pretraining(cfg)
    path = out / CHECKPOINT_NAME
    digest = save_checkpoint(ckpt, path)
    write_csv(
        out / "pretrain_curve.csv",
        [{"step": s, "epoch": e, "loss": float(l)} for s, e, l in curve],
        ["step", "epoch", "loss"],
    )
    log.info("checkpoint %s sha256=%s", path, digest)
    return path


def run_suite(ckpt_path, cfg: ExperimentConfig | None = None, strategies=None, workers: int | None = None):
    """Fine-tune and evaluate every strategy on every language. Returns ``(rows, cfg)``."""
    ckpt, cfg = _ckpt_and_config(ckpt_path, cfg)
    uni = build_universe(cfg)
    jobs = suite_jobs(uni, strategies or cfg.strategies)
    rows = run_grid(ckpt, cfg, jobs, workers or cfg.workers, ckpt_path)
    return rows, cfg


def cmd_suite(ckpt_path, out, cfg=None, strategies=None, workers=None) -> list[dict]:
    """``report.csv``, ``table1.csv`` and ``fig2.svg`` for the low-resource suite."""
    from . import report as rp

    out = Path(out)
    rows, _ = run_suite(ckpt_path, cfg, strategies, workers)
    rp.write_csv(out / "report.csv", rows, rp.REPORT_COLUMNS)
    rp.write_csv(out / "table1.csv", rp.table1(rows), rp.TABLE_COLUMNS, [rp.REFERENCE["table1"], rp.NOTE])
    rp.bar_chart_svg(out / "report.csv", out / "fig2.svg")
    return rows


def cmd_ablate_control(ckpt_path, out, cfg=None, workers=None) -> list[dict]:
    """Mask marker against the never-pretrained control marker (``table2.csv``)."""
    from . import report as rp

    ckpt, cfg = _ckpt_and_config(ckpt_path, cfg)
    if not rand_row_untouched(ckpt):
        raise InvalidCheckpoint("control-token embedding differs from its initial value; ablation is meaningless")
    out = Path(out)
    rows, _ = run_suite(ckpt_path, cfg, ("baseline1", "maner-mask", "maner-rand"), workers)
    rp.write_csv(out / "report.csv", rows, rp.REPORT_COLUMNS)
    rp.write_csv(out / "table2.csv", rp.table2(rows), rp.TABLE_COLUMNS, [rp.REFERENCE["table2"], rp.NOTE])
    return rows


def cmd_ablate_coverage(ckpt_path, out, cfg=None, workers=None) -> list[dict]:
    """Baseline 1 against MANER on covered and uncovered languages (``table3.csv``)."""
    from . import report as rp

    ckpt, cfg = _ckpt_and_config(ckpt_path, cfg)
    if not 0 < cfg.n_covered < cfg.n_languages:
        raise ConfigError("n_covered: coverage ablation needs both covered and uncovered languages")
    out = Path(out)
    rows, _ = run_suite(ckpt_path, cfg, ("baseline1", "maner-mask"), workers)
    rp.write_csv(out / "report.csv", rows, rp.REPORT_COLUMNS)
    rp.write_csv(out / "table3.csv", rp.table3(rows), rp.TABLE_COLUMNS, [rp.REFERENCE["table3"], rp.NOTE])
    return rows


def cmd_sweep(ckpt_path, out, cfg=None, workers=None) -> list[dict]:
    """F1 against train-set size on the sweep languages (``fig3.csv``, ``fig3.svg``)."""
    from . import report as rp

    ckpt, cfg = _ckpt_and_config(ckpt_path, cfg)
    if cfg.sweep_languages < 1:
        raise ConfigError("sweep_languages: must be >= 1 for the sweep")
    uni = build_universe(cfg)
    rows = run_grid(ckpt, cfg, sweep_jobs(uni), workers or cfg.workers, ckpt_path)
    out = Path(out)
    fig = rp.fig3_rows(rows)
    rp.write_csv(out / "fig3.csv", fig, ["language", "strategy", "n_train", "f1"])
    rp.line_chart_svg(out / "fig3.csv", out / "fig3.svg")
    return fig


def cmd_eval(ckpt_path, train_path, test_path, strategy_name: str, out, cfg=None, seed: int = 0) -> dict:
    """Fine-tune on a JSONL train file, score a JSONL test file, write ``report.csv``."""
    from . import report as rp

    ckpt, cfg = _ckpt_and_config(ckpt_path, cfg)
    train = cp.read_jsonl(train_path)
    test = cp.read_jsonl(test_path)
    for name, data in (("train", train), ("test", test)):
        for i, s in enumerate(data):
            bad = cp.validate_iob2(s.labels)
            if bad is not None:
                raise ConfigError(f"{name}: record {i} has invalid IOB2 at position {bad.position} ({bad.reason})")
    strategy = Strategy.parse(strategy_name, cfg.p_ner)
    tuned = finetune(ckpt.params(), train, ckpt.vocab, strategy, cfg.finetune_config(seed))
    res = evaluate(tuned, test, ckpt.vocab, strategy)
    row = result_row(Path(test_path).stem, False, strategy.name, len(train), seed, res)
    rp.write_csv(Path(out) / "report.csv", [row], rp.REPORT_COLUMNS)
    return row


def cmd_gen_data(cfg: ExperimentConfig, out) -> list[Path]:
    """Write each language's splits and the pretraining corpus as JSONL files."""
    import json

    out = Path(out)
    uni = build_universe(cfg)
    written = []
    for lang in uni.languages:
        split = uni.splits[lang.language_id]
        for part in ("train", "test"):
            path = out / lang.language_id / f"{part}.jsonl"
            path.parent.mkdir(parents=True, exist_ok=True)
            cp.write_jsonl(path, getattr(split, part))
            written.append(path)
    corpus = cp.gen_pretrain_corpus(uni.languages[: cfg.n_covered], cfg.pretrain_sentences, cfg.seed) if cfg.n_covered else None
    if corpus is not None:
        path = out / "pretrain.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for words in corpus.sentences:
                fh.write(json.dumps({"words": list(words)}, ensure_ascii=False) + "\n")
        written.append(path)
    return written
