"""Command-line entry point: ``maner <command> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 training failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness as H
from .checkpoint import CheckpointError
from .config import ConfigError, ExperimentConfig, load_config
from .model import ConfigError as ModelConfigError
from .model import SequenceTooLong
from .strategies import STRATEGY_NAMES, TrainingDiverged
from .tensor import NonFiniteError

EXIT_OK, EXIT_CONFIG, EXIT_TRAINING = 0, 2, 3

log = logging.getLogger("maner")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory (default: runs)")
    common.add_argument("--workers", type=int, help="parallel fine-tuning processes")
    common.add_argument("--strategy", choices=STRATEGY_NAMES, help="restrict to one strategy")
    common.add_argument("--checkpoint", type=Path, help="checkpoint file (default: <out>/checkpoint.bin)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="maner", description="Mask-token NER experiments on synthetic languages.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pretrain", parents=[common], help="MLM-pretrain the encoder and write a checkpoint")
    sub.add_parser("suite", parents=[common], help="all strategies on every language (table1.csv, fig2.svg)")
    sub.add_parser("ablate-control", parents=[common], help="mask marker vs control marker (table2.csv)")
    sub.add_parser("ablate-coverage", parents=[common], help="covered vs uncovered languages (table3.csv)")
    sub.add_parser("sweep", parents=[common], help="F1 against train size (fig3.csv, fig3.svg)")
    ev = sub.add_parser("eval", parents=[common], help="fine-tune on a JSONL train file and score a JSONL test file")
    ev.add_argument("--train", type=Path, required=True)
    ev.add_argument("--test", type=Path, required=True)
    sub.add_parser("gen-data", parents=[common], help="write every language's splits as JSONL")
    return p


def _config(args) -> ExperimentConfig | None:
    cfg = load_config(args.config) if args.config else None
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if changes:
        cfg = (cfg or ExperimentConfig()).replace(**changes)
    return cfg


def _suite_config(args, ckpt_path) -> ExperimentConfig | None:
    """Explicit config if any flag was given, else the checkpoint's own."""
    if args.config is None and args.seed is None and args.workers is None:
        return None
    from .checkpoint import load_checkpoint

    if not Path(ckpt_path).is_file():
        raise ConfigError(f"checkpoint: {ckpt_path} does not exist (run `pretrain` first)")
    base = H.config_from_checkpoint(load_checkpoint(ckpt_path))
    if args.config:
        from .config import parse_config_text

        base = parse_config_text(Path(args.config).read_text(encoding="utf-8"), base)
    changes = {k: v for k, v in (("seed", args.seed), ("workers", args.workers)) if v is not None}
    return base.replace(**changes)


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    ckpt = args.checkpoint or args.out / H.CHECKPOINT_NAME
    strategies = (args.strategy,) if args.strategy else None
    try:
        if args.command == "pretrain":
            path = H.cmd_pretrain(_config(args) or ExperimentConfig(), args.out)
            print(path)
        elif args.command == "gen-data":
            files = H.cmd_gen_data(_config(args) or ExperimentConfig(), args.out)
            print(f"wrote {len(files)} files under {args.out}")
        elif args.command == "suite":
            rows = H.cmd_suite(ckpt, args.out, _suite_config(args, ckpt), strategies)
            print(f"{len(rows)} runs -> {args.out / 'report.csv'}")
        elif args.command == "ablate-control":
            H.cmd_ablate_control(ckpt, args.out, _suite_config(args, ckpt))
            print(args.out / "table2.csv")
        elif args.command == "ablate-coverage":
            H.cmd_ablate_coverage(ckpt, args.out, _suite_config(args, ckpt))
            print(args.out / "table3.csv")
        elif args.command == "sweep":
            H.cmd_sweep(ckpt, args.out, _suite_config(args, ckpt))
            print(args.out / "fig3.csv")
        elif args.command == "eval":
            if not args.strategy:
                raise ConfigError("strategy: eval needs --strategy")
            row = H.cmd_eval(ckpt, args.train, args.test, args.strategy, args.out, _suite_config(args, ckpt), args.seed or 0)
            print(f"P={row['precision']:.4f} R={row['recall']:.4f} F1={row['f1']:.4f}")
    except (ConfigError, ModelConfigError, CheckpointError, H.InvalidCheckpoint, SequenceTooLong, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, NonFiniteError, RuntimeError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
