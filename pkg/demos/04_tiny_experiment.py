"""
A whole experiment in miniature
===============================

Pretrain a one-layer encoder on a few synthetic languages, then fine-tune
each strategy on a held-out language and a covered one. The same code
paths run the full suite; only the sizes differ. Takes about twenty seconds.
"""

import tempfile
from pathlib import Path

from maner import harness as H
from maner import report as rp
from maner.config import ExperimentConfig

cfg = ExperimentConfig(
    n_languages=4, n_covered=3, n_train=100, n_test=100, sweep_languages=1, sweep_sizes=(25, 100), sweep_train=100,
    pretrain_sentences=600, layers=1, dim=32, heads=2, ff_dim=64, mlm_epochs=6, mlm_lr=1e-3, ft_epochs=30, ft_lr=1e-3,
    strategies=("baseline1", "baseline2", "maner-mask", "maner-rand"),
)
out = Path(tempfile.mkdtemp(prefix="maner-demo-"))

# %% pretraining writes a checkpoint and its loss curve
ckpt = H.cmd_pretrain(cfg, out)
curve = rp.read_csv(out / "pretrain_curve.csv")
print("MLM loss", curve[0]["loss"], "->", curve[-1]["loss"])

# %% every strategy on every language
rows = H.cmd_suite(ckpt, out)
for r in rp.read_csv(out / "table1.csv"):
    print(r["strategy"], r["mean_f1"], r["relative_delta"])
print(open(out / "table1.csv").read().splitlines()[-2])

# %% F1 against train size
H.cmd_sweep(ckpt, out)
print(rp.sweep_gains(rp.read_csv(out / "fig3.csv")))
print("charts:", sorted(p.name for p in out.glob("*.svg")))
