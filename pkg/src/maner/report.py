"""Report emission: per-run CSV rows, aggregate tables, and SVG charts.

Charts are always drawn from a CSV file that was written first, and every
bar or point carries the exact CSV string of its value in a
``data-value`` attribute.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .metrics import macro_average
from .model import ENTITY_TYPES

REPORT_COLUMNS = (
    ["language", "covered", "strategy", "n_train", "run_seed", "precision", "recall", "f1"]
    + [f"{t}_{k}" for t in ENTITY_TYPES for k in ("tp", "pred", "gold")]
)

# Reference scores of XLM-R large on WikiANN (100 low-resource languages,
# 100 training sentences each). Printed as footnotes for context only.
REFERENCE = {
    "table1": "reference (XLM-R large, WikiANN, 100 languages): baseline1 0.649, baseline2 0.643, maner-mask 0.715",
    "table2": "reference (XLM-R large, WikiANN, 100 languages): maner-mask 0.715, maner-rand 0.679",
    "table3": "reference (XLM-R large, WikiANN, languages with >= 0.5GB pretraining text): baseline1 0.603, maner-mask 0.705",
}
NOTE = "desk-scale synthetic run; reference figures are context, not targets"


def fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def write_csv(path, rows: Iterable[dict], columns: Sequence[str], footnotes: Sequence[str] = ()) -> Path:
    """Write rows with fixed float formatting; footnotes become trailing ``# `` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])
        for note in footnotes:
            fh.write(f"# {note}\n")
    return path


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by :func:`write_csv` (values stay strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


# -- aggregation ------------------------------------------------------------------
def mean_f1(rows, strategy: str, covered: bool | None = None) -> float:
    vals = [r["f1"] for r in rows if r["strategy"] == strategy and (covered is None or bool(r["covered"]) == covered)]
    return macro_average(vals) if vals else float("nan")


def pooled_f1(rows) -> float:
    tp = sum(r[f"{t}_tp"] for r in rows for t in ENTITY_TYPES)
    n_pred = sum(r[f"{t}_pred"] for r in rows for t in ENTITY_TYPES)
    n_gold = sum(r[f"{t}_gold"] for r in rows for t in ENTITY_TYPES)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def _rel(a: float, base: float) -> float:
    return (a - base) / base if base else float("nan")


def _strategies(rows) -> list[str]:
    return list(dict.fromkeys(r["strategy"] for r in rows))


def _summary(rows, strategies, group: str, base: str = "baseline1") -> list[dict]:
    by_lang = {(r["language"], r["strategy"]): r["f1"] for r in rows}
    base_f1 = mean_f1(rows, base) if any(r["strategy"] == base for r in rows) else float("nan")
    out = []
    for s in strategies:
        sel = [r for r in rows if r["strategy"] == s]
        if not sel:
            continue
        f1 = mean_f1(rows, s)
        deltas = [
            by_lang[(r["language"], s)] - by_lang[(r["language"], base)]
            for r in sel
            if (r["language"], base) in by_lang
        ]
        out.append({
            "group": group,
            "strategy": s,
            "n_languages": len(sel),
            "mean_f1": f1,
            "delta_f1": f1 - base_f1,
            "relative_delta": _rel(f1, base_f1),
            "pooled_f1": pooled_f1(sel),
            "max_language_delta": max(deltas) if deltas else float("nan"),
            "wins_over_baseline1": sum(d > 0 for d in deltas),
        })
    return out


TABLE_COLUMNS = [
    "group", "strategy", "n_languages", "mean_f1", "delta_f1", "relative_delta",
    "pooled_f1", "max_language_delta", "wins_over_baseline1",
]


def table1(rows) -> list[dict]:
    """Mean F1 per strategy over all languages, with deltas against Baseline 1."""
    return _summary(rows, _strategies(rows), "all")


def table2(rows) -> list[dict]:
    """Mask marker against the control marker, on covered and on all languages."""
    strategies = [s for s in ("baseline1", "maner-mask", "maner-rand") if s in _strategies(rows)]
    covered = [r for r in rows if r["covered"]]
    return _summary(covered, strategies, "covered") + _summary(rows, strategies, "all")


def table3(rows) -> list[dict]:
    """Baseline 1 against MANER, split by pretraining coverage."""
    strategies = [s for s in ("baseline1", "maner-mask") if s in _strategies(rows)]
    out = []
    for group, flag in (("covered", True), ("uncovered", False)):
        sub = [r for r in rows if bool(r["covered"]) == flag]
        if not sub:
            raise ValueError(f"no {group} languages in the suite")
        out += _summary(sub, strategies, group)
    return out


def fig3_rows(rows) -> list[dict]:
    keep = ("language", "strategy", "n_train", "f1")
    return [{k: r[k] for k in keep} for r in sorted(rows, key=lambda r: (r["language"], r["strategy"], r["n_train"]))]


def sweep_gains(fig3: list[dict], base="baseline1", other="maner-mask") -> dict[int, float]:
    """Mean over languages of F1(other) - F1(base) at each train size (floats or CSV strings)."""
    vals = defaultdict(dict)
    for r in fig3:
        vals[(r["language"], int(r["n_train"]))][r["strategy"]] = float(r["f1"])
    gains = defaultdict(list)
    for (_, n), d in vals.items():
        if base in d and other in d:
            gains[n].append(d[other] - d[base])
    return {n: macro_average(g) for n, g in sorted(gains.items())}


# -- SVG ------------------------------------------------------------------------------
PALETTE = {"baseline1": "#4e79a7", "baseline2": "#f28e2b", "maner-mask": "#59a14f", "maner-rand": "#e15759"}


def _svg(width, height, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _y_axis(x0, y0, h, body):
    for k in range(6):
        v = k / 5
        y = y0 + h - v * h
        body.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
        body.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.1f}</text>')
    body.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 + h}" stroke="black"/>')
    body.append(f'<text x="12" y="{y0 + h / 2:.1f}" transform="rotate(-90 12 {y0 + h / 2:.1f})" text-anchor="middle">F1</text>')


def _legend(strategies, x, y, body):
    for i, s in enumerate(strategies):
        body.append(f'<rect x="{x}" y="{y + 16 * i}" width="10" height="10" fill="{PALETTE.get(s, "#777")}"/>')
        body.append(f'<text x="{x + 14}" y="{y + 9 + 16 * i}">{escape(s)}</text>')


def bar_chart_svg(csv_path, svg_path, title="F1 per language") -> Path:
    """Grouped bars (one group per language) drawn from a report CSV."""
    rows = read_csv(csv_path)
    languages = list(dict.fromkeys(r["language"] for r in rows))
    strategies = list(dict.fromkeys(r["strategy"] for r in rows))
    value = {(r["language"], r["strategy"]): r["f1"] for r in rows}
    bw = 7
    gw = bw * len(strategies) + 8
    x0, y0, h = 50, 30, 240
    width = x0 + gw * len(languages) + 130
    body = [f'<text x="{x0}" y="18" font-size="13">{escape(title)}</text>']
    _y_axis(x0, y0, h, body)
    for gi, lang in enumerate(languages):
        gx = x0 + 4 + gi * gw
        for si, s in enumerate(strategies):
            if (lang, s) not in value:
                continue
            raw = value[(lang, s)]
            bh = float(raw) * h
            body.append(
                f'<rect x="{gx + si * bw}" y="{y0 + h - bh:.2f}" width="{bw - 1}" height="{bh:.2f}" '
                f'fill="{PALETTE.get(s, "#777")}" data-language="{lang}" data-strategy="{s}" data-value="{raw}">'
                f"<title>{lang} {s} {raw}</title></rect>"
            )
        lx = gx + gw / 2 - 4
        body.append(f'<text x="{lx:.1f}" y="{y0 + h + 14}" text-anchor="middle" font-size="9">{lang}</text>')
    _legend(strategies, x0 + gw * len(languages) + 16, y0, body)
    path = Path(svg_path)
    path.write_text(_svg(width, y0 + h + 30, body), encoding="utf-8")
    return path


def line_chart_svg(csv_path, svg_path, title="F1 against training-set size") -> Path:
    """Per-language thin lines plus the across-language mean, drawn from a sweep CSV."""
    rows = read_csv(csv_path)
    sizes = sorted({int(r["n_train"]) for r in rows})
    strategies = list(dict.fromkeys(r["strategy"] for r in rows))
    languages = list(dict.fromkeys(r["language"] for r in rows))
    x0, y0, w, h = 50, 30, 420, 240
    lo, hi = math.log(sizes[0]), math.log(sizes[-1]) if len(sizes) > 1 else math.log(sizes[0]) + 1

    def px(n):
        return x0 + 10 + (math.log(n) - lo) / ((hi - lo) or 1) * (w - 20)

    body = [f'<text x="{x0}" y="18" font-size="13">{escape(title)}</text>']
    _y_axis(x0, y0, h, body)
    body.append(f'<line x1="{x0}" y1="{y0 + h}" x2="{x0 + w}" y2="{y0 + h}" stroke="black"/>')
    for n in sizes:
        body.append(f'<text x="{px(n):.1f}" y="{y0 + h + 14}" text-anchor="middle">{n}</text>')
    body.append(f'<text x="{x0 + w / 2}" y="{y0 + h + 30}" text-anchor="middle">training sentences</text>')
    for s in strategies:
        color = PALETTE.get(s, "#777")
        for lang in languages:
            pts = sorted((int(r["n_train"]), r["f1"]) for r in rows if r["strategy"] == s and r["language"] == lang)
            if not pts:
                continue
            coords = " ".join(f"{px(n):.2f},{y0 + h - float(v) * h:.2f}" for n, v in pts)
            body.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-opacity="0.35"/>')
            for n, v in pts:
                body.append(
                    f'<circle cx="{px(n):.2f}" cy="{y0 + h - float(v) * h:.2f}" r="2" fill="{color}" '
                    f'data-language="{lang}" data-strategy="{s}" data-n="{n}" data-value="{v}"/>'
                )
        means = []
        for n in sizes:
            vals = [float(r["f1"]) for r in rows if r["strategy"] == s and int(r["n_train"]) == n]
            if vals:
                means.append((n, sum(vals) / len(vals)))
        coords = " ".join(f"{px(n):.2f},{y0 + h - m * h:.2f}" for n, m in means)
        body.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2.5"/>')
    _legend(strategies, x0 + w + 16, y0, body)
    path = Path(svg_path)
    path.write_text(_svg(x0 + w + 140, y0 + h + 40, body), encoding="utf-8")
    return path
