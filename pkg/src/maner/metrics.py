"""Entity-level precision / recall / F1 over IOB2 label sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .model import ENTITY_TYPES


class Span(NamedTuple):
    type: str
    start: int
    end: int  # exclusive


def extract_spans(labels: Sequence[str]) -> list[Span]:
    """Maximal ``B-X I-X*`` runs as spans, sorted by start.

    An ``I-X`` that does not continue a span of type X opens a new span of
    type X (the same repair is applied to gold and predicted sequences).
    """
    spans: list[Span] = []
    cur_type, cur_start = None, 0
    for i, label in enumerate(labels):
        if label.startswith("B-") or (label.startswith("I-") and label[2:] != cur_type):
            if cur_type is not None:
                spans.append(Span(cur_type, cur_start, i))
            cur_type, cur_start = label[2:], i
        elif not label.startswith("I-"):
            if cur_type is not None:
                spans.append(Span(cur_type, cur_start, i))
            cur_type = None
    if cur_type is not None:
        spans.append(Span(cur_type, cur_start, len(labels)))
    return spans


def _prf(tp: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f1: float
    counts: dict = field(default_factory=dict)  # type -> (tp, predicted, gold)
    sentences: int = 0

    @property
    def tp(self) -> int:
        return sum(c[0] for c in self.counts.values())

    @property
    def n_pred(self) -> int:
        return sum(c[1] for c in self.counts.values())

    @property
    def n_gold(self) -> int:
        return sum(c[2] for c in self.counts.values())

    def type_f1(self, etype: str) -> float:
        return _prf(*self.counts[etype])[2]


def span_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> EvalResult:
    """Exact-match span scoring, micro-averaged over all sentences."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    counts = {t: [0, 0, 0] for t in ENTITY_TYPES}
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ValueError(f"sentence {i}: {len(g)} gold labels but {len(p)} predicted")
        gs, ps = set(extract_spans(g)), set(extract_spans(p))
        for span in gs & ps:
            counts.setdefault(span.type, [0, 0, 0])[0] += 1
        for span in ps:
            counts.setdefault(span.type, [0, 0, 0])[1] += 1
        for span in gs:
            counts.setdefault(span.type, [0, 0, 0])[2] += 1
    tp = sum(c[0] for c in counts.values())
    n_pred = sum(c[1] for c in counts.values())
    n_gold = sum(c[2] for c in counts.values())
    p, r, f = _prf(tp, n_pred, n_gold)
    return EvalResult(p, r, f, {t: tuple(c) for t, c in counts.items()}, len(gold))


def macro_average(results: Sequence[EvalResult | float]) -> float:
    """Unweighted mean of per-language F1."""
    if not results:
        raise ValueError("macro_average of an empty list")
    values = [r.f1 if isinstance(r, EvalResult) else float(r) for r in results]
    return sum(values) / len(values)
