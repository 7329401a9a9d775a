"""Independent reference implementations used by the tests.

Nothing here imports the code under test beyond plain data types.
"""

import math
from itertools import product

import numpy as np


def naive_matmul(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return np.array(out)


def central_difference(f, arrays, h=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. each array (mutated in place, then restored)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = f()
            arr[idx] = old - h
            down = f()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def nll(logit_row, label):
    m = max(logit_row)
    lse = m + math.log(sum(math.exp(x - m) for x in logit_row))
    return lse - logit_row[label]


def brute_spans(labels):
    """Spans by scanning every (start, end) window; independent of the scorer."""
    spans = set()
    n = len(labels)
    for start, end in product(range(n), range(1, n + 1)):
        if end <= start:
            continue
        first = labels[start]
        if first == "O":
            continue
        etype = first[2:]
        # a span opens at B-X, or at I-X that does not continue a same-type run
        opens = first.startswith("B-") or start == 0 or labels[start - 1] == "O" or labels[start - 1][2:] != etype
        if not opens:
            continue
        if any(labels[i] != "I-" + etype for i in range(start + 1, end)):
            continue
        closes = end == n or labels[end] != "I-" + etype
        if closes:
            spans.add((etype, start, end))
    return spans


def brute_f1(gold, pred):
    tp = n_pred = n_gold = 0
    for g, p in zip(gold, pred):
        gs, ps = brute_spans(g), brute_spans(p)
        tp += sum(1 for s in ps if s in gs)
        n_pred += len(ps)
        n_gold += len(gs)
    prec = tp / n_pred if n_pred else 0.0
    rec = tp / n_gold if n_gold else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return tp, n_pred, n_gold, prec, rec, f1


def adam_reference(p0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam recurrences evaluated by hand, one float at a time."""
    p, m, v = float(p0), 0.0, 0.0
    trace = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p = p - lr * m_hat / (math.sqrt(v_hat) + eps)
        trace.append(p)
    return trace
