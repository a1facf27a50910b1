"""Independent reference implementations used only by the tests."""

import math

import numpy as np

from incctr.model import objective


def pairwise_auc(scores, labels):
    """O(n^2) count of correctly ordered (positive, negative) pairs, ties 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def straight_line_logit(E, ids, cross_w, cross_b, mlp_w, mlp_b, head_w, head_b):
    """Scalar-loop forward pass for one sample with univalent fields."""
    x0 = [v for i in ids for v in E[i]]
    d = len(x0)
    x = list(x0)
    for w, b in zip(cross_w, cross_b):
        s = sum(x[j] * w[j] for j in range(d))
        x = [x0[j] * s + b[j] + x[j] for j in range(d)]
    h = list(x0)
    for W, b in zip(mlp_w, mlp_b):
        h = [max(0.0, sum(h[i] * W[i][o] for i in range(len(h))) + b[o]) for o in range(len(b))]
    top = x + h
    return sum(t * w for t, w in zip(top, head_w)) + head_b[0]


def _derivative(f, x, i, h):
    """Fourth-order central difference of f along coordinate i of array x."""
    old = x[i]
    vals = []
    for step in (2 * h, h, -h, -2 * h):
        x[i] = old + step
        vals.append(f())
    x[i] = old
    return (8 * (vals[1] - vals[2]) - (vals[0] - vals[3])) / (12 * h)


def numeric_gradients(state, ids, labels, teacher_logits, cfg, h=1e-4):
    """Finite-difference gradients of the objective for every network
    parameter and every embedding row touched by ``ids``."""
    f = lambda: objective(state, ids, labels, teacher_logits, cfg)
    out = {}
    for name, p in state.network().items():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            g[i] = _derivative(f, p, i, h)
        out[name] = g
    E = state.embeddings.rows
    rows = np.unique(np.asarray(ids)[np.asarray(ids) >= 0])
    emb = np.zeros((rows.size, E.shape[1]))
    for r_i, r in enumerate(rows):
        for j in range(E.shape[1]):
            emb[r_i, j] = _derivative(f, E, (r, j), h)
    return out, rows, emb


def max_relative_error(analytic, numeric, floor=1e-8):
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(n), floor)))


def gradient_errors(state, fwd_grads, ids, labels, teacher_logits, cfg):
    num, rows, emb = numeric_gradients(state, ids, labels, teacher_logits, cfg)
    errs = {name: max_relative_error(fwd_grads.network[name], g) for name, g in num.items()}
    assert np.array_equal(rows, fwd_grads.emb_rows)
    errs["embeddings"] = max_relative_error(fwd_grads.emb_grad, emb)
    return errs


def log_sigmoid_hp(z):
    return -math.log1p(math.exp(-z)) if z >= 0 else z - math.log1p(math.exp(z))
