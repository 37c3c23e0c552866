"""Independent reference computations used by the tests.

Written directly from the defining formulas with dense arrays or scalar
loops, sharing no code with the package beyond its data types.
"""

import math
from fractions import Fraction

import numpy as np


def dense(vec, n_terms):
    out = np.zeros(n_terms)
    for i, w in vec.to_dict().items():
        out[i] = w
    return out


def dense_soft_cosine(a, b, M_dense):
    if not np.any(a) or not np.any(b):
        return 0.0
    return float(a @ M_dense @ b / math.sqrt((a @ M_dense @ a) * (b @ M_dense @ b)))


def dense_cosine(a, b):
    if not np.any(a) or not np.any(b):
        return 0.0
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def exhaustive_ranking(scores):
    """Positions sorted by (score descending, position ascending)."""
    return sorted(range(len(scores)), key=lambda p: (-scores[p], p))


def mrr_exact(ranks):
    """ranks: 1-based rank of the gold answer per query, or None when absent."""
    return sum((Fraction(1, r) for r in ranks if r is not None), Fraction(0)) / len(ranks)


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def lstm_encode_scalar(p, xs):
    """Final hidden state from per-unit scalar loops over the gate equations."""
    H = p["b_i"].shape[0]
    h = [0.0] * H
    c = [0.0] * H
    for x in xs:
        def pre(g, u):
            return (sum(p[f"W_{g}"][u, k] * x[k] for k in range(len(x)))
                    + sum(p[f"U_{g}"][u, k] * h[k] for k in range(H)) + p[f"b_{g}"][u])
        i = [sig(pre("i", u)) for u in range(H)]
        f = [sig(pre("f", u)) for u in range(H)]
        o = [sig(pre("o", u)) for u in range(H)]
        g = [math.tanh(pre("c", u)) for u in range(H)]
        c = [f[u] * c[u] + i[u] * g[u] for u in range(H)]
        h = [o[u] * math.tanh(c[u]) for u in range(H)]
    return np.array(h)


def head_forward(h1, h2, xf, dense_W, dense_b, out_W, out_b, keep=None, dropout=0.0):
    z = np.concatenate([h1 + h2, np.abs(h1 - h2), xf])
    a = np.maximum(0.0, dense_W @ z + dense_b)
    if keep is not None:
        a = a * keep / (1.0 - dropout)
    return sig(float(out_W @ a + out_b[0]))
