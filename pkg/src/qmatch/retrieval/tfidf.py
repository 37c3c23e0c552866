from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus import QuestionPool, Vocabulary
from .sparse import SparseVector


@dataclass(frozen=True, eq=False)
class TfIdfModel:
    vocabulary: Vocabulary
    idf: np.ndarray
    n_docs: int

    def vectorize(self, tokens: Sequence[str]) -> SparseVector:
        return vectorize(self, tokens)


def fit_tfidf(pool: QuestionPool, vocab: Vocabulary) -> TfIdfModel:
    """Smoothed idf ``ln((1 + N) / (1 + df)) + 1`` with df counted over the pool."""
    n = len(pool)
    if n == 0:
        raise ValueError("cannot fit TF-IDF on an empty pool")
    df = np.zeros(len(vocab))
    for q in pool:
        ids = [i for i in set(vocab.ids(q.tokens)) if i >= 0]
        df[ids] += 1
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    idf.setflags(write=False)
    return TfIdfModel(vocab, idf, n)


def vectorize(model: TfIdfModel, tokens: Sequence[str]) -> SparseVector:
    """Raw term count times idf; out-of-vocabulary tokens are dropped."""
    counts = Counter(i for i in model.vocabulary.ids(tokens) if i >= 0)
    if not counts:
        return SparseVector()
    ids = np.array(sorted(counts), dtype=np.int64)
    tf = np.array([counts[i] for i in ids.tolist()], dtype=np.float64)
    return SparseVector(ids, tf * model.idf[ids])
