from __future__ import annotations

from typing import Sequence

import numpy as np

from ..corpus import Question
from ..retrieval.relation import RelationMatrix
from ..retrieval.sparse import cosine, soft_cosine
from ..retrieval.tfidf import TfIdfModel

FEATURE_NAMES = ("shared_tokens", "jaccard", "length_diff", "tfidf_cosine", "soft_cosine")
N_FEATURES = len(FEATURE_NAMES)


def _tokens(q: Question | Sequence[str]) -> Sequence[str]:
    return q.tokens if isinstance(q, Question) else q


def handcrafted_features(q1, q2, tfidf: TfIdfModel, M: RelationMatrix | None = None) -> np.ndarray:
    """Symmetric pair features, in the order of ``FEATURE_NAMES``.

    Without a relation matrix the soft cosine reduces to the hard cosine.
    """
    t1, t2 = _tokens(q1), _tokens(q2)
    s1, s2 = set(t1), set(t2)
    shared = len(s1 & s2)
    union = len(s1 | s2)
    v1, v2 = tfidf.vectorize(t1), tfidf.vectorize(t2)
    hard = cosine(v1, v2)
    soft = hard if M is None else soft_cosine(v1, v2, M)
    return np.array([
        float(shared),
        shared / union if union else 0.0,
        float(abs(len(t1) - len(t2))),
        hard,
        soft,
    ])
