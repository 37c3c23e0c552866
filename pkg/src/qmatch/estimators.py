"""Estimator-style wrappers over the functional core.

The functional modules hold the algorithms; these classes only adapt them
to ``fit`` / ``predict`` / ``get_params`` so they compose with the usual
model-selection tooling. Questions are passed as token sequences.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary_labels, check_choice, check_positive_int
from .corpus import Question, QuestionPool, build_vocabulary
from .embeddings import EmbeddingTable
from .retrieval.index import METRICS, build_index
from .retrieval.relation import build_relation_matrix
from .retrieval.tfidf import TfIdfModel, fit_tfidf
from .reranker.features import handcrafted_features
from .reranker.model import RerankerConfig, RerankerModel, make_example, predict_proba
from .reranker.training import TrainConfig, train_examples


def _as_pool(X) -> QuestionPool:
    if isinstance(X, QuestionPool):
        return X
    qs = []
    for i, item in enumerate(X):
        if isinstance(item, Question):
            qs.append(item)
        else:
            toks = tuple(item)
            qs.append(Question(f"q{i}", " ".join(toks), toks))
    return QuestionPool(tuple(qs))


class StageOneRetriever(BaseEstimator):
    """KNN over a question pool.

    ``fit`` indexes the pool (a QuestionPool, or token sequences whose ids
    become ``q0, q1, ...``). ``kneighbors`` returns pool ids and scores.
    """

    def __init__(self, embeddings: EmbeddingTable | None = None, metric="soft-cosine", n_neighbors=50,
                 tau=0.4, top_r=20):
        self.embeddings = embeddings
        self.metric = metric
        self.n_neighbors = n_neighbors
        self.tau = tau
        self.top_r = top_r

    def fit(self, X, y=None):
        check_choice(self.metric, "metric", METRICS)
        check_positive_int(self.n_neighbors, "n_neighbors")
        pool = _as_pool(X)
        vocab = build_vocabulary(pool, 1)
        relation = None
        if self.metric == "soft-cosine":
            if self.embeddings is None:
                raise ValueError("soft-cosine needs an embedding table")
            vocab = vocab.extend(self.embeddings.tokens)
            relation = build_relation_matrix(self.embeddings, vocab, self.tau, self.top_r)
        self.tfidf_ = fit_tfidf(pool, vocab)
        self.relation_ = relation
        self.index_ = build_index(pool, self.tfidf_, relation)
        return self

    def kneighbors(self, X: Sequence[Sequence[str]], n_neighbors: int | None = None):
        check_is_fitted(self, "index_")
        k = self.n_neighbors if n_neighbors is None else check_positive_int(n_neighbors, "n_neighbors")
        ids, scores = [], []
        for toks in X:
            vec = self.index_.vectorize(toks)
            cands = self.index_.knn(vec, k, self.metric) if len(vec) else []
            ids.append([c.question_id for c in cands])
            scores.append(np.array([c.stage1_score for c in cands]))
        return ids, scores

    def predict(self, X):
        """Top-1 pool id per query; None when nothing matches."""
        ids, _ = self.kneighbors(X, 1)
        return [r[0] if r else None for r in ids]


class SiameseReranker(BaseEstimator, ClassifierMixin):
    """Pair classifier: ``X`` is a sequence of (user_tokens, standard_tokens)."""

    def __init__(self, embeddings: EmbeddingTable | None = None, tfidf: TfIdfModel | None = None,
                 relation=None, d_hidden=50, dense_hidden=64, dropout=0.2, max_len=30, epochs=30,
                 batch_size=32, lr=0.002, weight_decay=0.0, validation_fraction=0.1, seed=0):
        self.embeddings = embeddings
        self.tfidf = tfidf
        self.relation = relation
        self.d_hidden = d_hidden
        self.dense_hidden = dense_hidden
        self.dropout = dropout
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _examples(self, model, X, y=None):
        if self.tfidf is None:
            raise ValueError("a fitted TF-IDF model is required for pair features")
        labels = [0] * len(X) if y is None else y
        return [make_example(model, a, b, handcrafted_features(a, b, self.tfidf, self.relation), lab)
                for (a, b), lab in zip(X, labels)]

    def fit(self, X, y):
        if self.embeddings is None:
            raise ValueError("an embedding table is required")
        y = check_binary_labels(y)
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} pairs but y has {len(y)} labels")
        config = RerankerConfig(d_hidden=self.d_hidden, dense_hidden=self.dense_hidden,
                                dropout=self.dropout, max_len=self.max_len)
        model = RerankerModel.init(self.embeddings, config, self.seed)
        result = train_examples(model, self._examples(model, X, y.tolist()),
                                TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                                            weight_decay=self.weight_decay,
                                            validation_fraction=self.validation_fraction, seed=self.seed))
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = predict_proba(self.model_, self._examples(self.model_, X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
