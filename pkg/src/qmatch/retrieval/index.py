"""Inverted index over the question pool and exact KNN under cosine / soft cosine."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .._binio import BinaryFormatError, pack, unpack
from .._validation import check_choice, check_positive_int
from ..corpus import Question, QuestionPool, Vocabulary, atomic_write_bytes
from .relation import RelationMatrix
from .sparse import SparseVector
from .tfidf import TfIdfModel

METRICS = ("cosine", "soft-cosine")
INDEX_MAGIC = b"QMIX"
INDEX_VERSION = 1


class IndexFingerprintError(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    question_id: str
    stage1_score: float
    stage1_rank: int


TIE_TOLERANCE = 1e-12


def _top_k(hit: np.ndarray, vals: np.ndarray, k: int, ids: tuple[str, ...]) -> list[Candidate]:
    """Rank scored positions; unscored positions follow with score 0.

    Scores within ``TIE_TOLERANCE`` (relative) of their predecessor count as
    tied, so summation-order noise cannot reorder equal scores. Ties go to
    the earlier pool position.
    """
    order = np.lexsort((hit, -vals))
    hit, vals = hit[order], vals[order]
    if len(vals) > 1:
        gap = vals[:-1] - vals[1:] > TIE_TOLERANCE * np.maximum(1.0, vals[:-1])
        group = np.concatenate([[0], np.cumsum(gap)])
        order = np.lexsort((hit, group))
        hit, vals = hit[order], vals[order]
    top, top_scores = hit[:k], vals[:k].tolist()
    if len(top) < k:
        # zero-score tail, in pool order
        need = min(k, len(ids)) - len(top)
        used = np.zeros(len(ids), dtype=bool)
        used[hit] = True
        tail = np.flatnonzero(~used)[:need]
        top = np.concatenate([top, tail])
        top_scores += [0.0] * len(tail)
    return [Candidate(ids[int(p)], float(s), r) for r, (p, s) in enumerate(zip(top, top_scores), start=1)]


class Index:
    """Term-at-a-time inverted index.

    Postings are the CSC view of the document-term matrix. For soft cosine
    the query is first expanded through the relation matrix, so every pool
    question sharing a term with the query or with a stored neighbour of a
    query term is scored; all other questions score exactly zero.
    """

    def __init__(self, pool: QuestionPool, model: TfIdfModel, relation: RelationMatrix | None = None):
        if relation is not None and relation.n_terms != len(model.vocabulary):
            raise ValueError("relation matrix size does not match the vocabulary")
        self.pool = pool
        self.model = model
        self.relation = relation
        self.vectors = [model.vectorize(q.tokens) for q in pool]
        V = len(model.vocabulary)
        indptr = np.zeros(len(pool) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(v) for v in self.vectors])
        indices = np.concatenate([v.ids for v in self.vectors]) if self.vectors else np.zeros(0, np.int64)
        data = np.concatenate([v.weights for v in self.vectors]) if self.vectors else np.zeros(0)
        self.doc_term = sp.csr_matrix((data, indices, indptr), shape=(len(pool), V))
        self.postings = self.doc_term.tocsc()
        self.postings.sort_indices()
        self.norms = np.sqrt(np.asarray(self.doc_term.multiply(self.doc_term).sum(axis=1)).ravel())
        if relation is not None:
            self._m_full = relation.to_scipy(with_diagonal=True)
            self_inner = np.asarray((self.doc_term @ self._m_full).multiply(self.doc_term).sum(axis=1)).ravel()
            self.soft_norms = np.sqrt(self_inner)
        else:
            self._m_full = None
            self.soft_norms = None

    def __len__(self) -> int:
        return len(self.pool)

    @property
    def vocabulary(self) -> Vocabulary:
        return self.model.vocabulary

    @property
    def metrics(self) -> tuple[str, ...]:
        return METRICS if self.relation is not None else METRICS[:1]

    def vectorize(self, tokens) -> SparseVector:
        return self.model.vectorize(tokens)

    def _expand(self, query: SparseVector, metric: str) -> tuple[np.ndarray, np.ndarray, float]:
        """Query weights per term after relation expansion, and the query norm."""
        if metric == "cosine":
            return query.ids, query.weights, float(np.sqrt(np.dot(query.weights, query.weights)))
        rows = self._m_full[query.ids]
        expanded = sp.csr_matrix(rows.T @ query.weights.reshape(-1, 1))
        expanded = expanded.tocoo()
        order = np.argsort(expanded.row, kind="stable")
        terms = expanded.row[order].astype(np.int64)
        weights = expanded.data[order]
        self_inner = float(np.dot(weights[np.searchsorted(terms, query.ids)], query.weights))
        return terms, weights, float(np.sqrt(self_inner))

    def scores(self, query: SparseVector, metric: str = "cosine") -> tuple[np.ndarray, np.ndarray]:
        """Return ``(doc_positions, scores)`` for every pool question with a positive score."""
        check_choice(metric, "metric", self.metrics)
        if len(query) == 0:
            return np.zeros(0, np.int64), np.zeros(0)
        terms, weights, qnorm = self._expand(query, metric)
        p = self.postings
        starts, ends = p.indptr[terms], p.indptr[terms + 1]
        lengths = ends - starts
        if lengths.sum() == 0:
            return np.zeros(0, np.int64), np.zeros(0)
        take = np.concatenate([np.arange(s, e) for s, e in zip(starts.tolist(), ends.tolist())])
        docs = p.indices[take]
        contrib = p.data[take] * np.repeat(weights, lengths)
        acc = np.bincount(docs, weights=contrib, minlength=len(self.pool))
        hit = np.flatnonzero(acc > 0)
        norms = self.norms if metric == "cosine" else self.soft_norms
        return hit, acc[hit] / (qnorm * norms[hit])

    def knn(self, query: SparseVector, k: int, metric: str = "cosine") -> list[Candidate]:
        check_positive_int(k, "k")
        hit, vals = self.scores(query, metric)
        return _top_k(hit, vals, k, self.pool.ids)


def build_index(pool: QuestionPool, model: TfIdfModel, relation: RelationMatrix | None = None) -> Index:
    if len(pool) == 0:
        raise ValueError("cannot index an empty pool")
    return Index(pool, model, relation)


def knn(index: Index, query: SparseVector, k: int, metric: str = "cosine") -> list[Candidate]:
    return index.knn(query, k, metric)


class ExhaustiveScorer:
    """Reference scorer: every pool question is scored, no postings involved.

    Pool vectors are computed once; each query is one sparse matrix-vector
    product over the full document-term matrix.
    """

    def __init__(self, pool: QuestionPool, model: TfIdfModel, relation: RelationMatrix | None = None):
        self.ids = pool.ids
        self.model = model
        self.relation = relation
        rows = [model.vectorize(q.tokens) for q in pool]
        V = len(model.vocabulary)
        self.D = sp.csr_matrix((np.concatenate([r.weights for r in rows] + [np.zeros(0)]),
                                np.concatenate([r.ids for r in rows] + [np.zeros(0, np.int64)]),
                                np.concatenate([[0], np.cumsum([len(r) for r in rows])])), shape=(len(rows), V))
        self.M = relation.to_scipy(with_diagonal=True) if relation is not None else sp.identity(V, format="csr")

    def knn(self, query: SparseVector, k: int, metric: str = "cosine") -> list[Candidate]:
        check_positive_int(k, "k")
        check_choice(metric, "metric", METRICS)
        if metric == "soft-cosine" and self.relation is None:
            raise ValueError("soft-cosine needs a relation matrix")
        V = self.D.shape[1]
        q = np.zeros(V)
        q[query.ids] = query.weights
        M = self.M if metric == "soft-cosine" else sp.identity(V, format="csr")
        Mq = M @ q
        num = self.D @ Mq
        self_inner = np.asarray((self.D @ M).multiply(self.D).sum(axis=1)).ravel()
        hit = np.flatnonzero(num > 0) if len(query) else np.zeros(0, np.int64)
        vals = num[hit] / (np.sqrt(q @ Mq) * np.sqrt(self_inner[hit]))
        return _top_k(hit, vals, k, self.ids)


def brute_force_knn(pool: QuestionPool, model: TfIdfModel, query: SparseVector, k: int,
                    metric: str = "cosine", relation: RelationMatrix | None = None) -> list[Candidate]:
    """Exhaustive reference ranking; build an ExhaustiveScorer to reuse across queries."""
    return ExhaustiveScorer(pool, model, relation).knn(query, k, metric)


def save_index(index: Index, path: str | os.PathLike) -> None:
    """Persist pool, vocabulary, idf and relation matrix in one versioned file."""
    vocab = index.vocabulary
    meta = {
        "vocab_fingerprint": vocab.fingerprint(),
        "tokenizer": index.pool.tokenizer,
        "n_docs": index.model.n_docs,
        "vocab": {"tokens": list(vocab.tokens), "frequency": list(vocab.frequency),
                  "doc_frequency": list(vocab.doc_frequency), "min_count": vocab.min_count},
        "pool": [[q.id, q.category, q.text, list(q.tokens)] for q in index.pool],
        "has_relation": index.relation is not None,
    }
    arrays = [("idf", index.model.idf)]
    if index.relation is not None:
        arrays += [("rel_indptr", index.relation.indptr), ("rel_indices", index.relation.indices),
                   ("rel_data", index.relation.data)]
    atomic_write_bytes(path, pack(INDEX_MAGIC, INDEX_VERSION, meta, arrays))


def load_index(path: str | os.PathLike, vocabulary: Vocabulary | None = None) -> Index:
    """Load an index; if ``vocabulary`` is given its fingerprint must match."""
    with open(path, "rb") as fh:
        meta, arrays = unpack(fh.read(), INDEX_MAGIC, INDEX_VERSION)
    try:
        v = meta["vocab"]
        vocab = Vocabulary(tuple(v["tokens"]), tuple(v["frequency"]), tuple(v["doc_frequency"]),
                           v["min_count"])
        if vocab.fingerprint() != meta["vocab_fingerprint"]:
            raise BinaryFormatError("stored vocabulary does not match its fingerprint")
        if vocabulary is not None and vocabulary.fingerprint() != meta["vocab_fingerprint"]:
            raise IndexFingerprintError("index was built with a different vocabulary")
        pool = QuestionPool(tuple(Question(qid, text, tuple(toks), cat) for qid, cat, text, toks in meta["pool"]),
                            meta["tokenizer"])
        model = TfIdfModel(vocab, arrays["idf"], meta["n_docs"])
        relation = None
        if meta["has_relation"]:
            relation = RelationMatrix(len(vocab), arrays["rel_indptr"], arrays["rel_indices"], arrays["rel_data"])
    except KeyError as exc:
        raise BinaryFormatError(f"index file missing field {exc}") from None
    return Index(pool, model, relation)
