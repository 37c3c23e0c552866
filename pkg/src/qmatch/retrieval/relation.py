"""Sparse symmetric word-relation matrix derived from embedding cosines."""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .._validation import check_choice, check_in_range, check_positive_int
from ..corpus import Vocabulary, atomic_write_text
from ..embeddings import EmbeddingTable

RELATION_KINDS = ("squared", "linear")


class RelationMatrix:
    """Per-term neighbour lists with values in (0, 1]; the unit diagonal is implicit.

    Stored as CSR with column indices ascending inside each row.
    """

    def __init__(self, n_terms: int, indptr: np.ndarray, indices: np.ndarray, data: np.ndarray):
        self.n_terms = int(n_terms)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        if len(self.indptr) != self.n_terms + 1:
            raise ValueError("indptr length must be n_terms + 1")
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)

    @classmethod
    def identity(cls, n_terms: int) -> "RelationMatrix":
        return cls(n_terms, np.zeros(n_terms + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_edges(cls, n_terms: int, edges: dict[tuple[int, int], float]) -> "RelationMatrix":
        """Build from ``{(i, j): m}`` with i < j; both directions are stored."""
        if not edges:
            return cls.identity(n_terms)
        keys = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
        vals = np.array([edges[(int(i), int(j))] for i, j in keys])
        if np.any(keys[:, 0] >= keys[:, 1]):
            raise ValueError("edge keys must satisfy i < j")
        if np.any(vals <= 0) or np.any(vals > 1):
            raise ValueError("relation values must lie in (0, 1]")
        rows = np.concatenate([keys[:, 0], keys[:, 1]])
        cols = np.concatenate([keys[:, 1], keys[:, 0]])
        data = np.concatenate([vals, vals])
        mat = sp.csr_matrix((data, (rows, cols)), shape=(n_terms, n_terms))
        mat.sort_indices()
        return cls(n_terms, mat.indptr, mat.indices, mat.data)

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if i < 0 or i >= self.n_terms:
            return self.indices[:0], self.data[:0]
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def value(self, i: int, j: int) -> float:
        if i == j:
            return 1.0
        ids, vals = self.neighbors(i)
        k = np.searchsorted(ids, j)
        if k < len(ids) and ids[k] == j:
            return float(vals[k])
        return 0.0

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def to_scipy(self, with_diagonal: bool = True) -> sp.csr_matrix:
        mat = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n_terms, self.n_terms))
        if with_diagonal:
            mat = (mat + sp.identity(self.n_terms, format="csr")).tocsr()
            mat.sort_indices()
        return mat

    def to_dense(self) -> np.ndarray:
        return self.to_scipy(with_diagonal=True).toarray()

    def __eq__(self, other) -> bool:
        if not isinstance(other, RelationMatrix):
            return NotImplemented
        return (self.n_terms == other.n_terms and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices) and np.array_equal(self.data, other.data))


def relation_value(cos: float | np.ndarray, kind: str = "squared"):
    clamped = np.maximum(0.0, cos)
    return clamped * clamped if kind == "squared" else clamped


def build_relation_matrix(table: EmbeddingTable, vocab: Vocabulary, tau: float = 0.4,
                          top_r: int = 20, kind: str = "squared",
                          block_size: int = 1024) -> RelationMatrix:
    """Keep, per term, the ``top_r`` strongest relations with value >= ``tau``, then symmetrise.

    Relation values are ``max(0, cos)**2`` (``kind="squared"``) or
    ``max(0, cos)`` (``kind="linear"``). A pair kept by either endpoint is
    stored in both directions with one value computed from the (i < j)
    orientation.
    """
    check_in_range(tau, "tau", 0.0, 1.0)
    check_positive_int(top_r, "top_r")
    check_choice(kind, "kind", RELATION_KINDS)
    V = len(vocab)
    if V < 2:
        return RelationMatrix.identity(V)
    emb = table.lookup_many(vocab.tokens)
    norms = np.linalg.norm(emb, axis=1)
    unit = np.divide(emb, norms[:, None], out=np.zeros_like(emb), where=norms[:, None] > 0)

    pairs: set[tuple[int, int]] = set()
    r = min(top_r, V - 1)
    for start in range(0, V, block_size):
        stop = min(start + block_size, V)
        sims = np.clip(unit[start:stop] @ unit.T, -1.0, 1.0)
        vals = relation_value(sims, kind)
        vals[np.arange(stop - start), np.arange(start, stop)] = -1.0
        # deterministic top-r: sort by (-value, column)
        cand = np.argsort(-vals, axis=1, kind="stable")[:, :r]
        picked = np.take_along_axis(vals, cand, axis=1)
        rows, ks = np.nonzero((picked > 0.0) & (picked >= tau))
        ii = rows + start
        jj = cand[rows, ks]
        pairs.update(zip(np.minimum(ii, jj).tolist(), np.maximum(ii, jj).tolist()))
    edges = {}
    for i, j in sorted(pairs):
        cos = float(np.clip(np.dot(unit[i], unit[j]), -1.0, 1.0))
        v = float(relation_value(cos, kind))
        if v > 0.0:
            edges[(i, j)] = min(v, 1.0)
    return RelationMatrix.from_edges(V, edges)


def export_relation_triples(M: RelationMatrix, tokens: Sequence[str], path: str | os.PathLike) -> None:
    """Write ``term_i<TAB>term_j<TAB>m`` for every stored (i < j) pair."""
    lines = []
    for i in range(M.n_terms):
        ids, vals = M.neighbors(i)
        for j, v in zip(ids.tolist(), vals.tolist()):
            if i < j:
                lines.append(f"{tokens[i]}\t{tokens[j]}\t{v!r}\n")
    atomic_write_text(path, "".join(lines))
