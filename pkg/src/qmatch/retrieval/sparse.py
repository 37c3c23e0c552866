"""Sorted sparse term vectors and the two similarity functions defined over them.

These are the straightforward reference implementations; the inverted index in
:mod:`qmatch.retrieval.index` computes the same quantities in bulk.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

if TYPE_CHECKING:
    from .relation import RelationMatrix


class SparseVector:
    """Nonnegative term weights keyed by strictly ascending term id."""

    __slots__ = ("ids", "weights")

    def __init__(self, ids: Iterable[int] = (), weights: Iterable[float] = ()):
        ids = np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.int64)
        weights = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights,
                             dtype=np.float64)
        if ids.shape != weights.shape or ids.ndim != 1:
            raise ValueError("ids and weights must be 1-d and of equal length")
        if len(ids) > 1 and not np.all(np.diff(ids) > 0):
            raise ValueError("term ids must be strictly ascending")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be positive and finite")
        ids.setflags(write=False)
        weights.setflags(write=False)
        self.ids = ids
        self.weights = weights

    @classmethod
    def from_dict(cls, entries: Mapping[int, float]) -> "SparseVector":
        items = sorted((int(k), float(v)) for k, v in entries.items() if v != 0)
        return cls([k for k, _ in items], [v for _, v in items])

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.weights.tolist()))

    def scale(self, c: float) -> "SparseVector":
        return SparseVector(self.ids, self.weights * c)

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.weights, other.weights)

    def __repr__(self) -> str:
        return f"SparseVector({self.to_dict()})"


def dot(a: SparseVector, b: SparseVector) -> float:
    ai, aw = a.ids.tolist(), a.weights.tolist()
    bi, bw = b.ids.tolist(), b.weights.tolist()
    i = j = 0
    total = 0.0
    while i < len(ai) and j < len(bi):
        if ai[i] == bi[j]:
            total += aw[i] * bw[j]
            i += 1
            j += 1
        elif ai[i] < bi[j]:
            i += 1
        else:
            j += 1
    return total


def cosine(a: SparseVector, b: SparseVector) -> float:
    """Hard cosine; 0.0 when either vector is empty or the supports are disjoint."""
    if len(a) == 0 or len(b) == 0:
        return 0.0
    num = dot(a, b)
    if num == 0.0:
        return 0.0
    return num / (math.sqrt(dot(a, a)) * math.sqrt(dot(b, b)))


def soft_inner(a: SparseVector, b: SparseVector, M: "RelationMatrix") -> float:
    """``a^T M b`` with an implicit unit diagonal."""
    bd = b.to_dict()
    total = 0.0
    for i, wa in zip(a.ids.tolist(), a.weights.tolist()):
        acc = bd.get(i, 0.0)
        nbr_ids, nbr_vals = M.neighbors(i)
        for j, m in zip(nbr_ids.tolist(), nbr_vals.tolist()):
            wb = bd.get(j)
            if wb is not None:
                acc += m * wb
        total += wa * acc
    return total


def soft_cosine(a: SparseVector, b: SparseVector, M: "RelationMatrix") -> float:
    """Cosine generalised by the term relation matrix ``M``.

    Not clamped to 1: the relation matrix is not guaranteed positive
    semidefinite.
    """
    if len(a) == 0 or len(b) == 0:
        return 0.0
    # averaging both orders makes the result bitwise symmetric in (a, b)
    num = 0.5 * (soft_inner(a, b, M) + soft_inner(b, a, M))
    if num == 0.0:
        return 0.0
    aa = soft_inner(a, a, M)
    bb = soft_inner(b, b, M)
    assert aa > 0.0 and bb > 0.0
    return num / (math.sqrt(aa) * math.sqrt(bb))
