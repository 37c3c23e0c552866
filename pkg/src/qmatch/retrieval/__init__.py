"""Stage-1 retrieval: TF-IDF vectors, relation matrix, inverted-index KNN."""

from .index import (METRICS, Candidate, Index, IndexFingerprintError, ExhaustiveScorer, brute_force_knn, build_index,
                    knn, load_index, save_index)
from .relation import RelationMatrix, build_relation_matrix, export_relation_triples
from .sparse import SparseVector, cosine, soft_cosine
from .tfidf import TfIdfModel, fit_tfidf, vectorize

__all__ = [
    "METRICS", "Candidate", "Index", "IndexFingerprintError", "RelationMatrix", "SparseVector",
    "TfIdfModel", "ExhaustiveScorer", "brute_force_knn", "build_index", "build_relation_matrix", "cosine",
    "export_relation_triples", "fit_tfidf", "knn", "load_index", "save_index", "soft_cosine",
    "vectorize",
]
