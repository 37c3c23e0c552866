import numpy as np

from qmatch.corpus import Question, QuestionPool, build_vocabulary
from qmatch.embeddings import EmbeddingTable
from qmatch.retrieval import build_index, build_relation_matrix, fit_tfidf


def clustered_table(n_words=60, dim=8, n_clusters=12, noise=0.35, seed=0):
    """Words in the same cluster get nearby vectors, so the relation matrix is non-trivial."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_clusters, dim))
    labels = np.arange(n_words) % n_clusters
    vecs = centers[labels] + noise * rng.normal(size=(n_words, dim))
    return EmbeddingTable([f"w{i}" for i in range(n_words)], vecs, oov_seed=seed)


def random_pool(rng, n_questions, n_words=60, max_len=8, prefix="q"):
    qs = []
    for i in range(n_questions):
        toks = tuple(f"w{j}" for j in rng.integers(0, n_words, size=int(rng.integers(1, max_len + 1))))
        qs.append(Question(f"{prefix}{i}", " ".join(toks), toks))
    return QuestionPool(tuple(qs))


def random_query(rng, n_words=60, max_len=6):
    # a few tokens beyond the embedding vocabulary exercise the OOV path
    n = int(rng.integers(1, max_len + 1))
    return [f"w{j}" for j in rng.integers(0, n_words + 5, size=n)]


def random_world(seed, n_questions, tau=0.4, top_r=20):
    rng = np.random.default_rng(seed)
    table = clustered_table(seed=seed)
    pool = random_pool(rng, n_questions)
    vocab = build_vocabulary(pool, 1).extend(table.tokens)
    model = fit_tfidf(pool, vocab)
    M = build_relation_matrix(table, vocab, tau, top_r)
    return rng, table, pool, model, M, build_index(pool, model, M)
