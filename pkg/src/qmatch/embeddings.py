"""CBOW word embeddings: a negative-sampling trainer, word2vec text I/O and lookup."""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import atomic_write_text, build_vocabulary
from ._validation import check_positive_int

logger = logging.getLogger(__name__)

OOV_LOW, OOV_HIGH = -0.1, 0.1


class EmbeddingFormatError(ValueError):
    pass


class EmbeddingTable:
    """Fixed token vectors plus a per-session cache of sampled OOV vectors.

    OOV vectors are drawn uniformly from [-0.1, 0.1]^d with a generator keyed
    on ``(oov_seed, token)``, so they do not depend on lookup order.
    """

    def __init__(self, tokens: Sequence[str], vectors: np.ndarray, oov_seed: int = 0):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError(f"vectors must have shape ({len(tokens)}, d), got {vectors.shape}")
        self.tokens = list(tokens)
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in embedding table")
        self.oov_seed = int(oov_seed)
        self._oov_cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        state["_oov_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self.tokens == other.tokens and np.array_equal(self.vectors, other.vectors)

    def lookup(self, token: str) -> np.ndarray:
        i = self.index.get(token)
        if i is not None:
            return self.vectors[i]
        vec = self._oov_cache.get(token)
        if vec is None:
            with self._lock:
                vec = self._oov_cache.get(token)
                if vec is None:
                    vec = self._sample_oov(token)
                    self._oov_cache[token] = vec
        return vec

    def lookup_many(self, tokens: Iterable[str]) -> np.ndarray:
        rows = [self.lookup(t) for t in tokens]
        if not rows:
            return np.zeros((0, self.dim))
        return np.vstack(rows)

    def _sample_oov(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.oov_seed}\x00{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.uniform(OOV_LOW, OOV_HIGH, size=self.dim)
        vec.setflags(write=False)
        return vec

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.vectors.shape).encode())
        for t in self.tokens:
            h.update(t.encode("utf-8"))
            h.update(b"\x00")
        h.update(np.ascontiguousarray(self.vectors, dtype="<f8").tobytes())
        return h.hexdigest()


def lookup(table: EmbeddingTable, token: str) -> np.ndarray:
    return table.lookup(token)


def embedding_cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass(frozen=True)
class CbowConfig:
    window: int = 5
    min_count: int = 5
    dimension: int = 200
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        for name in ("window", "min_count", "dimension", "negative_samples", "epochs", "batch_size"):
            check_positive_int(getattr(self, name), name)
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def _context_matrix(sentences: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    """Centers and their (padded with -1) context ids, in corpus order."""
    centers, contexts = [], []
    offsets = np.concatenate([np.arange(-window, 0), np.arange(1, window + 1)])
    for sent in sentences:
        n = len(sent)
        if n < 2:
            continue
        pos = np.arange(n)[:, None] + offsets[None, :]
        valid = (pos >= 0) & (pos < n)
        ctx = np.where(valid, sent[np.clip(pos, 0, n - 1)], -1)
        centers.append(sent)
        contexts.append(ctx)
    if not centers:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 2 * window), dtype=np.int64)
    return np.concatenate(centers), np.vstack(contexts)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def train_cbow(corpus: Sequence[Sequence[str]], config: CbowConfig = CbowConfig(),
               return_history: bool = False):
    """Train CBOW embeddings with negative sampling.

    Updates are applied per mini-batch of ``config.batch_size`` centre words
    in corpus order, with the learning rate decaying linearly towards zero.
    Training is single-threaded and fully determined by ``config.seed``.

    Returns the table, or ``(table, per_epoch_mean_loss)`` with
    ``return_history=True``.
    """
    vocab = build_vocabulary(corpus, config.min_count)
    if len(vocab) == 0:
        raise ValueError(f"no token reaches min_count={config.min_count}")
    ids = [np.asarray([i for i in vocab.ids(s) if i >= 0], dtype=np.int64) for s in corpus]
    centers, contexts = _context_matrix(ids, config.window)
    if len(centers) == 0:
        raise ValueError("corpus has no sentence with two in-vocabulary tokens")

    rng = np.random.default_rng(config.seed)
    V, d, k = len(vocab), config.dimension, config.negative_samples
    w_in = (rng.random((V, d)) - 0.5) / d
    w_out = np.zeros((V, d))
    noise = np.asarray(vocab.frequency, dtype=np.float64) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    mask_all = contexts >= 0
    keep = mask_all.any(axis=1)
    centers, contexts, mask_all = centers[keep], contexts[keep], mask_all[keep]
    n_centers = len(centers)
    total = n_centers * config.epochs
    labels = np.zeros(k + 1)
    labels[0] = 1.0
    history = []
    seen = 0
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for start in range(0, n_centers, config.batch_size):
            stop = min(start + config.batch_size, n_centers)
            lr = config.learning_rate * max(1e-4, 1.0 - seen / total)
            seen += stop - start
            ctx = contexts[start:stop]
            mask = mask_all[start:stop]
            count = mask.sum(axis=1, keepdims=True)
            safe_ctx = np.where(mask, ctx, 0)
            h = (w_in[safe_ctx] * mask[..., None]).sum(axis=1) / count

            negs = np.searchsorted(noise_cdf, rng.random((stop - start, k)), side="right")
            targets = np.concatenate([centers[start:stop, None], negs], axis=1)
            u = w_out[targets]
            score = np.einsum("bkd,bd->bk", u, h)
            active = np.ones_like(score)
            active[:, 1:] = negs != centers[start:stop, None]
            signed = np.where(labels[None, :] == 1.0, score, -score)
            epoch_loss -= float((_log_sigmoid(signed) * active).sum())

            g = (labels[None, :] - 1.0 / (1.0 + np.exp(-score))) * active * lr
            grad_h = np.einsum("bk,bkd->bd", g, u)
            np.add.at(w_out, targets, g[..., None] * h[:, None, :])
            rows, cols = np.nonzero(mask)
            np.add.at(w_in, ctx[rows, cols], grad_h[rows])
        history.append(epoch_loss / n_centers)
        logger.info("cbow epoch %d loss %.6f", epoch + 1, history[-1])

    table = EmbeddingTable(vocab.tokens, w_in, oov_seed=config.seed)
    if return_history:
        return table, history
    return table


def format_word2vec_text(table: EmbeddingTable) -> str:
    lines = [f"{len(table)} {table.dim}\n"]
    for token, row in zip(table.tokens, table.vectors):
        lines.append(token + " " + " ".join(repr(float(x)) for x in row) + "\n")
    return "".join(lines)


def save_word2vec_text(table: EmbeddingTable, path: str | os.PathLike) -> None:
    """Write the word2vec ``-binary 0`` text format with round-trip-exact floats."""
    atomic_write_text(path, format_word2vec_text(table))


def load_word2vec_text(path: str | os.PathLike, oov_seed: int = 0) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(f"{path}:1: header must be '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingFormatError(f"{path}:1: header must be two integers") from None
        tokens: list[str] = []
        seen: set[str] = set()
        vectors = np.empty((count, dim))
        lineno = 1
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if parts == [""]:
                continue
            if len(tokens) == count:
                raise EmbeddingFormatError(f"{path}:{lineno}: more entries than the header count {count}")
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} values for {word!r}, got {len(values)}")
            if word in seen:
                raise EmbeddingFormatError(f"{path}:{lineno}: duplicate word {word!r}")
            try:
                vectors[len(tokens)] = [float(v) for v in values]
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric value") from None
            seen.add(word)
            tokens.append(word)
    if len(tokens) != count:
        raise EmbeddingFormatError(f"{path}: header declares {count} entries, found {len(tokens)}")
    return EmbeddingTable(tokens, vectors, oov_seed=oov_seed)


class CbowEmbedder(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`train_cbow`.

    ``fit`` takes a sequence of token sequences; ``transform`` maps each token
    sequence to the mean of its word vectors (OOV policy applies).
    """

    def __init__(self, dimension=200, window=5, min_count=5, negative_samples=5,
                 epochs=5, learning_rate=0.025, batch_size=32, seed=0):
        self.dimension = dimension
        self.window = window
        self.min_count = min_count
        self.negative_samples = negative_samples
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None):
        config = CbowConfig(window=self.window, min_count=self.min_count, dimension=self.dimension,
                            negative_samples=self.negative_samples, epochs=self.epochs,
                            learning_rate=self.learning_rate, batch_size=self.batch_size,
                            seed=self.seed)
        self.table_, self.loss_history_ = train_cbow(X, config, return_history=True)
        return self

    def transform(self, X):
        check_is_fitted(self, "table_")
        out = np.zeros((len(X), self.table_.dim))
        for i, toks in enumerate(X):
            if len(toks):
                out[i] = self.table_.lookup_many(toks).mean(axis=0)
        return out
