"""Siamese LSTM scorer: shared encoder, sum / Manhattan interaction, dense head."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .._binio import BinaryFormatError, pack, unpack
from .._validation import check_in_range, check_positive_int
from ..corpus import Question, atomic_write_bytes
from ..embeddings import EmbeddingTable
from .features import N_FEATURES
from .lstm import LSTM_PARAM_NAMES, LstmParams, lstm_backward, lstm_forward

MODEL_MAGIC = b"QMRR"
MODEL_VERSION = 1
HEAD_PARAM_NAMES = ("dense_W", "dense_b", "out_W", "out_b")
PARAM_NAMES = LSTM_PARAM_NAMES + HEAD_PARAM_NAMES
PAD_ID = -2
OOV_ID = -1
PROB_EPS = 1e-12


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class RerankerConfig:
    d_hidden: int = 50
    dense_hidden: int = 64
    dropout: float = 0.2
    max_len: int = 30
    n_features: int = N_FEATURES
    forget_bias: float = 1.0

    def __post_init__(self):
        for name in ("d_hidden", "dense_hidden", "max_len", "n_features"):
            check_positive_int(getattr(self, name), name)
        check_in_range(self.dropout, "dropout", 0.0, 1.0)


@dataclass(frozen=True)
class PaddedSequence:
    """First ``length`` positions are real tokens; the rest are padding."""

    tokens: tuple[str, ...]
    ids: tuple[int, ...]
    length: int

    @property
    def max_len(self) -> int:
        return len(self.ids)


def pad_or_truncate(tokens: Sequence[str], L: int, table: EmbeddingTable | None = None) -> PaddedSequence:
    check_positive_int(L, "L")
    kept = tuple(tokens[:L])
    if table is None:
        real = [OOV_ID] * len(kept)
    else:
        real = [table.index.get(t, OOV_ID) for t in kept]
    return PaddedSequence(kept, tuple(real) + (PAD_ID,) * (L - len(kept)), len(kept))


class RerankerModel:
    """One :class:`LstmParams` instance serves both encoder arms."""

    def __init__(self, table: EmbeddingTable, lstm: LstmParams, head: dict[str, np.ndarray],
                 config: RerankerConfig):
        self.table = table
        self.lstm = lstm
        self.config = config
        self.dense_W = head["dense_W"]
        self.dense_b = head["dense_b"]
        self.out_W = head["out_W"]
        self.out_b = head["out_b"]
        expected_in = 2 * config.d_hidden + config.n_features
        if lstm.d_embed != table.dim:
            raise ValueError(f"LSTM input width {lstm.d_embed} != embedding dim {table.dim}")
        if self.dense_W.shape != (config.dense_hidden, expected_in):
            raise ValueError(f"dense_W must be {(config.dense_hidden, expected_in)}, got {self.dense_W.shape}")

    @classmethod
    def init(cls, table: EmbeddingTable, config: RerankerConfig = RerankerConfig(),
             seed: int = 0) -> "RerankerModel":
        rng = np.random.default_rng(seed)
        lstm = LstmParams.init(table.dim, config.d_hidden, rng, forget_bias=config.forget_bias)
        d_in = 2 * config.d_hidden + config.n_features
        lim1 = np.sqrt(6.0 / (d_in + config.dense_hidden))
        lim2 = np.sqrt(6.0 / (config.dense_hidden + 1))
        head = {
            "dense_W": rng.uniform(-lim1, lim1, size=(config.dense_hidden, d_in)),
            "dense_b": np.zeros(config.dense_hidden),
            "out_W": rng.uniform(-lim2, lim2, size=config.dense_hidden),
            "out_b": np.zeros(1),
        }
        return cls(table, lstm, head, config)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array, in checkpoint order."""
        params = self.lstm.as_dict()
        params.update(dense_W=self.dense_W, dense_b=self.dense_b, out_W=self.out_W, out_b=self.out_b)
        return params

    def copy(self) -> "RerankerModel":
        p = {k: v.copy() for k, v in self.parameters().items()}
        lstm = LstmParams(**{k: p[k] for k in LSTM_PARAM_NAMES})
        return RerankerModel(self.table, lstm, {k: p[k] for k in HEAD_PARAM_NAMES}, self.config)

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        for k, v in self.parameters().items():
            v[...] = params[k]

    def pad(self, tokens: Sequence[str]) -> PaddedSequence:
        return pad_or_truncate(tokens, self.config.max_len, self.table)


def embed_sequences(table: EmbeddingTable, seqs: Sequence[PaddedSequence]) -> tuple[np.ndarray, np.ndarray]:
    """Stack embedded real tokens into (batch, max length, dim); padding stays zero."""
    lengths = np.array([s.length for s in seqs], dtype=np.int64)
    T = int(lengths.max()) if len(seqs) else 0
    X = np.zeros((len(seqs), T, table.dim))
    for b, s in enumerate(seqs):
        for t, tok in enumerate(s.tokens[:s.length]):
            X[b, t] = table.lookup(tok)
    return X, lengths


def encode(params: LstmParams, seq: PaddedSequence, table: EmbeddingTable) -> np.ndarray:
    if seq.length < 1:
        raise ValueError("cannot encode an empty sequence")
    X, lengths = embed_sequences(table, [seq])
    h, _ = lstm_forward(params, X, lengths, keep_cache=False)
    return h[0]


@dataclass
class _ForwardCache:
    cache1: list
    cache2: list
    h1: np.ndarray
    h2: np.ndarray
    z: np.ndarray
    a1: np.ndarray
    r: np.ndarray
    keep: np.ndarray | None
    logits: np.ndarray
    probs: np.ndarray


def forward_batch(model: RerankerModel, X1, len1, X2, len2, XF, keep_mask=None, keep_cache=False):
    """Return ``(probabilities, cache)``.

    ``keep_mask`` (batch, dense_hidden) of 0/1 entries enables dropout with
    inverted scaling; ``None`` is evaluation mode.
    """
    if (len1 < 1).any() or (len2 < 1).any():
        raise ValueError("cannot encode an empty sequence")
    h1, c1 = lstm_forward(model.lstm, X1, len1, keep_cache)
    h2, c2 = lstm_forward(model.lstm, X2, len2, keep_cache)
    z = np.concatenate([h1 + h2, np.abs(h1 - h2), XF], axis=1)
    a1 = z @ model.dense_W.T + model.dense_b
    r = np.maximum(a1, 0.0)
    if keep_mask is not None:
        r = r * keep_mask / (1.0 - model.config.dropout)
    logits = r @ model.out_W + model.out_b[0]
    probs = expit(logits)
    cache = _ForwardCache(c1, c2, h1, h2, z, a1, r, keep_mask, logits, probs) if keep_cache else None
    return probs, cache


def bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    # softplus(z) - y z, numerically stable
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def loss(p, y) -> float:
    """Mean binary cross-entropy with p clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def backward_batch(model: RerankerModel, cache: _ForwardCache, y: np.ndarray,
                   weight_decay: float = 0.0) -> tuple[float, dict[str, np.ndarray]]:
    B = len(y)
    H = model.config.d_hidden
    value = bce_from_logits(cache.logits, y)
    dlogit = (cache.probs - y) / B
    grads = {"out_W": cache.r.T @ dlogit, "out_b": np.array([dlogit.sum()])}
    dr = np.outer(dlogit, model.out_W)
    if cache.keep is not None:
        dr = dr * cache.keep / (1.0 - model.config.dropout)
    da1 = dr * (cache.a1 > 0)
    grads["dense_W"] = da1.T @ cache.z
    grads["dense_b"] = da1.sum(axis=0)
    dz = da1 @ model.dense_W
    sgn = np.sign(cache.h1 - cache.h2)
    dh1 = dz[:, :H] + dz[:, H:2 * H] * sgn
    dh2 = dz[:, :H] - dz[:, H:2 * H] * sgn
    g1 = lstm_backward(model.lstm, cache.cache1, dh1)
    g2 = lstm_backward(model.lstm, cache.cache2, dh2)
    for k in LSTM_PARAM_NAMES:
        grads[k] = g1[k] + g2[k]
    if weight_decay:
        for k, w in model.parameters().items():
            if not k.startswith("b") and not k.endswith("_b"):
                grads[k] = grads[k] + weight_decay * w
                value += 0.5 * weight_decay * float(np.sum(w * w))
    return value, {k: grads[k] for k in PARAM_NAMES}


@dataclass(frozen=True)
class PairExample:
    left: PaddedSequence
    right: PaddedSequence
    features: np.ndarray
    label: int = 0


def stack_examples(model: RerankerModel, examples: Sequence[PairExample]):
    X1, l1 = embed_sequences(model.table, [e.left for e in examples])
    X2, l2 = embed_sequences(model.table, [e.right for e in examples])
    XF = np.vstack([e.features for e in examples]) if examples else np.zeros((0, model.config.n_features))
    y = np.array([e.label for e in examples], dtype=np.float64)
    return X1, l1, X2, l2, XF, y


def forward(model: RerankerModel, pair: tuple[PaddedSequence, PaddedSequence], x_f,
            train_mode: bool = False, rng: np.random.Generator | None = None) -> float:
    """Match probability for one pair."""
    X1, l1 = embed_sequences(model.table, [pair[0]])
    X2, l2 = embed_sequences(model.table, [pair[1]])
    keep = None
    if train_mode and model.config.dropout > 0:
        rng = rng if rng is not None else np.random.default_rng()
        keep = (rng.random((1, model.config.dense_hidden)) >= model.config.dropout).astype(np.float64)
    probs, _ = forward_batch(model, X1, l1, X2, l2, np.asarray(x_f, dtype=np.float64)[None, :], keep)
    return float(probs[0])


def gradients(model: RerankerModel, batch: Sequence[PairExample], keep_mask=None,
              weight_decay: float = 0.0) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BCE over ``batch`` and its exact gradient for every parameter."""
    if not batch:
        raise ValueError("batch must be non-empty")
    X1, l1, X2, l2, XF, y = stack_examples(model, batch)
    _, cache = forward_batch(model, X1, l1, X2, l2, XF, keep_mask, keep_cache=True)
    return backward_batch(model, cache, y, weight_decay)


def predict_proba(model: RerankerModel, examples: Sequence[PairExample], batch_size: int = 512) -> np.ndarray:
    out = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        X1, l1, X2, l2, XF, _ = stack_examples(model, chunk)
        probs, _ = forward_batch(model, X1, l1, X2, l2, XF)
        out.append(probs)
    return np.concatenate(out) if out else np.zeros(0)


def make_example(model: RerankerModel, q1: Question | Sequence[str], q2: Question | Sequence[str],
                 features, label: int = 0) -> PairExample:
    t1 = q1.tokens if isinstance(q1, Question) else q1
    t2 = q2.tokens if isinstance(q2, Question) else q2
    return PairExample(model.pad(t1), model.pad(t2), np.asarray(features, dtype=np.float64), int(label))


def save_model(model: RerankerModel, path: str | os.PathLike) -> None:
    meta = {
        "config": asdict(model.config),
        "embedding_fingerprint": model.table.fingerprint(),
        "embedding_dim": model.table.dim,
        "param_order": list(PARAM_NAMES),
    }
    params = model.parameters()
    atomic_write_bytes(path, pack(MODEL_MAGIC, MODEL_VERSION, meta, [(k, params[k]) for k in PARAM_NAMES]))


def load_model(path: str | os.PathLike, table: EmbeddingTable) -> RerankerModel:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        meta, arrays = unpack(data, MODEL_MAGIC, MODEL_VERSION)
    except BinaryFormatError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if meta.get("param_order") != list(PARAM_NAMES):
        raise CheckpointError(f"{path}: unexpected parameter layout")
    if meta["embedding_fingerprint"] != table.fingerprint():
        raise CheckpointError(f"{path}: checkpoint was trained with a different embedding table")
    config = RerankerConfig(**meta["config"])
    lstm = LstmParams(**{k: arrays[k] for k in LSTM_PARAM_NAMES})
    return RerankerModel(table, lstm, {k: arrays[k] for k in HEAD_PARAM_NAMES}, config)
