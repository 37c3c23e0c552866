from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .._validation import check_in_range, check_positive_int
from ..corpus import LabeledPair, atomic_write_text
from ..retrieval.relation import RelationMatrix
from ..retrieval.tfidf import TfIdfModel
from .features import handcrafted_features
from .model import (PairExample, RerankerModel, backward_batch, forward_batch, make_example,
                    stack_examples)
from .nadam import NadamState, nadam_step

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    schedule_decay: float = 0.004
    weight_decay: float = 0.0
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.batch_size, "batch_size")
        check_in_range(self.validation_fraction, "validation_fraction", 0.0, 1.0)


def split_indices(n: int, validation_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the last ``round(n * fraction)`` indices go to validation."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * validation_fraction))
    if validation_fraction > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    return np.sort(perm[:n - n_val]), np.sort(perm[n - n_val:])


def build_examples(model: RerankerModel, pairs: Sequence[LabeledPair], tfidf: TfIdfModel,
                   relation: RelationMatrix | None = None) -> list[PairExample]:
    out = []
    for p in pairs:
        xf = handcrafted_features(p.user_question, p.standard_question, tfidf, relation)
        out.append(make_example(model, p.user_question, p.standard_question, xf, p.label))
    return out


def _evaluate(model: RerankerModel, stacked) -> tuple[float, float]:
    X1, l1, X2, l2, XF, y = stacked
    if len(y) == 0:
        return float("nan"), float("nan")
    probs, _ = forward_batch(model, X1, l1, X2, l2, XF)
    p = np.clip(probs, 1e-12, 1 - 1e-12)
    loss = float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))
    acc = float(np.mean((probs >= 0.5) == (y == 1)))
    return loss, acc


@dataclass
class TrainResult:
    model: RerankerModel
    history: list[dict]
    best_epoch: int
    train_indices: np.ndarray
    val_indices: np.ndarray


def train_examples(model: RerankerModel, examples: Sequence[PairExample],
                   config: TrainConfig = TrainConfig()) -> TrainResult:
    """Mini-batch Nadam training; the returned model is the best-validation-loss snapshot.

    ``model`` itself is updated in place and ends in its last-epoch state.
    """
    labels = {e.label for e in examples}
    if labels != {0, 1}:
        raise ValueError("training data must contain both labels")
    train_idx, val_idx = split_indices(len(examples), config.validation_fraction, config.seed)
    logger.info("split: %d train / %d validation", len(train_idx), len(val_idx))
    train_set = [examples[i] for i in train_idx]
    val_set = [examples[i] for i in val_idx]
    train_stacked = stack_examples(model, train_set)
    val_stacked = stack_examples(model, val_set)

    rng = np.random.default_rng([config.seed, 1])
    state = NadamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon,
                       schedule_decay=config.schedule_decay)
    params = model.parameters()
    dropout = model.config.dropout
    X1, l1, X2, l2, XF, y = train_stacked
    history = []
    best, best_loss, best_epoch = model.copy(), np.inf, 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            b = order[start:start + config.batch_size]
            # trim time axis to the batch's longest rows
            t1, t2 = int(l1[b].max()), int(l2[b].max())
            keep = None
            if dropout > 0:
                keep = (rng.random((len(b), model.config.dense_hidden)) >= dropout).astype(np.float64)
            _, cache = forward_batch(model, X1[b, :t1], l1[b], X2[b, :t2], l2[b], XF[b], keep,
                                     keep_cache=True)
            _, grads = backward_batch(model, cache, y[b], config.weight_decay)
            nadam_step(state, params, grads)
        tr_loss, tr_acc = _evaluate(model, train_stacked)
        va_loss, va_acc = _evaluate(model, val_stacked)
        history.append({"epoch": epoch, "train_loss": tr_loss, "train_acc": tr_acc,
                        "val_loss": va_loss, "val_acc": va_acc})
        logger.info("epoch %d train_loss %.5f train_acc %.4f val_loss %.5f val_acc %.4f",
                    epoch, tr_loss, tr_acc, va_loss, va_acc)
        score = va_loss if val_set else tr_loss
        if score < best_loss:
            best, best_loss, best_epoch = model.copy(), score, epoch
    return TrainResult(best, history, best_epoch, train_idx, val_idx)


def train(model: RerankerModel, pairs: Sequence[LabeledPair], config: TrainConfig = TrainConfig(),
          tfidf: TfIdfModel | None = None, relation: RelationMatrix | None = None) -> TrainResult:
    if tfidf is None:
        raise ValueError("a fitted TF-IDF model is required to compute pair features")
    if {p.label for p in pairs} != {0, 1}:
        raise ValueError("training data must contain both labels")
    return train_examples(model, build_examples(model, pairs, tfidf, relation), config)


def format_history_csv(history: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for row in history:
        writer.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])
    return buf.getvalue()


def write_history_csv(history: Sequence[dict], path: str | os.PathLike) -> None:
    atomic_write_text(path, format_history_csv(history))
