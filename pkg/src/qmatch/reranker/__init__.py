"""Stage-2 re-ranking with a weight-shared Siamese LSTM."""

from .features import FEATURE_NAMES, handcrafted_features
from .lstm import LstmParams, lstm_step
from .model import (CheckpointError, PaddedSequence, PairExample, RerankerConfig, RerankerModel,
                    encode, forward, gradients, load_model, loss, pad_or_truncate, predict_proba,
                    save_model)
from .nadam import NadamState, nadam_step
from .training import TrainConfig, TrainResult, train, train_examples, write_history_csv

__all__ = [
    "FEATURE_NAMES", "CheckpointError", "LstmParams", "NadamState", "PaddedSequence", "PairExample",
    "RerankerConfig", "RerankerModel", "TrainConfig", "TrainResult", "encode", "forward", "gradients",
    "handcrafted_features", "load_model", "loss", "lstm_step", "nadam_step", "pad_or_truncate",
    "predict_proba", "save_model", "train", "train_examples", "write_history_csv",
]
