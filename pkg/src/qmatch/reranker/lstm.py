"""LSTM cell, masked batch unrolling and backpropagation through time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

GATES = ("i", "f", "c", "o")
LSTM_PARAM_NAMES = tuple(f"W_{g}" for g in GATES) + tuple(f"U_{g}" for g in GATES) + tuple(
    f"b_{g}" for g in GATES)


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_c: np.ndarray
    U_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def d_hidden(self) -> int:
        return self.b_i.shape[0]

    @property
    def d_embed(self) -> int:
        return self.W_i.shape[1]

    @classmethod
    def zeros(cls, d_embed: int, d_hidden: int) -> "LstmParams":
        return cls(**{n: np.zeros(_shape(n, d_embed, d_hidden)) for n in LSTM_PARAM_NAMES})

    @classmethod
    def init(cls, d_embed: int, d_hidden: int, rng: np.random.Generator,
             forget_bias: float = 1.0) -> "LstmParams":
        """Uniform Xavier weights, zero biases except the forget gate."""
        arrays = {}
        for name in LSTM_PARAM_NAMES:
            shape = _shape(name, d_embed, d_hidden)
            if name.startswith("b"):
                arrays[name] = np.full(shape, forget_bias if name == "b_f" else 0.0)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                arrays[name] = rng.uniform(-limit, limit, size=shape)
        return cls(**arrays)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in LSTM_PARAM_NAMES}

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        W = np.vstack([self.W_i, self.W_f, self.W_c, self.W_o])
        U = np.vstack([self.U_i, self.U_f, self.U_c, self.U_o])
        b = np.concatenate([self.b_i, self.b_f, self.b_c, self.b_o])
        return W, U, b


def _shape(name: str, d_embed: int, d_hidden: int) -> tuple[int, ...]:
    if name.startswith("W"):
        return (d_hidden, d_embed)
    if name.startswith("U"):
        return (d_hidden, d_hidden)
    return (d_hidden,)


def lstm_step(params: LstmParams, x_t, h_prev, c_prev):
    """One cell update. Works on single vectors or on row-stacked batches."""
    i = sigmoid(x_t @ params.W_i.T + h_prev @ params.U_i.T + params.b_i)
    f = sigmoid(x_t @ params.W_f.T + h_prev @ params.U_f.T + params.b_f)
    c_tilde = np.tanh(x_t @ params.W_c.T + h_prev @ params.U_c.T + params.b_c)
    c = i * c_tilde + f * c_prev
    o = sigmoid(x_t @ params.W_o.T + h_prev @ params.U_o.T + params.b_o)
    h = o * np.tanh(c)
    return h, c


@dataclass
class _StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray
    active: np.ndarray


def lstm_forward(params: LstmParams, X: np.ndarray, lengths: np.ndarray, keep_cache: bool = True):
    """Run the cell over ``X`` (batch, time, d_embed) and return each row's last real state.

    Steps at or beyond a row's length leave its state untouched, so the result
    does not depend on how much padding follows.
    """
    B = X.shape[0]
    H = params.d_hidden
    W, U, b = params.stacked()
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    T = int(lengths.max()) if B else 0
    caches = []
    for t in range(T):
        x_t = X[:, t, :]
        a = x_t @ W.T + h @ U.T + b
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = sigmoid(a[:, 3 * H:])
        c_new = i * g + f * c
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        active = (t < lengths)[:, None]
        if keep_cache:
            caches.append(_StepCache(x_t, h, c, i, f, g, o, tanh_c, active))
        h = np.where(active, h_new, h)
        c = np.where(active, c_new, c)
    return h, caches


def lstm_backward(params: LstmParams, caches, dh_last: np.ndarray) -> dict[str, np.ndarray]:
    H = params.d_hidden
    _, U, _ = params.stacked()
    dW = np.zeros((4 * H, params.d_embed))
    dU = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    dh = dh_last.copy()
    dc = np.zeros_like(dh)
    for s in reversed(caches):
        act = s.active.astype(np.float64)
        dh_new = dh * act
        dc_new = dc * act + dh_new * s.o * (1.0 - s.tanh_c ** 2)
        da = np.concatenate([
            dc_new * s.g * s.i * (1.0 - s.i),
            dc_new * s.c_prev * s.f * (1.0 - s.f),
            dc_new * s.i * (1.0 - s.g ** 2),
            dh_new * s.tanh_c * s.o * (1.0 - s.o),
        ], axis=1)
        dW += da.T @ s.x
        dU += da.T @ s.h_prev
        db += da.sum(axis=0)
        dh = da @ U + dh * (1.0 - act)
        dc = dc_new * s.f + dc * (1.0 - act)
    grads = {}
    for k, gate in enumerate(GATES):
        sl = slice(k * H, (k + 1) * H)
        grads[f"W_{gate}"] = dW[sl]
        grads[f"U_{gate}"] = dU[sl]
        grads[f"b_{gate}"] = db[sl]
    return grads
