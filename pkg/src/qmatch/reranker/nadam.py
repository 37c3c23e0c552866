"""Nesterov-accelerated Adam (Nadam) over a dict of numpy parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._validation import check_finite


@dataclass
class NadamState:
    """Moment accumulators plus the warming momentum schedule.

    The per-step momentum is ``beta1 * (1 - 0.5 * 0.96 ** (t * schedule_decay))``.
    """

    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    schedule_decay: float = 0.004
    t: int = 0
    m_schedule: float = 1.0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def momentum(self, t: int) -> float:
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (t * self.schedule_decay))


def nadam_step(state: NadamState, params: dict[str, np.ndarray],
               grads: dict[str, np.ndarray]) -> tuple[dict[str, np.ndarray], NadamState]:
    """Apply one update in place on ``params`` and ``state``; both are also returned."""
    if params.keys() != grads.keys():
        raise ValueError("params and grads must have the same keys")
    for k in params:
        if params[k].shape != grads[k].shape:
            raise ValueError(f"shape mismatch for {k!r}: {params[k].shape} vs {grads[k].shape}")
    check_finite(grads)

    t = state.t + 1
    mu_t = state.momentum(t)
    mu_next = state.momentum(t + 1)
    sched_new = state.m_schedule * mu_t
    sched_next = sched_new * mu_next
    bias2 = 1.0 - state.beta2 ** t
    for k, g in grads.items():
        m = state.m.get(k)
        v = state.v.get(k)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        g_hat = g / (1.0 - sched_new)
        m_hat = m / (1.0 - sched_next)
        v_hat = v / bias2
        m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat
        params[k] -= state.lr * m_bar / (np.sqrt(v_hat) + state.epsilon)
        state.m[k] = m
        state.v[k] = v
    state.t = t
    state.m_schedule = sched_new
    return params, state
