"""Generalized advantage estimation."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        next_values: np.ndarray, gamma: float, lam: float
        ) -> tuple[np.ndarray, np.ndarray]:
    """Recursive GAE over one rollout column.

    `next_values[t]` is V(s_{t+1}): zero where the episode truly terminated,
    the bootstrap V of the final observation where it was truncated, and the
    regular next-state value elsewhere.  `dones[t]` marks any episode end
    (terminal or truncation) and cuts the recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    next_values = np.asarray(next_values, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape == next_values.shape):
        raise InvalidParameterError("gae inputs must share one shape")
    T = rewards.shape[0]
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_values[t] - values[t]
        acc = delta + gamma * lam * (0.0 if dones[t] else acc)
        adv[t] = acc
    return adv, adv + values


def gae_simple(rewards, values, terminals, gamma: float, lam: float,
               bootstrap: float = 0.0):
    """Single-trajectory convenience wrapper: `bootstrap` is V(s_T) when the
    rollout was cut short (zero after a true terminal)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    T = rewards.shape[0]
    next_values = np.empty(T)
    next_values[:-1] = values[1:]
    next_values[-1] = 0.0 if terminals[-1] else bootstrap
    next_values[:-1][terminals[:-1]] = 0.0
    dones = terminals.copy()
    dones[-1] = True
    return gae(rewards, values, dones, next_values, gamma, lam)
