"""Minimal feedforward layers with hand-written reverse-mode gradients.

Layers cache what their backward pass needs; parameter gradients accumulate
until `zero_grad`.  Everything is dtype-parametric: training runs in float32
(so checkpoints round-trip exactly), gradient checks run in float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError


def orthogonal(rng: np.random.Generator, n_out: int, n_in: int,
               gain: float = 1.0) -> np.ndarray:
    """Orthogonal weight init (QR of a Gaussian, sign-fixed)."""
    a = rng.normal(size=(max(n_out, n_in), min(n_out, n_in)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if n_out < n_in:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_out, :n_in])


class Linear:
    """y = x W^T + b"""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 gain: float = 1.0, dtype=np.float32):
        self.W = orthogonal(rng, n_out, n_in, gain).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dW += dy.T @ self._x
        self.db += dy.sum(axis=0)
        return dy @ self.W

    def params(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        return [("W", self.W, self.dW), ("b", self.b, self.db)]


class Tanh:
    def __init__(self):
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * (1.0 - self._y * self._y)

    def params(self):
        return []


class Chain:
    """A plain sequential stack."""

    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = []
        for k, layer in enumerate(self.layers):
            for name, p, g in layer.params():
                out.append((f"{k}.{name}", p, g))
        return out


def check_finite(x: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(x)):
        bad = int(np.argmin(np.isfinite(np.asarray(x)).ravel()))
        raise InvalidParameterError(f"non-finite {what} at flat index {bad}")


class Adam:
    """Adam over a list of (name, param, grad) triples."""

    def __init__(self, params: list[tuple[str, np.ndarray, np.ndarray]],
                 lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.triples = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for _, p, _ in params]
        self.v = [np.zeros_like(p) for _, p, _ in params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for (name, p, g), m, v in zip(self.triples, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)).astype(p.dtype)

    def zero_grad(self) -> None:
        for _, _, g in self.triples:
            g[...] = 0.0

    def state_arrays(self) -> list[np.ndarray]:
        return self.m + self.v
