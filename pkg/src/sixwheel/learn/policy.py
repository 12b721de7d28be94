"""Gaussian control policy: split encoders, shared trunk, mean/value heads.

Observation layout (824): 8 stacked 28-value proprioceptive frames (224)
followed by the 600-value local height map.  The action standard deviation
is a free parameter vector, independent of state.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from ..errors import InvalidParameterError
from .nn import Adam, Chain, Linear, Tanh, check_finite

PROP_SIZE = 224
MAP_SIZE = 600
OBS_SIZE = PROP_SIZE + MAP_SIZE
ACT_SIZE = 8

CKPT_MAGIC = b"SWCKPT01"
LOG2PI = math.log(2.0 * math.pi)


class PolicyNet:
    """Maps an 824-dim observation to (mean action, value, log_std)."""

    def __init__(self, seed: int = 0, log_std_init: float = math.log(0.3),
                 dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64([seed, 0x5157]))
        self.dtype = dtype
        g = math.sqrt(2.0)
        self.enc_map = Chain(Linear(MAP_SIZE, 128, rng, g, dtype), Tanh(),
                             Linear(128, 64, rng, g, dtype), Tanh())
        self.enc_prop = Chain(Linear(PROP_SIZE, 128, rng, g, dtype), Tanh())
        self.trunk = Chain(Linear(192, 128, rng, g, dtype), Tanh())
        self.mean_head = Linear(128, ACT_SIZE, rng, 0.01, dtype)
        self.value_head = Linear(128, 1, rng, 1.0, dtype)
        self.log_std = np.full(ACT_SIZE, log_std_init, dtype=dtype)
        self.dlog_std = np.zeros_like(self.log_std)
        self._mean_pre: np.ndarray | None = None

    # -- forward / backward ----------------------------------------------------

    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """obs (B, 824) -> (mean (B,8) in (-1,1), value (B,), log_std (8,))."""
        obs = np.asarray(obs, dtype=self.dtype)
        if obs.ndim == 1:
            obs = obs[None, :]
        if obs.shape[1] != OBS_SIZE:
            raise InvalidParameterError(
                f"observation must have {OBS_SIZE} values, got {obs.shape[1]}")
        check_finite(obs, "observation")
        prop = obs[:, :PROP_SIZE]
        hmap = obs[:, PROP_SIZE:]
        e_map = self.enc_map.forward(hmap)
        e_prop = self.enc_prop.forward(prop)
        h = self.trunk.forward(np.concatenate([e_prop, e_map], axis=1))
        pre = self.mean_head.forward(h)
        self._mean_pre = np.tanh(pre)
        value = self.value_head.forward(h)[:, 0]
        return self._mean_pre, value, self.log_std.copy()

    def backward(self, dmean: np.ndarray, dvalue: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads; returns the observation gradient."""
        dpre = dmean * (1.0 - self._mean_pre * self._mean_pre)
        dh = self.mean_head.backward(dpre)
        dh = dh + self.value_head.backward(dvalue[:, None])
        dcat = self.trunk.backward(dh)
        dprop = self.enc_prop.backward(dcat[:, :128])
        dmap = self.enc_map.backward(dcat[:, 128:])
        return np.concatenate([dprop, dmap], axis=1)

    # -- parameters ----------------------------------------------------------------

    def params(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for prefix, part in (("enc_map", self.enc_map),
                             ("enc_prop", self.enc_prop),
                             ("trunk", self.trunk)):
            out.extend((f"{prefix}.{n}", p, g) for n, p, g in part.params())
        out.extend((f"mean.{n}", p, g) for n, p, g in self.mean_head.params())
        out.extend((f"value.{n}", p, g) for n, p, g in self.value_head.params())
        out.append(("log_std", self.log_std, self.dlog_std))
        return out

    def zero_grad(self) -> None:
        for _, _, g in self.params():
            g[...] = 0.0

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for _, p, _ in self.params()]

    def load_params(self, arrays: list[np.ndarray]) -> None:
        for (_, p, _), a in zip(self.params(), arrays):
            p[...] = a

    # -- acting ----------------------------------------------------------------------

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None
            ) -> tuple[np.ndarray, float, float]:
        """Single-observation rollout step -> (action, log_prob, value).

        Deterministic (mean action) when no rng is given.
        """
        mean, value, log_std = self.forward(obs)
        if rng is None:
            return mean[0].astype(np.float64), 0.0, float(value[0])
        action, logp = sample_action(mean[0], log_std, rng)
        return action, logp, float(value[0])

    # -- persistence ------------------------------------------------------------------

    def save(self, path: str | Path, optimizer: Adam | None = None,
             meta: dict | None = None) -> None:
        named = self.params()
        header = {
            "format_version": 1,
            "dims": {name: list(p.shape) for name, p, _ in named},
            "meta": meta or {},
            "adam_t": optimizer.t if optimizer else 0,
            "has_optimizer": optimizer is not None,
        }
        blob = json.dumps(header).encode()
        with open(path, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for _, p, _ in named:
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
            if optimizer is not None:
                for arr in optimizer.state_arrays():
                    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path, optimizer_lr: float | None = None
             ) -> tuple["PolicyNet", Adam | None, dict]:
        raw = Path(path).read_bytes()
        if raw[:8] != CKPT_MAGIC:
            raise InvalidParameterError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12:12 + hlen].decode())
        if header.get("format_version") != 1:
            raise InvalidParameterError(
                f"unsupported checkpoint version {header.get('format_version')}")
        net = cls(seed=0)
        offset = 12 + hlen
        named = net.params()
        dims = header["dims"]
        if [n for n, _, _ in named] != list(dims.keys()):
            raise InvalidParameterError("checkpoint parameter layout mismatch")
        for name, p, _ in named:
            shape = tuple(dims[name])
            count = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
            p[...] = arr.reshape(shape)
            offset += count * 4
        opt = None
        if header.get("has_optimizer") and optimizer_lr is not None:
            opt = Adam(net.params(), lr=optimizer_lr)
            opt.t = header.get("adam_t", 0)
            for arr in opt.state_arrays():
                count = arr.size
                data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
                arr[...] = data.reshape(arr.shape)
                offset += count * 4
        return net, opt, header.get("meta", {})


def sample_action(mean: np.ndarray, log_std: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw a ~ N(mean, diag(sigma^2)); log-prob of the unclipped sample."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    sigma = np.exp(log_std)
    z = rng.normal(size=mean.shape)
    action = mean + sigma * z
    logp = float(np.sum(-0.5 * z * z - log_std - 0.5 * LOG2PI))
    return action, logp


def log_prob(action: np.ndarray, mean: np.ndarray,
             log_std: np.ndarray) -> np.ndarray:
    """Row-wise Gaussian log-density; inputs broadcast over the batch."""
    sigma = np.exp(log_std)
    z = (action - mean) / sigma
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG2PI, axis=-1)
