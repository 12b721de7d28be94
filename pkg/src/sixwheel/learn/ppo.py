"""Clipped-surrogate PPO update over the hand-rolled policy network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import TrainConfig
from ..errors import InvalidParameterError
from .nn import Adam
from .policy import LOG2PI, PolicyNet


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    approx_kl: float
    clip_fraction: float
    epochs_run: int
    rejected: bool = False


def ppo_update(net: PolicyNet, optimizer: Adam, batch: dict,
               cfg: TrainConfig, rng: np.random.Generator) -> UpdateStats:
    """Runs up to `cfg.epochs` passes of minibatch Adam steps.

    The epoch loop stops once the approximate KL divergence from the
    data-collection policy exceeds `cfg.kl_stop`; a non-finite loss rejects
    the whole update and restores the incoming parameters.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    old_logp = batch["log_probs"]
    adv = batch["advantages"]
    returns = batch["returns"]
    n = obs.shape[0]
    if not (actions.shape[0] == old_logp.shape[0] == adv.shape[0]
            == returns.shape[0] == n):
        raise InvalidParameterError("batch arrays must share their first dim")

    snapshot = net.copy_params()
    opt_snapshot = ([a.copy() for a in optimizer.state_arrays()], optimizer.t)

    policy_losses, value_losses, kls, clip_fracs = [], [], [], []
    epochs_run = 0
    stop = False
    for _ in range(cfg.epochs):
        if stop:
            break
        epochs_run += 1
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            mb_obs = obs[idx]
            mb_act = actions[idx]
            mb_oldlp = old_logp[idx]
            mb_adv = adv[idx]
            mb_ret = returns[idx]
            b = len(idx)

            mean, value, log_std = net.forward(mb_obs)
            mean = mean.astype(np.float64)
            value = value.astype(np.float64)
            sigma = np.exp(log_std.astype(np.float64))
            z = (mb_act - mean) / sigma
            new_lp = np.sum(-0.5 * z * z - np.log(sigma) - 0.5 * LOG2PI, axis=1)
            log_ratio = new_lp - mb_oldlp
            ratio = np.exp(log_ratio)
            kl = float(np.mean(ratio - 1.0 - log_ratio))
            if kl > cfg.kl_stop:
                stop = True
                kls.append(kl)
                break

            surr1 = ratio * mb_adv
            clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
            surr2 = clipped * mb_adv
            policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
            value_loss = 0.5 * float(np.mean((value - mb_ret) ** 2))
            loss = policy_loss + cfg.value_coef * value_loss
            if not np.isfinite(loss):
                net.load_params(snapshot)
                for arr, saved in zip(optimizer.state_arrays(), opt_snapshot[0]):
                    arr[...] = saved
                optimizer.t = opt_snapshot[1]
                return UpdateStats(policy_loss, value_loss, kl,
                                   0.0, epochs_run, rejected=True)

            use_first = surr1 <= surr2
            inside = (ratio > 1.0 - cfg.clip) & (ratio < 1.0 + cfg.clip)
            dratio = -(mb_adv * np.where(use_first, 1.0, inside)) / b
            dlp = dratio * ratio
            dmean = dlp[:, None] * (z / sigma)
            dlogstd = np.sum(dlp[:, None] * (z * z - 1.0), axis=0)
            dvalue = cfg.value_coef * (value - mb_ret) / b

            net.zero_grad()
            net.backward(dmean.astype(net.dtype), dvalue.astype(net.dtype))
            net.dlog_std += dlogstd.astype(net.dtype)
            optimizer.step()

            policy_losses.append(policy_loss)
            value_losses.append(value_loss)
            kls.append(kl)
            clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip)))

    return UpdateStats(
        policy_loss=float(np.mean(policy_losses)) if policy_losses else 0.0,
        value_loss=float(np.mean(value_losses)) if value_losses else 0.0,
        approx_kl=float(kls[-1]) if kls else 0.0,
        clip_fraction=float(np.mean(clip_fracs)) if clip_fracs else 0.0,
        epochs_run=epochs_run)
