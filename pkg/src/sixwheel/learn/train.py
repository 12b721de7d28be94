"""Training loop: rollout collection, PPO updates, curriculum, evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..env import OBS_SIZE, DrivingEnv, EpisodeConfig, VectorEnv
from .gae import gae
from .nn import Adam
from .policy import LOG2PI, PolicyNet
from .ppo import ppo_update


@dataclass
class CurvePoint:
    lesson: int
    step: int
    mean_return: float
    success_rate: float


@dataclass
class TrainResult:
    curve: list[CurvePoint]
    best_checkpoint: Path
    final_checkpoint: Path
    steps: int
    stopped_early: bool = False


def evaluate(net: PolicyNet, cfg: RunConfig, mode: str, lesson: int,
             episodes: int, seed: int) -> tuple[float, float]:
    """Deterministic (mean-action) evaluation on the lesson distribution."""
    env = DrivingEnv(cfg)
    returns, successes = [], 0
    for k in range(episodes):
        rng = np.random.Generator(np.random.PCG64([seed, 3, k]))
        ep = EpisodeConfig(lesson=lesson, mode=mode, terrain_seed=10_000 + k)
        obs = env.reset(ep, rng)
        total = 0.0
        while True:
            action, _, _ = net.act(obs)
            obs, reward, done, info = env.step(action)
            total += reward
            if done:
                if info["reason"] == "success":
                    successes += 1
                break
        returns.append(total)
    return float(np.mean(returns)), successes / episodes


def evaluate_scenario(net: PolicyNet, cfg: RunConfig, scenario: str,
                      episodes: int, mode: str, seed: int = 0) -> tuple[float, float]:
    """Deterministic evaluation on a named scenario; returns (return, success)."""
    from ..scenarios import run_scenario
    returns, successes = [], 0
    for k in range(episodes):
        log = run_scenario(cfg, scenario, policy=lambda o: net.act(o)[0],
                           mode=mode, seed=seed * 1000 + k)
        returns.append(log.total_reward)
        successes += int(log.success)
    return float(np.mean(returns)), successes / episodes


def _collect(net: PolicyNet, venv: VectorEnv, obs: np.ndarray, length: int,
             rng: np.random.Generator, gamma: float, lam: float):
    """Gather one on-policy rollout from every env; returns (batch, obs, stats)."""
    n_envs = len(venv.envs)
    o = np.empty((length, n_envs, OBS_SIZE), dtype=np.float32)
    a = np.empty((length, n_envs, 8))
    lp = np.empty((length, n_envs))
    rew = np.empty((length, n_envs))
    val = np.empty((length, n_envs))
    done = np.zeros((length, n_envs), dtype=bool)
    nextval = np.empty((length, n_envs))
    ep_returns: list[float] = []
    ep_success = 0
    ep_count = 0
    running = np.zeros(n_envs)

    for t in range(length):
        mean, value, log_std = net.forward(obs)
        sigma = np.exp(log_std.astype(np.float64))
        z = rng.normal(size=(n_envs, 8))
        actions = mean.astype(np.float64) + sigma * z
        logp = np.sum(-0.5 * z * z - np.log(sigma) - 0.5 * LOG2PI, axis=1)
        o[t] = obs
        a[t] = actions
        lp[t] = logp
        val[t] = value.astype(np.float64)
        next_obs, rewards, dones, truncs, infos = venv.step(actions)
        rew[t] = rewards
        done[t] = dones
        running += rewards
        for k in range(n_envs):
            if dones[k]:
                ep_returns.append(running[k])
                running[k] = 0.0
                ep_count += 1
                if infos[k]["reason"] == "success":
                    ep_success += 1
                if truncs[k]:
                    _, bv, _ = net.forward(infos[k]["final_obs"])
                    nextval[t, k] = float(bv[0])
                else:
                    nextval[t, k] = 0.0
            else:
                nextval[t, k] = np.nan  # filled from the next row below
        obs = next_obs

    # regular transitions bootstrap with the next stored value
    _, last_val, _ = net.forward(obs)
    for k in range(n_envs):
        for t in range(length - 1):
            if np.isnan(nextval[t, k]):
                nextval[t, k] = val[t + 1, k]
        if np.isnan(nextval[length - 1, k]):
            nextval[length - 1, k] = float(last_val[k])
            done[length - 1, k] = True  # rollout boundary cuts the GAE chain

    adv = np.empty((length, n_envs))
    ret = np.empty((length, n_envs))
    for k in range(n_envs):
        adv[:, k], ret[:, k] = gae(rew[:, k], val[:, k], done[:, k],
                                   nextval[:, k], gamma, lam)
    batch = {
        "obs": o.reshape(length * n_envs, OBS_SIZE),
        "actions": a.reshape(length * n_envs, 8),
        "log_probs": lp.reshape(-1),
        "advantages": adv.reshape(-1),
        "returns": ret.reshape(-1),
    }
    stats = {"ep_returns": ep_returns, "episodes": ep_count,
             "successes": ep_success}
    return batch, obs, stats


def _write_sample_episode(net: PolicyNet, cfg: RunConfig, mode: str,
                          lesson: int, steps: int, out_dir: Path) -> None:
    """One logged straight-scenario episode per evaluation point; the header
    records the sampled delays, seeds, and config."""
    from ..scenarios import run_scenario
    log = run_scenario(cfg, "straight", policy=lambda o: net.act(o)[0],
                       mode=mode, seed=steps, max_steps=120)
    log.header["training_step"] = steps
    log.header["lesson"] = lesson
    log.write(out_dir / f"sample_episode_l{lesson}.jsonl")


def train(cfg: RunConfig, mode: str, seed: int, out_dir: str | Path,
          lessons: tuple[int, ...] = (1, 2),
          steps_override: dict[int, int] | None = None,
          stop_fn=None, init_checkpoint: str | Path | None = None,
          log=print) -> TrainResult:
    """Two-lesson curriculum; lesson 2 starts from lesson 1's best checkpoint.

    `init_checkpoint` seeds the first trained lesson (continuing a previous
    run); later lessons always hand off from the best evaluation checkpoint
    of the lesson before.  `stop_fn(curve_point, net) -> bool` may end a
    lesson early (used by the acceptance suite once its bar is met).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = cfg.train
    if init_checkpoint is not None:
        net, _, _ = PolicyNet.load(init_checkpoint)
    else:
        net = PolicyNet(seed=seed, log_std_init=t.log_std_init)
    curve: list[CurvePoint] = []
    curve_path = out_dir / "curve.csv"
    with open(curve_path, "w", newline="") as fh:
        csv.writer(fh).writerow(["lesson", "step", "mean_return", "success_rate"])

    best_path = final_path = out_dir / "lesson1_best.ckpt"
    stopped_early = False
    total_steps = 0

    for lesson in lessons:
        lesson_cfg = cfg.curriculum.lesson1 if lesson == 1 else cfg.curriculum.lesson2
        lr = t.lr_lesson1 if lesson == 1 else t.lr_lesson2
        budget = (steps_override or {}).get(lesson, lesson_cfg.steps)
        if lesson != lessons[0]:
            # hand off from the best evaluation checkpoint of the last lesson
            net, _, _ = PolicyNet.load(best_path)
        optimizer = Adam(net.params(), lr=lr)
        venv = VectorEnv(cfg, t.n_envs, mode, lesson, seed)
        obs = venv.reset_all()
        roll_rng = np.random.Generator(np.random.PCG64([seed, 1, lesson]))
        shuffle_rng = np.random.Generator(np.random.PCG64([seed, 2, lesson]))

        best_return = -math.inf
        best_path = out_dir / f"lesson{lesson}_best.ckpt"
        final_path = out_dir / f"lesson{lesson}_final.ckpt"
        steps = 0
        next_eval = t.eval_every
        while steps < budget:
            batch, obs, stats = _collect(net, venv, obs, t.rollout_length,
                                         roll_rng, t.gamma, t.gae_lambda)
            adv = batch["advantages"]
            batch["advantages"] = (adv - adv.mean()) / (adv.std() + 1e-8)
            up = ppo_update(net, optimizer, batch, t, shuffle_rng)
            steps += t.rollout_length * t.n_envs
            total_steps += t.rollout_length * t.n_envs
            mean_ep = (float(np.mean(stats["ep_returns"]))
                       if stats["ep_returns"] else float("nan"))
            log(f"lesson {lesson} step {steps}: ep_return {mean_ep:.1f} "
                f"kl {up.approx_kl:.4f} clip {up.clip_fraction:.2f} "
                f"vloss {up.value_loss:.2f} epochs {up.epochs_run}"
                + (" [REJECTED]" if up.rejected else ""))
            if steps >= next_eval or steps >= budget:
                next_eval += t.eval_every
                mean_ret, succ = evaluate(net, cfg, mode, lesson,
                                          t.eval_episodes, seed)
                point = CurvePoint(lesson, steps, mean_ret, succ)
                curve.append(point)
                _write_sample_episode(net, cfg, mode, lesson, steps, out_dir)
                with open(curve_path, "a", newline="") as fh:
                    csv.writer(fh).writerow(
                        [lesson, steps, f"{mean_ret:.6f}", f"{succ:.4f}"])
                log(f"  eval @ {steps}: return {mean_ret:.1f} success {succ:.0%}")
                if mean_ret > best_return:
                    best_return = mean_ret
                    net.save(best_path, optimizer,
                             meta={"lesson": lesson, "step": steps,
                                   "mode": mode, "config_hash": cfg.hash(),
                                   "seed": seed})
                if stop_fn is not None and stop_fn(point, net):
                    stopped_early = True
                    break
        net.save(final_path, optimizer,
                 meta={"lesson": lesson, "step": steps, "mode": mode,
                       "config_hash": cfg.hash(), "seed": seed})
        if not best_path.exists():
            net.save(best_path, optimizer,
                     meta={"lesson": lesson, "step": steps, "mode": mode,
                           "config_hash": cfg.hash(), "seed": seed})
        if stopped_early:
            break

    return TrainResult(curve, best_path, final_path, total_steps, stopped_early)
