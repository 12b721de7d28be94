"""Named evaluation scenarios and scripted drivers.

Scenario files are YAML; the built-in set lives in the package's
``scenarios/`` directory.  ``obstacles_in_map: false`` embeds obstacles in
the physics terrain but leaves them out of the observation heightmap — the
drive-by-feel comparison.
"""

from __future__ import annotations

import importlib.resources
import math
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import terrain as terrain_mod
from .config import RunConfig
from .env import DrivingEnv, EpisodeConfig
from .errors import InvalidParameterError
from .logs import EpisodeLog
from .terrain import ObstacleSpec
from .vehicle import BaselineGains, baseline_suspension_controller

SCENARIO_NAMES = ("straight", "left23", "right23", "route",
                  "vibration_course", "ramp_left", "ramp_right")


def _scenario_path(name: str) -> Path:
    if name.endswith(".yaml") or "/" in name:
        p = Path(name)
        if not p.exists():
            raise InvalidParameterError(f"scenario file not found: {name}")
        return p
    ref = importlib.resources.files("sixwheel") / "scenarios" / f"{name}.yaml"
    if not ref.is_file():
        raise InvalidParameterError(
            f"unknown scenario {name!r}; known: {', '.join(SCENARIO_NAMES)}")
    return Path(str(ref))


def load_scenario(cfg: RunConfig, name: str,
                  obstacles_in_map: bool | None = None,
                  mode: str = "tc") -> EpisodeConfig:
    data = yaml.safe_load(_scenario_path(name).read_text())
    tspec = data.get("terrain", {"kind": "flat"})
    extent = float(tspec.get("extent", cfg.terrain.extent))
    if tspec.get("kind", "flat") == "flat":
        base = terrain_mod.flat(extent, cfg.terrain.cell_size)
    else:
        base = terrain_mod.generate(int(tspec.get("seed", 0)), extent,
                                    float(tspec.get("amplitude", 0.1)),
                                    cfg.terrain.octaves, cfg.terrain.roughness,
                                    cfg.terrain.cell_size)
    obstacles = [ObstacleSpec.from_dict(o) for o in data.get("obstacles", [])]
    phys = terrain_mod.embed(base, obstacles) if obstacles else base
    in_map = data.get("obstacles_in_map", True)
    if obstacles_in_map is not None:
        in_map = obstacles_in_map
    map_t = phys if in_map else base
    return EpisodeConfig(
        lesson=int(data.get("lesson", 1)),
        mode=mode,
        terrain=phys, map_terrain=map_t,
        spawn=tuple(data["spawn"]),
        targets=[tuple(t) for t in data["targets"]],
        fixed_throttle=data.get("fixed_throttle"),
        name=data.get("name", name))


class ScriptedDriver:
    """Constant throttle, proportional steering toward the target, and a
    choice of suspension behavior: targets held at nominal ('locked') or the
    conventional cascade controller ('baseline')."""

    def __init__(self, cfg: RunConfig, throttle: float = 0.5,
                 suspension: str = "locked",
                 gains: BaselineGains | None = None):
        if suspension not in ("locked", "baseline"):
            raise InvalidParameterError(f"unknown suspension mode {suspension!r}")
        self.cfg = cfg
        self.throttle = throttle
        self.suspension = suspension
        self.gains = gains or BaselineGains()

    def action(self, env: DrivingEnv) -> np.ndarray:
        proprio = env.rig.read_proprioception()
        tx, ty, _ = env.target()
        x, y, yaw = proprio.pose
        bearing = math.atan2(ty - y, tx - x)
        err = (bearing - yaw + math.pi) % (2 * math.pi) - math.pi
        steer = max(-1.0, min(1.0, 2.0 * err / self.cfg.steering.angle_range))
        a = np.zeros(8)
        a[0] = self.throttle
        a[1] = steer
        # suspension channels at 0 map to the nominal extension target
        return a

    def suspension_rates(self, env: DrivingEnv) -> np.ndarray | None:
        if self.suspension == "locked":
            return None
        proprio = env.rig.read_proprioception()
        return baseline_suspension_controller(
            proprio, self.gains, self.cfg.vehicle.nominal_extension)


def run_scenario(cfg: RunConfig, name: str, policy=None,
                 mode: str = "tc", seed: int | None = None,
                 obstacles_in_map: bool | None = None,
                 driver: ScriptedDriver | None = None,
                 max_steps: int | None = None) -> EpisodeLog:
    """Run one scenario episode and return its log.

    `policy` is a callable obs -> 8-action (deterministic evaluation); when
    None, `driver` (default: locked-arms scripted driving) supplies actions.
    """
    episode = load_scenario(cfg, name, obstacles_in_map, mode)
    env = DrivingEnv(cfg)
    rng = np.random.Generator(np.random.PCG64(cfg.seed if seed is None else seed))
    obs = env.reset(episode, rng)
    if policy is None and driver is None:
        throttle = episode.fixed_throttle if episode.fixed_throttle is not None else 0.5
        driver = ScriptedDriver(cfg, throttle=throttle)

    log = EpisodeLog(header={
        "scenario": episode.name,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed if seed is None else seed,
        "code_version": __version__,
        "obstacles_in_map": obstacles_in_map,
        "episode": env.episode.header_dict(),
        "driver": (None if policy is not None else
                   {"throttle": driver.throttle,
                    "suspension": driver.suspension}),
    })
    steps = 0
    limit = max_steps if max_steps is not None else cfg.env.horizon * max(
        1, len(episode.targets or [1]))
    while steps < limit:
        if policy is not None:
            action = np.asarray(policy(obs), dtype=float)
            rates = None
        else:
            action = driver.action(env)
            rates = driver.suspension_rates(env)
        obs, reward, done, info = env.step(action, suspension_rates=rates)
        log.add_step(info["t"], info["proprio"], action, info["delayed_action"],
                     info["reward"], info["reason"] if done else
                     info.get("target_event", ""))
        steps += 1
        if done:
            break
    log.header["steps"] = steps
    log.header["terminal"] = log.records[-1]["terminal"] if log.records else ""
    return log


def replay_log(cfg: RunConfig, log: EpisodeLog) -> tuple[bool, str]:
    """Re-run a stored episode from its logged actions and compare records.

    The header pins the scenario, mode, sampled delays, and seed, so the
    regenerated trajectory must match the stored one bit for bit.
    """
    from .actuation import DelaySet
    from dataclasses import replace

    header = log.header
    ep_info = header.get("episode", {})
    if header.get("driver"):
        # scripted runs are regenerated wholesale; the driver is deterministic
        redo = run_scenario(cfg, header["scenario"], policy=None,
                            mode=ep_info.get("mode", "tc"),
                            seed=header.get("seed"),
                            obstacles_in_map=header.get("obstacles_in_map"),
                            driver=ScriptedDriver(
                                cfg, throttle=header["driver"]["throttle"],
                                suspension=header["driver"]["suspension"]),
                            max_steps=len(log.records))
        for k, (a, b) in enumerate(zip(redo.records, log.records)):
            if a != b:
                return False, f"first mismatch at step {k}"
        if len(redo.records) != len(log.records):
            return False, "step counts differ"
        return True, ""
    episode = load_scenario(cfg, header["scenario"],
                            obstacles_in_map=header.get("obstacles_in_map"),
                            mode=ep_info.get("mode", "tc"))
    delays = ep_info.get("delays")
    if delays is not None:
        episode = replace(episode, delays=DelaySet(**delays))
    env = DrivingEnv(cfg)
    rng = np.random.Generator(np.random.PCG64(header.get("seed", 0)))
    env.reset(episode, rng)
    check = EpisodeLog(header=dict(header))
    for k, rec in enumerate(log.records):
        action = np.asarray(rec["action"], dtype=float)
        obs, reward, done, info = env.step(action)
        check.add_step(info["t"], info["proprio"], action,
                       info["delayed_action"], info["reward"],
                       info["reason"] if done else info.get("target_event", ""))
        if check.records[-1] != rec:
            return False, f"first mismatch at step {k}"
        if done and k < len(log.records) - 1:
            return False, f"episode ended early at step {k}"
    return True, ""


def max_roll(log: EpisodeLog) -> float:
    """Largest absolute roll over an episode, in radians."""
    return max(abs(r["roll"]) for r in log.records)


def mean_action_change(log: EpisodeLog) -> float:
    """Mean per-step |delta action| (L1 averaged over the 8 channels)."""
    actions = np.array([r["action"] for r in log.records])
    if len(actions) < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(actions, axis=0))))
