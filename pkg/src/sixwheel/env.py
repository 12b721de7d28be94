"""Reinforcement-learning environment: episodes, observations, reward, modes.

An episode drives the rig toward a target pose (x, y, heading) placed 25 m
away on an arc.  Control runs at 10 Hz over a 60 Hz simulation; actions are
8-vectors in [-1, 1] (throttle, front articulation target, six suspension
targets).  Training modes:

    ta  - ideal conditions, base reward
    tb  - ideal conditions, base reward plus the action-change penalty
    tc  - observation noise and action delays, penalized reward
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import terrain as terrain_mod
from .actuation import (ActionDelays, ActuatorLimits, DelaySet,
                        SteeringController, SuspensionController)
from .config import RunConfig
from .dynamics import DT
from .errors import InvalidParameterError, SpawnError
from .terrain import LocalMap, ObstacleSpec, Terrain, extract_local_map
from .vehicle import VehicleRig, build

FRAME_SIZE = 28
WINDOW = 8
MAP_SIZE = 600
OBS_SIZE = WINDOW * FRAME_SIZE + MAP_SIZE  # 824

MODES = ("ta", "tb", "tc")


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def sample_target(rng: np.random.Generator, pose: tuple[float, float, float],
                  psi_range: float, distance: float
                  ) -> tuple[float, float, float]:
    """Target pose on an arc: bearing uniform within +-psi_range of the
    vehicle heading, target heading radial plus a +-psi_range/2 shift."""
    x0, y0, yaw = pose
    bearing = yaw + float(rng.uniform(-psi_range, psi_range)) if psi_range > 0 else yaw
    shift = float(rng.uniform(-psi_range / 2.0, psi_range / 2.0)) if psi_range > 0 else 0.0
    return (x0 + distance * math.cos(bearing),
            y0 + distance * math.sin(bearing),
            wrap_angle(bearing + shift))


@dataclass(frozen=True)
class RewardState:
    """The slice of vehicle state the reward depends on."""
    distance: float        # planar distance to the target, m
    heading_error: float   # vehicle yaw minus target heading, wrapped, rad
    speed: float           # m/s
    forces: np.ndarray     # six arm forces, N
    roll: float            # rad


@dataclass(frozen=True)
class RewardBreakdown:
    r_tar: float
    r_prog: float
    r_speed: float
    r_head: float
    r_forces: float
    r_roll: float
    r_delta_a: float
    total: float
    success: bool

    def to_dict(self) -> dict:
        return {"r_tar": self.r_tar, "r_prog": self.r_prog,
                "r_speed": self.r_speed, "r_head": self.r_head,
                "r_forces": self.r_forces, "r_roll": self.r_roll,
                "r_delta_a": self.r_delta_a, "total": self.total,
                "success": self.success}


def compute_reward(state_t: RewardState, state_prev: RewardState,
                   action_t: np.ndarray, action_prev: np.ndarray,
                   mode: str, cfg: RunConfig) -> RewardBreakdown:
    """Per-step reward; the action-change penalty only applies in tb/tc."""
    r = cfg.reward
    e = cfg.env
    f_control = e.f_control

    success = (state_t.distance <= e.success_radius
               and abs(state_t.heading_error) < math.radians(e.success_heading_deg)
               and abs(state_t.roll) < math.radians(e.success_roll_deg))
    r_tar = r.k_tar if success else 0.0
    r_prog = (state_prev.distance - state_t.distance) * f_control
    r_speed = min(1.0, math.exp(r.k_speed * (r.v_lim - abs(state_t.speed))))
    if state_t.distance <= 0.0:
        r_head = 1.0
    else:
        scaled = state_t.heading_error / (state_t.distance / r.k_d)
        r_head = math.exp(-0.5 * scaled * scaled)
    fsum = float(np.sum(state_t.forces))
    if abs(fsum) < 1e-9:
        sigma = 0.0
    else:
        sigma = float(np.std(state_t.forces / fsum))
    r_forces = math.exp(-0.5 * (sigma / r.k_forces) ** 2)
    r_roll = math.exp(-0.5 * (state_t.roll / r.k_phi) ** 2)
    delta = np.asarray(action_t, dtype=float) - np.asarray(action_prev, dtype=float)
    weights = np.array([r.m_throttle, r.m_steering] + [r.m_suspension] * 6)
    r_delta_a = float(delta @ (weights * delta)) if mode in ("tb", "tc") else 0.0
    total = r_tar + r_prog * r_speed * r_head * r_forces * r_roll + r_delta_a
    return RewardBreakdown(r_tar, r_prog, r_speed, r_head, r_forces, r_roll,
                           r_delta_a, total, success)


@dataclass
class EpisodeConfig:
    """Everything that pins down one episode.

    Lesson defaults: lesson 1 has a heading range of pi/6 and no obstacles,
    lesson 2 narrows to pi/8 and embeds obstacles.  Scenario runs may supply
    an explicit terrain, spawn pose, and target sequence.
    """
    lesson: int = 1
    mode: str = "tc"
    terrain_seed: int = 0
    psi_range: float | None = None
    obstacles: bool | None = None
    obstacle_count: int | None = None
    amplitude: float | None = None
    delays: DelaySet | None = None
    # scenario overrides
    terrain: Terrain | None = None
    map_terrain: Terrain | None = None   # observation heightmap, if different
    spawn: tuple[float, float, float] | None = None
    targets: list[tuple[float, float, float]] | None = None
    fixed_throttle: float | None = None  # scripted drivers
    name: str = ""

    def resolved(self, cfg: RunConfig) -> "EpisodeConfig":
        lesson = cfg.curriculum.lesson1 if self.lesson == 1 else cfg.curriculum.lesson2
        out = replace(self)
        if out.psi_range is None:
            out.psi_range = lesson.psi_range
        if out.obstacles is None:
            out.obstacles = lesson.obstacles
        if out.obstacle_count is None:
            out.obstacle_count = lesson.obstacle_count
        if out.amplitude is None:
            out.amplitude = lesson.amplitude
        if out.mode not in MODES:
            raise InvalidParameterError(f"unknown mode {out.mode!r}")
        return out

    def header_dict(self) -> dict:
        d = {"lesson": self.lesson, "mode": self.mode,
             "terrain_seed": self.terrain_seed, "psi_range": self.psi_range,
             "obstacles": self.obstacles, "obstacle_count": self.obstacle_count,
             "amplitude": self.amplitude, "name": self.name,
             "spawn": list(self.spawn) if self.spawn else None,
             "targets": [list(t) for t in self.targets] if self.targets else None,
             "fixed_throttle": self.fixed_throttle}
        if self.delays is not None:
            d["delays"] = {"throttle": self.delays.throttle,
                           "articulation": self.delays.articulation,
                           "suspension": self.delays.suspension}
        return d


class DrivingEnv:
    """One vehicle, one terrain, one target at a time."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.limits = ActuatorLimits.from_config(cfg)
        self.steering = SteeringController(cfg)
        self.suspension = SuspensionController(cfg)
        self.rig: VehicleRig | None = None
        self.episode: EpisodeConfig | None = None
        self.rng = np.random.Generator(np.random.PCG64(0))
        self._frames: list[np.ndarray] = []
        self.t = 0
        self.auto_advance = False
        self.substeps = int(round(1.0 / (cfg.env.f_control * DT)))

    # -- episode lifecycle ---------------------------------------------------

    def _make_terrain(self, ep: EpisodeConfig) -> tuple[Terrain, Terrain]:
        if ep.terrain is not None:
            return ep.terrain, (ep.map_terrain or ep.terrain)
        t = terrain_mod.generate(ep.terrain_seed, self.cfg.terrain.extent,
                                 ep.amplitude, self.cfg.terrain.octaves,
                                 self.cfg.terrain.roughness,
                                 self.cfg.terrain.cell_size)
        if ep.obstacles and ep.obstacle_count > 0:
            rng = np.random.Generator(np.random.PCG64(ep.terrain_seed + 7919))
            xmin, ymin, xmax, ymax = t.bounds
            margin = 3.0
            obs = []
            for _ in range(ep.obstacle_count):
                cx = rng.uniform(xmin + margin, xmax - margin)
                cy = rng.uniform(ymin + margin, ymax - margin)
                if math.hypot(cx, cy) < 6.0:
                    continue  # keep the spawn square clear
                ax = rng.uniform(0.4, 1.2)
                ay = rng.uniform(0.4, 1.2)
                h = rng.uniform(0.15, 0.45)
                obs.append(ObstacleSpec("semi_ellipsoid", (cx, cy), (ax, ay, h),
                                        yaw=rng.uniform(0, math.pi)))
            t = terrain_mod.embed(t, obs)
        return t, t

    def reset(self, episode: EpisodeConfig | None = None,
              rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is not None:
            self.rng = rng
        ep = (episode or EpisodeConfig()).resolved(self.cfg)
        self.phys_terrain, self.map_terrain = self._make_terrain(ep)

        for attempt in range(10):
            if ep.spawn is not None:
                x0, y0, yaw = ep.spawn
            else:
                x0 = float(self.rng.uniform(-0.5, 0.5))
                y0 = float(self.rng.uniform(-0.5, 0.5))
                yaw = float(self.rng.uniform(-math.pi, math.pi))
            try:
                rig = build(self.cfg, self.phys_terrain, (x0, y0, yaw))
            except SpawnError:
                if ep.spawn is not None:
                    raise
                continue
            # rough ground keeps a little residual creep; 5 cm/s is "settled"
            if rig.max_speed() < 0.05 and not rig.chassis_contacts():
                break
            if ep.spawn is not None:
                break
        else:
            raise SpawnError("could not settle the vehicle after 10 spawn attempts")
        self.rig = rig
        self.episode = ep

        if ep.targets is not None:
            self._targets = [tuple(t) for t in ep.targets]
        else:
            # anchor the arc on the settled navigation reference (front frame)
            anchor = rig.read_proprioception().pose
            self._targets = [sample_target(self.rng, anchor, ep.psi_range,
                                           self.cfg.env.target_distance)]
        self._target_idx = 0
        self.auto_advance = len(self._targets) > 1

        if ep.mode == "tc":
            delays = ep.delays or DelaySet.sample(self.cfg, self.rng)
        else:
            delays = ep.delays or DelaySet()
        self.episode = replace(ep, delays=delays)
        self.delays = ActionDelays(delays, self.cfg.env.f_control)
        self.steering.reset()
        self.suspension.reset()

        self.t = 0
        self.prev_action = np.zeros(8)
        proprio = rig.read_proprioception()
        self._d0 = self._distance(proprio)
        self._prev_state = self._reward_state(proprio)
        frame = self._frame(proprio, self.prev_action)
        self._frames = [frame.copy() for _ in range(WINDOW)]
        return self._observation(proprio)

    # -- per-step helpers -------------------------------------------------------

    def target(self) -> tuple[float, float, float]:
        return self._targets[self._target_idx]

    def set_target(self, target: tuple[float, float, float]) -> None:
        """Replace the active target (live route driving)."""
        self._targets[self._target_idx] = tuple(target)
        proprio = self.rig.read_proprioception()
        self._d0 = self._distance(proprio)
        self._prev_state = self._reward_state(proprio)

    def advance_target(self) -> bool:
        """Move to the next queued target; False when none remain."""
        if self._target_idx + 1 >= len(self._targets):
            return False
        self._target_idx += 1
        proprio = self.rig.read_proprioception()
        self._d0 = self._distance(proprio)
        self._prev_state = self._reward_state(proprio)
        return True

    def queue_targets(self, targets: list[tuple[float, float, float]]) -> None:
        self._targets.extend(tuple(t) for t in targets)

    def _distance(self, proprio) -> float:
        tx, ty, _ = self.target()
        return math.hypot(tx - proprio.pose[0], ty - proprio.pose[1])

    def _reward_state(self, proprio) -> RewardState:
        _, _, t_psi = self.target()
        return RewardState(
            distance=self._distance(proprio),
            heading_error=wrap_angle(proprio.pose[2] - t_psi),
            speed=proprio.speed,
            forces=proprio.forces.copy(),
            roll=proprio.roll)

    def _frame(self, proprio, prev_action: np.ndarray) -> np.ndarray:
        """One 28-value proprioceptive frame, noisy in tc mode."""
        cfg = self.cfg
        e = cfg.env
        noisy = self.episode.mode == "tc"
        x, y, yaw = proprio.pose
        tx, ty, t_psi = self.target()
        if noisy:
            x = x + self.rng.normal(0.0, e.position_noise_std)
            y = y + self.rng.normal(0.0, e.position_noise_std)
            yaw = yaw + self.rng.normal(0.0, e.heading_noise_std)
        dx, dy = tx - x, ty - y
        c, s = math.cos(-yaw), math.sin(-yaw)
        rel_x = c * dx - s * dy
        rel_y = s * dx + c * dy
        psi = wrap_angle(yaw - t_psi)
        v = proprio.speed
        if noisy:
            v = v + self.rng.normal(0.0, e.planar_velocity_noise_std)
        # a tighter scale than the spawn distance keeps the final-approach
        # offsets visible to the tanh encoders
        dist = 10.0
        frame = np.concatenate([
            [rel_x / dist, rel_y / dist, psi / math.pi,
             v / cfg.vehicle.v_max,
             proprio.roll / (math.pi / 4.0), proprio.pitch / (math.pi / 4.0)],
            proprio.extensions / cfg.vehicle.suspension_stroke,
            proprio.articulation / cfg.steering.angle_range,
            np.clip(proprio.forces / proprio.force_sum_static, -1.0, 1.0),
            prev_action,
        ])
        return frame

    def _local_map(self, proprio) -> LocalMap:
        e = self.cfg.env
        x, y, yaw = proprio.pose
        ref = proprio.height - (self.cfg.vehicle.wheel_radius
                                + self.cfg.vehicle.arm_drop
                                + self.cfg.vehicle.nominal_extension)
        std = e.heightmap_noise_std if self.episode.mode == "tc" else 0.0
        return extract_local_map(self.map_terrain, (x, y, yaw, ref), std, self.rng)

    def _observation(self, proprio) -> np.ndarray:
        local = self._local_map(proprio)
        return np.concatenate([np.concatenate(self._frames), local.flat()])

    # -- stepping ------------------------------------------------------------------

    def step(self, action: np.ndarray,
             suspension_rates: np.ndarray | None = None
             ) -> tuple[np.ndarray, float, bool, dict]:
        """Advance one control step (six dynamics substeps).

        `suspension_rates` bypasses the policy/PI path with direct cylinder
        rate commands (the conventional-controller experiments).
        """
        if self.rig is None:
            raise InvalidParameterError("reset the environment first")
        cfg = self.cfg
        action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        if action.shape != (8,):
            raise InvalidParameterError("action must have 8 components")
        delayed = self.delays.apply(action) if self.episode.mode == "tc" else action.copy()

        rig = self.rig
        proprio = rig.read_proprioception()
        rig.transmission_update(delayed[0] * cfg.vehicle.v_max)
        front_target = delayed[1] * cfg.steering.angle_range
        dt_c = 1.0 / cfg.env.f_control
        f_cmd, r_cmd = self.steering.step(front_target, proprio, dt_c)
        rig.set_steering_motors(f_cmd, r_cmd)
        info: dict = {}
        if suspension_rates is None:
            lo, hi = cfg.suspension.target_min, cfg.suspension.target_max
            targets = lo + (delayed[2:8] + 1.0) / 2.0 * (hi - lo)
            rates, clamped = self.suspension.step(targets, proprio, dt_c)
            if clamped:
                info["suspension_target_clamped"] = True
        else:
            cap = cfg.suspension.full_speed
            rates = np.clip(np.asarray(suspension_rates, dtype=float), -cap, cap)

        diverged = False
        try:
            for _ in range(self.substeps):
                for arm in range(6):
                    rig.shift_lock_rest(arm, rates[arm], DT)
                rig.apply_drift(DT)
                rig.world.step()
        except Exception as exc:  # divergence carries its step index
            diverged = True
            info["diverged"] = str(exc)

        self.t += 1
        proprio = rig.read_proprioception()
        state = self._reward_state(proprio)
        breakdown = compute_reward(state, self._prev_state, action,
                                   self.prev_action, self.episode.mode, cfg)

        terminated = False
        reason = ""
        if diverged:
            terminated, reason = True, "diverged"
        elif breakdown.success:
            terminated, reason = True, "success"
        elif abs(proprio.roll) > math.radians(cfg.env.roll_limit_deg):
            terminated, reason = True, "rollover"
        elif rig.chassis_contacts():
            terminated, reason = True, "chassis_contact"
        elif state.distance > self._d0 + cfg.env.miss_margin:
            terminated, reason = True, "missed"
        elif self.t >= cfg.env.horizon:
            terminated, reason = True, "horizon"
            info["truncated"] = True
        if (terminated and self.auto_advance and reason in ("success", "missed")
                and self.advance_target()):
            # multi-target routes roll straight on to the next pose
            terminated = False
            info["target_event"] = reason
            state = self._prev_state  # refreshed by advance_target
            self.t = 0

        frame = self._frame(proprio, action)
        self._frames.pop(0)
        self._frames.append(frame)
        obs = self._observation(proprio)

        info.update(reward=breakdown, state=state, proprio=proprio,
                    delayed_action=delayed, t=self.t, reason=reason)
        self._prev_state = state
        self.prev_action = action.copy()
        return obs, breakdown.total, terminated, info


class VectorEnv:
    """Synchronous batch of environments with a fixed reduction order."""

    def __init__(self, cfg: RunConfig, n_envs: int, mode: str, lesson: int,
                 seed: int):
        self.cfg = cfg
        self.envs = [DrivingEnv(cfg) for _ in range(n_envs)]
        self.mode = mode
        self.lesson = lesson
        self.rngs = [np.random.Generator(np.random.PCG64([seed, k]))
                     for k in range(n_envs)]
        self._episode_counter = [0] * n_envs

    def _episode(self, k: int) -> EpisodeConfig:
        seed_base = int(self.rngs[k].integers(0, 2 ** 31))
        self._episode_counter[k] += 1
        return EpisodeConfig(lesson=self.lesson, mode=self.mode,
                             terrain_seed=seed_base)

    def reset_all(self) -> np.ndarray:
        return np.stack([env.reset(self._episode(k), self.rngs[k])
                         for k, env in enumerate(self.envs)])

    def step(self, actions: np.ndarray):
        """Steps every env; auto-resets finished ones.

        Returns (obs, rewards, dones, truncateds, infos); `obs` rows for done
        envs are the first observation of the next episode.
        """
        obs_rows = []
        rewards = np.zeros(len(self.envs))
        dones = np.zeros(len(self.envs), dtype=bool)
        truncs = np.zeros(len(self.envs), dtype=bool)
        infos: list[dict] = []
        for k, env in enumerate(self.envs):
            obs, rew, done, info = env.step(actions[k])
            rewards[k] = rew
            dones[k] = done
            truncs[k] = bool(info.get("truncated", False))
            if done:
                info["final_obs"] = obs
                obs = env.reset(self._episode(k), self.rngs[k])
            obs_rows.append(obs)
            infos.append(info)
        return np.stack(obs_rows), rewards, dones, truncs, infos
