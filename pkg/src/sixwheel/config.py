"""Run configuration: nested sections, dotted-path access, YAML loading, hashing.

Every tunable simulation parameter (controller gains, actuator limits, lock
compliance, contact material, delays, ...) lives here so the sysid fitter can
address it by a dotted path like ``suspension.kp`` and the CLI can override it
from a config file.  Unknown keys in a config file are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass
class TerrainConfig:
    extent: float = 60.0          # m per side
    cell_size: float = 0.1        # m
    amplitude: float = 0.10       # m
    octaves: int = 4
    roughness: float = 0.5        # per-octave amplitude falloff


@dataclass
class VehicleConfig:
    total_mass: float = 31000.0   # kg, full machine
    wheel_radius: float = 0.74    # m
    suspension_stroke: float = 0.50  # m
    engine_max_torque: float = 1300.0   # N*m, nameplate
    engine_power: float = 150000.0      # W, nameplate
    wheel_mass: float = 250.0
    arm_mass: float = 250.0
    mass_split: list[float] = field(default_factory=lambda: [0.40, 0.30, 0.30])
    section_lengths: list[float] = field(default_factory=lambda: [2.5, 2.0, 2.5])
    section_width: float = 1.4    # chassis box width
    section_height: float = 0.9   # chassis box height
    track_width: float = 2.2      # wheel center to wheel center
    arm_drop: float = 0.60        # chassis center to extension origin, m
    nominal_extension: float = 0.125
    front_mount_opposite: bool = True  # front arms hinge on the opposite side
    v_max: float = 1.5            # m/s, throttle full scale


@dataclass
class SteeringConfig:
    # 14 tunable parameters of the articulated steering.
    kp: float = 0.025             # motor speed per degree of error
    ki: float = 0.2               # 1/s
    kd: float = 0.0
    integral_limit: float = 100.0
    angle_range: float = 0.61     # rad, hinge travel each way
    torque_limit: float = 150000.0  # N*m hinge motor
    speed_limit: float = 0.35     # rad/s commanded hinge speed clamp
    rear_kp: float = 0.025
    rear_ki: float = 0.2
    rear_ratio: float = 0.56      # rear target as fraction of front angle
    rear_lag: float = 0.3         # s, first-order lag on the rear target
    speed_threshold: float = 0.0833  # m/s, no turning below this speed
    hinge_compliance: float = 1.0e-10
    hinge_damping: float = 0.0333


@dataclass
class SuspensionConfig:
    # 24 tunable parameters of the pendulum-arm actuation.
    kp: float = 0.004             # valve fraction per mm of error
    ki: float = 0.0001            # per (mm*s)
    kd: float = 0.0
    windup_limit: float = 100.0   # clamp on the error integral
    target_min: float = 0.0       # m, policy-facing target range
    target_max: float = 0.25
    full_speed: float = 0.10      # m/s cylinder rate at full valve
    rate_cap_fraction: float = 0.30
    extend_speed_limit: float = 0.10    # m/s, per-direction caps
    contract_speed_limit: float = 0.10
    lock_compliance: float = 2.0e-8     # m/N
    lock_damping: float = 0.06          # s
    force_min: float = -400000.0        # N, lock force range
    force_max: float = 400000.0
    force_threshold: float = 5000.0     # N, below this an arm counts as unloaded
    drift_speed: float = 0.0            # m/s rest-position drift on unloaded arms
    delay_min: float = 0.1              # s, actuation delay sampling range
    delay_max: float = 0.2
    stroke_min: float = 0.0             # m, hard joint range
    stroke_max: float = 0.50
    joint_compliance: float = 1.0e-10
    joint_damping: float = 0.0333
    arm_inertia_scale: float = 1.0
    force_rescale: float = 1.0          # applied to force readings


@dataclass
class EngineConfig:
    torque_limit: float = 30000.0   # N*m per circuit, wheel side (gear folded in)
    rolling_resistance: float = 1000.0  # N*m per wheel
    parking_resistance: float = 8000.0  # N*m per wheel when not in driving mode
    shaft_inertia: float = 5.0      # kg*m^2 virtual input shaft
    throttle_delay_min: float = 0.2
    throttle_delay_max: float = 0.7
    articulation_delay_min: float = 0.2
    articulation_delay_max: float = 0.5


@dataclass
class ContactConfig:
    youngs_modulus: float = 2.0e7   # Pa-like stiffness scale
    restitution: float = 0.0
    friction: float = 0.8
    damping: float = 0.0333         # s


@dataclass
class SolverConfig:
    iterations: int = 24
    baumgarte: float = 0.2
    dt: float = 1.0 / 60.0


@dataclass
class EnvConfig:
    f_control: float = 10.0
    horizon: int = 450
    target_distance: float = 25.0
    success_radius: float = 0.3
    success_heading_deg: float = 9.0
    success_roll_deg: float = 7.5
    roll_limit_deg: float = 30.0
    miss_margin: float = 5.0        # terminal when d > d0 + margin
    settle_time: float = 2.0        # s before episode start
    map_half_window: float = 2.5    # relative heights [-w, +w] map to [0, 1]
    heightmap_noise_std: float = 0.045   # m
    position_noise_std: float = 0.005    # m
    planar_velocity_noise_std: float = 0.075  # m/s
    vertical_velocity_noise_std: float = 0.025  # m/s (unused channel, kept for logs)
    heading_noise_std: float = 0.005     # rad


@dataclass
class RewardConfig:
    k_tar: float = 12.5
    v_lim: float = 0.8
    k_speed: float = 2.0
    k_d: float = 5.0
    k_forces: float = 0.1
    k_phi: float = math.pi / 16.0
    m_throttle: float = -0.01
    m_steering: float = -0.01
    m_suspension: float = -0.05


@dataclass
class LessonConfig:
    psi_range: float = math.pi / 6.0
    obstacles: bool = False
    amplitude: float = 0.10
    steps: int = 500000
    obstacle_count: int = 0


@dataclass
class CurriculumConfig:
    lesson1: LessonConfig = field(default_factory=lambda: LessonConfig(
        psi_range=math.pi / 6.0, obstacles=False, amplitude=0.10, steps=500000))
    lesson2: LessonConfig = field(default_factory=lambda: LessonConfig(
        psi_range=math.pi / 8.0, obstacles=True, amplitude=0.25, steps=200000,
        obstacle_count=40))


@dataclass
class TrainConfig:
    gamma: float = 0.995
    gae_lambda: float = 0.95
    clip: float = 0.2
    kl_stop: float = 0.1
    lr_lesson1: float = 2.5e-4
    lr_lesson2: float = 1.0e-5
    epochs: int = 10
    minibatch: int = 512
    rollout_length: int = 1024
    n_envs: int = 10
    eval_every: int = 25000
    eval_episodes: int = 20
    value_coef: float = 0.5
    log_std_init: float = math.log(0.3)


@dataclass
class RunConfig:
    seed: int = 0
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    steering: SteeringConfig = field(default_factory=SteeringConfig)
    suspension: SuspensionConfig = field(default_factory=SuspensionConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def get(self, path: str) -> Any:
        """Fetch a value by dotted path, e.g. ``suspension.kp``."""
        obj: Any = self
        for part in path.split("."):
            if not hasattr(obj, part):
                raise KeyError(f"unknown config path: {path!r}")
            obj = getattr(obj, part)
        return obj

    def set(self, path: str, value: Any) -> None:
        """Assign a value by dotted path; the leaf must already exist."""
        parts = path.split(".")
        obj: Any = self
        for part in parts[:-1]:
            if not hasattr(obj, part):
                raise KeyError(f"unknown config path: {path!r}")
            obj = getattr(obj, part)
        leaf = parts[-1]
        if not hasattr(obj, leaf):
            raise KeyError(f"unknown config path: {path!r}")
        current = getattr(obj, leaf)
        if current is not None and not isinstance(value, type(current)):
            # ints are acceptable where floats are expected, nothing else
            if isinstance(current, float) and isinstance(value, int):
                value = float(value)
            elif isinstance(current, list) and isinstance(value, list):
                pass
            else:
                raise TypeError(
                    f"config path {path!r} expects {type(current).__name__}, "
                    f"got {type(value).__name__}")
        setattr(obj, leaf, value)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Stable short hash of the fully resolved configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _apply_section(obj: Any, data: dict, prefix: str) -> None:
    for key, value in data.items():
        if not hasattr(obj, key):
            raise KeyError(f"unknown config key: {prefix}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise TypeError(f"config section {prefix}{key} must be a mapping")
            _apply_section(current, value, f"{prefix}{key}.")
        else:
            if isinstance(current, float) and isinstance(value, int):
                value = float(value)
            if current is not None and not isinstance(value, type(current)):
                raise TypeError(
                    f"config key {prefix}{key} expects {type(current).__name__}, "
                    f"got {type(value).__name__}")
            setattr(obj, key, value)


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional YAML file, and overrides.

    Overrides are a flat ``{dotted.path: value}`` mapping (CLI ``--set``).
    """
    cfg = RunConfig()
    if path is not None:
        data = yaml.safe_load(Path(path).read_text())
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise TypeError("config file must contain a mapping at top level")
        _apply_section(cfg, data, "")
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return cfg
