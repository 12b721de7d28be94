"""The six-wheeled articulated rig: assembly, transmission, proprioception.

Three chassis sections joined by two steered hinges; each section carries a
left and a right pendulum arm modeled as a vertical slider with a compliant
position lock, and each arm carries a spherical wheel on a lateral hinge.
The drivetrain is a central speed-controlled engine feeding two differential
circuits, cross-connected: circuit A drives front-left, middle-right and
rear-right; circuit B the mirror set.

Arm index order everywhere: FL, FR, ML, MR, RL, RR (y > 0 is left).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .dynamics import (DT, World, quat_from_yaw, quat_rotate, quat_to_euler)
from .errors import InvalidParameterError, SpawnError
from .terrain import Terrain, height_at_many

ARM_SIDE = np.array([+1, -1, +1, -1, +1, -1], dtype=float)   # +1 = left
ARM_FRONT = np.array([+1, +1, 0, 0, -1, -1], dtype=float)    # +1 = front pair
CIRCUIT_A = (0, 3, 5)   # FL, MR, RR
CIRCUIT_B = (1, 2, 4)   # FR, ML, RL


@dataclass(frozen=True)
class VehicleSpec:
    """Machine constants of the rig."""
    total_mass: float
    wheel_radius: float
    suspension_stroke: float
    engine_max_torque: float
    engine_power: float
    wheel_mass: float
    arm_mass: float
    section_masses: tuple[float, float, float]
    section_lengths: tuple[float, float, float]
    track_width: float
    arm_drop: float
    nominal_extension: float
    front_mount_opposite: bool
    v_max: float

    def __post_init__(self):
        unsprung = 6.0 * (self.wheel_mass + self.arm_mass)
        if abs(sum(self.section_masses) - (self.total_mass - unsprung)) > 1.0:
            raise InvalidParameterError(
                "section masses must sum to total minus wheels and arms")
        if abs(self.suspension_stroke - 0.50) > 1e-9:
            raise InvalidParameterError("suspension stroke is 0.50 m")
        if abs(self.wheel_radius - 0.74) > 1e-9:
            raise InvalidParameterError("wheel radius is 0.74 m")

    @property
    def sprung_mass(self) -> float:
        return sum(self.section_masses)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "VehicleSpec":
        v = cfg.vehicle
        unsprung = 6.0 * (v.wheel_mass + v.arm_mass)
        sprung = v.total_mass - unsprung
        masses = tuple(sprung * s for s in v.mass_split)
        return cls(total_mass=v.total_mass, wheel_radius=v.wheel_radius,
                   suspension_stroke=v.suspension_stroke,
                   engine_max_torque=v.engine_max_torque,
                   engine_power=v.engine_power,
                   wheel_mass=v.wheel_mass, arm_mass=v.arm_mass,
                   section_masses=masses,
                   section_lengths=tuple(v.section_lengths),
                   track_width=v.track_width, arm_drop=v.arm_drop,
                   nominal_extension=v.nominal_extension,
                   front_mount_opposite=v.front_mount_opposite,
                   v_max=v.v_max)


@dataclass
class Proprioception:
    """On-board readings; forces carry the calibration rescale factor."""
    extensions: np.ndarray        # 6, m
    articulation: np.ndarray      # (front, rear), rad
    forces: np.ndarray            # 6, N
    roll: float                   # rad, front frame; > 0 rolls right side down
    pitch: float                  # rad; > 0 noses down
    speed: float                  # m/s, signed forward speed of the front frame
    pose: tuple[float, float, float]   # (x, y, yaw) of the front frame
    height: float                 # z of the front frame center
    force_sum_static: float       # N, captured after settling


def _box_inertia(mass: float, lx: float, ly: float, lz: float):
    return (mass / 12.0 * (ly * ly + lz * lz),
            mass / 12.0 * (lx * lx + lz * lz),
            mass / 12.0 * (lx * lx + ly * ly))


class VehicleRig:
    """Assembled vehicle plus handles for the actuation layer."""

    def __init__(self, world: World, spec: VehicleSpec, cfg: RunConfig,
                 sections: list[int], arms: list[int], wheels: list[int],
                 steer_hinges: tuple[int, int], wheel_hinges: list[int],
                 prisms: list[int], circuits: tuple[int, int]):
        self.world = world
        self.spec = spec
        self.cfg = cfg
        self.sections = sections
        self.arms = arms
        self.wheels = wheels
        self.steer_front, self.steer_rear = steer_hinges
        self.wheel_hinges = wheel_hinges
        self.prisms = prisms
        self.circuits = circuits
        self.force_sum_static = spec.sprung_mass * 9.81

    # -- drive ----------------------------------------------------------------

    def transmission_update(self, target_speed: float) -> None:
        """Set the engine speed target from a vehicle speed in m/s.

        At zero target the wheel motors fall back to the higher parking
        resistance; hydraulic fluid resists rotation outside driving mode.
        """
        v = min(max(target_speed, -self.spec.v_max), self.spec.v_max)
        omega = v / self.spec.wheel_radius
        for c in self.circuits:
            self.world.set_engine(c, omega)
        resist = (self.cfg.engine.parking_resistance if v == 0.0
                  else self.cfg.engine.rolling_resistance)
        for h in self.wheel_hinges:
            self.world.set_brake(h, resist)

    def set_steering_motors(self, front_speed: float, rear_speed: float) -> None:
        self.world.set_motor_target(self.steer_front, front_speed)
        self.world.set_motor_target(self.steer_rear, rear_speed)

    def shift_lock_rest(self, arm: int, rate: float, dt: float) -> None:
        """Advance an arm lock's rest position by rate*dt, clamped to the stroke."""
        w = self.world
        w.set_lock_rest(self.prisms[arm], w.lock_rest(self.prisms[arm]) + rate * dt)

    def lock_rests(self) -> np.ndarray:
        return np.array([self.world.lock_rest(p) for p in self.prisms])

    def apply_drift(self, dt: float) -> None:
        """Unloaded arms slowly extend; mirrors the machine's inability to
        hold an airborne arm in place."""
        drift = self.cfg.suspension.drift_speed
        if drift <= 0.0:
            return
        forces = self.world.lock_forces()
        thr = self.cfg.suspension.force_threshold
        for i, p in enumerate(self.prisms):
            if abs(forces[i]) < thr:
                self.world.set_lock_rest(p, self.world.lock_rest(p) + drift * dt)

    # -- sensing ----------------------------------------------------------------

    def read_proprioception(self) -> Proprioception:
        w = self.world
        angles = w.hinge_angles()
        exts = w.extensions()
        forces = w.lock_forces() * self.cfg.suspension.force_rescale
        front = self.sections[0]
        roll, pitch, yaw = quat_to_euler(w.quat[front])
        fwd = quat_rotate(w.quat[front], np.array([1.0, 0.0, 0.0]))
        v_planar = w.vel[front].copy()
        v_planar[2] = 0.0
        fwd_planar = fwd.copy()
        fwd_planar[2] = 0.0
        n = np.linalg.norm(fwd_planar)
        speed = float(v_planar @ fwd_planar / n) if n > 1e-9 else 0.0
        return Proprioception(
            extensions=exts,
            articulation=np.array([angles[self.steer_front],
                                   angles[self.steer_rear]]),
            forces=forces,
            roll=roll, pitch=pitch, speed=speed,
            pose=(float(w.pos[front, 0]), float(w.pos[front, 1]), yaw),
            height=float(w.pos[front, 2]),
            force_sum_static=self.force_sum_static)

    def normalized_forces(self) -> np.ndarray:
        p = self.read_proprioception()
        return np.clip(p.forces / p.force_sum_static, -1.0, 1.0)

    def max_speed(self) -> float:
        return float(np.max(np.linalg.norm(
            self.world.vel[self.sections + self.arms + self.wheels], axis=1)))

    def chassis_contacts(self) -> bool:
        """True when any non-wheel body touches the ground."""
        bodies, _, _, _, _ = self.world.contact_arrays()
        wheel_set = set(self.wheels)
        return any(int(b) not in wheel_set for b in bodies)

    def settle(self, duration: float = 2.0, quiet_speed: float | None = None,
               extra: float = 2.0) -> None:
        """Run the settle phase; optionally keep going (up to `extra` seconds)
        until the rig is quieter than `quiet_speed`."""
        for _ in range(int(round(duration / DT))):
            self.world.step()
        if quiet_speed is not None:
            for _ in range(int(round(extra / 0.25))):
                if self.max_speed() < quiet_speed:
                    break
                for _ in range(int(round(0.25 / DT))):
                    self.world.step()
        self.force_sum_static = float(np.sum(self.world.lock_forces())
                                      * self.cfg.suspension.force_rescale)


def build(cfg: RunConfig, terrain: Terrain, pose: tuple[float, float, float],
          settle: bool = True) -> VehicleRig:
    """Assemble the rig at a planar pose and (optionally) let it settle.

    Raises SpawnError when a wheel would start more than its radius below
    the ground surface.
    """
    spec = VehicleSpec.from_config(cfg)
    x0, y0, yaw = pose
    q = quat_from_yaw(yaw)

    s = cfg.suspension
    lengths = spec.section_lengths
    # section centers along local x; hinges at the shared section boundaries
    mid_half = lengths[1] / 2.0
    cx = [mid_half + lengths[0] / 2.0, 0.0, -(mid_half + lengths[2] / 2.0)]
    hinge_x = [mid_half, -mid_half]
    axle_x = cx
    half_track = spec.track_width / 2.0

    ext0 = spec.nominal_extension
    h_c = spec.wheel_radius + spec.arm_drop + ext0  # chassis center height

    # wheel ground heights decide the spawn elevation
    arm_xy = []
    for section in range(3):
        for side in (+1, -1):  # left, right
            arm_xy.append((axle_x[section], side * half_track))
    rot = np.array([[math.cos(yaw), -math.sin(yaw)],
                    [math.sin(yaw), math.cos(yaw)]])
    pts = np.array([[x0, y0]]) + (rot @ np.array(arm_xy).T).T
    grounds = height_at_many(terrain, pts[:, 0], pts[:, 1], clamp=True)
    base = float(np.max(grounds))
    clearance = 0.005
    z_c = base + h_c + clearance
    wheel_z = z_c - spec.arm_drop - ext0  # wheel center z before settle

    # terrain rising more than a wheel radius above the plane of the wheel
    # contact levels would start the rig interpenetrated
    plane_a = np.column_stack([np.ones(6), pts[:, 0], pts[:, 1]])
    coef, *_ = np.linalg.lstsq(plane_a, grounds, rcond=None)
    span_x = lengths[0] + lengths[1] + lengths[2]
    fx = np.arange(-span_x / 2 - 0.5, span_x / 2 + 0.5, 0.3)
    fy = np.arange(-half_track - 0.4, half_track + 0.4, 0.3)
    fxg, fyg = np.meshgrid(fx, fy)
    foot = np.array([[x0, y0]]) + (rot @ np.stack(
        [fxg.ravel(), fyg.ravel()])).T
    foot_h = height_at_many(terrain, foot[:, 0], foot[:, 1], clamp=True)
    plane_h = coef[0] + coef[1] * foot[:, 0] + coef[2] * foot[:, 1]
    if float(np.max(foot_h - plane_h)) > spec.wheel_radius:
        raise SpawnError("terrain intersects the rig by more than a wheel radius")

    world = World(iterations=cfg.solver.iterations, baumgarte=cfg.solver.baumgarte,
                  contact_youngs=cfg.contact.youngs_modulus,
                  contact_friction=cfg.contact.friction,
                  contact_restitution=cfg.contact.restitution,
                  contact_damping=cfg.contact.damping)
    world.set_terrain(terrain)

    def to_world(px, py, pz):
        p = rot @ np.array([px, py])
        return np.array([x0 + p[0], y0 + p[1], pz])

    v = cfg.vehicle
    sections = []
    for k in range(3):
        inertia = _box_inertia(spec.section_masses[k], lengths[k],
                               v.section_width, v.section_height)
        sections.append(world.add_body(
            spec.section_masses[k], inertia, to_world(cx[k], 0.0, z_c), q,
            shape=("box", (lengths[k] / 2, v.section_width / 2,
                           v.section_height / 2)),
            name=("front", "middle", "rear")[k] + "_section"))

    arm_dims = (0.3, 0.3, 0.7)
    arm_z = wheel_z + 0.35
    arms, wheels, prisms, wheel_hinges = [], [], [], []
    names = ("fl", "fr", "ml", "mr", "rl", "rr")
    wheel_inertia = 0.4 * spec.wheel_mass * spec.wheel_radius ** 2
    for i, (ax, ay) in enumerate(arm_xy):
        section = sections[i // 2]
        ai = tuple(x * s.arm_inertia_scale for x in
                   _box_inertia(spec.arm_mass, *arm_dims))
        arm = world.add_body(spec.arm_mass, ai, to_world(ax, ay, arm_z), q,
                             name=f"arm_{names[i]}")
        wheel = world.add_body(spec.wheel_mass, (wheel_inertia,) * 3,
                               to_world(ax, ay, wheel_z), q,
                               shape=("sphere", spec.wheel_radius),
                               name=f"wheel_{names[i]}")
        prisms.append(world.add_prismatic(
            section, arm, origin=to_world(ax, ay, arm_z + ext0),
            axis=quat_rotate(q, np.array([0.0, 0.0, -1.0])),
            ext_range=(s.stroke_min, s.stroke_max),
            lock_rest=ext0, lock_compliance=s.lock_compliance,
            lock_damping=s.lock_damping, lock_force=(s.force_min, s.force_max),
            compliance=s.joint_compliance, damping=s.joint_damping))
        wheel_hinges.append(world.add_hinge(
            arm, wheel, anchor=to_world(ax, ay, wheel_z),
            axis=quat_rotate(q, np.array([0.0, 1.0, 0.0])),
            brake=cfg.engine.parking_resistance))
        arms.append(arm)
        wheels.append(wheel)

    st = cfg.steering
    up = quat_rotate(q, np.array([0.0, 0.0, 1.0]))
    steer_front = world.add_hinge(
        sections[1], sections[0], anchor=to_world(hinge_x[0], 0.0, z_c), axis=up,
        motor=True, motor_torque=st.torque_limit,
        limits=(-st.angle_range, st.angle_range),
        compliance=st.hinge_compliance, damping=st.hinge_damping)
    steer_rear = world.add_hinge(
        sections[2], sections[1], anchor=to_world(hinge_x[1], 0.0, z_c), axis=up,
        motor=True, motor_torque=st.torque_limit,
        limits=(-st.angle_range, st.angle_range),
        compliance=st.hinge_compliance, damping=st.hinge_damping)

    shaft_a = world.add_shaft(cfg.engine.shaft_inertia)
    shaft_b = world.add_shaft(cfg.engine.shaft_inertia)
    circuit_a = world.add_circuit(shaft_a, tuple(wheel_hinges[i] for i in CIRCUIT_A),
                                  torque_limit=cfg.engine.torque_limit)
    circuit_b = world.add_circuit(shaft_b, tuple(wheel_hinges[i] for i in CIRCUIT_B),
                                  torque_limit=cfg.engine.torque_limit)

    rig = VehicleRig(world, spec, cfg, sections, arms, wheels,
                     (steer_front, steer_rear), wheel_hinges, prisms,
                     (circuit_a, circuit_b))
    if settle:
        rig.settle(cfg.env.settle_time, quiet_speed=0.04)
    return rig


# ---------------------------------------------------------------------------
# Scripted cascade controller (the machine's conventional suspension mode)

@dataclass
class BaselineGains:
    roll: float = 0.8          # rate request per rad of roll
    pitch: float = 0.8
    height: float = 0.8        # per metre of mean-extension error
    pressure: float = 0.5      # per unit of normalized force imbalance
    rate: float = 1.0          # inner loop: rate command per request unit


def baseline_suspension_controller(proprio: Proprioception,
                                   gains: BaselineGains | None = None,
                                   nominal: float = 0.125) -> np.ndarray:
    """Cascade of four proportional controllers, output as extension rates.

    Roll and pitch request opposite changes across the respective sides,
    height recenters the mean extension, and the pressure term evens out the
    normalized ground forces.  The weighted sum passes through an inner
    proportional loop to become per-arm extension-rate commands.
    """
    g = gains or BaselineGains()
    f_norm = proprio.forces / proprio.force_sum_static
    mean_f = float(np.mean(f_norm))
    mean_ext = float(np.mean(proprio.extensions))
    request = (g.roll * proprio.roll * (-ARM_SIDE)
               + g.pitch * proprio.pitch * ARM_FRONT
               + g.height * (nominal - mean_ext)
               + g.pressure * (mean_f - f_norm))
    return g.rate * request
