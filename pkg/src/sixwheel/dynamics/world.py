"""Object layer over the solver kernel: bodies, joints, stepping, queries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError, NotReadyError, SimulationDivergedError
from ..terrain import Terrain
from . import kernel

DT = 1.0 / 60.0
GRAVITY = 9.81


@dataclass(frozen=True)
class ContactPoint:
    """One solved or detected contact between a body and the terrain."""
    body: int
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    depth: float
    friction: float
    restitution: float


def _orthonormal(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    p1 = np.cross(axis, ref)
    p1 /= np.linalg.norm(p1)
    p2 = np.cross(axis, p1)
    return p1, p2


def _quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _quat_mul(a, b):
    return np.array([
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]])


def quat_rotate(q, v):
    w, x, y, z = q
    t = 2.0 * np.cross([x, y, z], v)
    return np.asarray(v) + w * t + np.cross([x, y, z], t)


def quat_rotate_inv(q, v):
    return quat_rotate(_quat_conj(np.asarray(q)), v)


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)])


def quat_to_euler(q) -> tuple[float, float, float]:
    """(roll, pitch, yaw), ZYX convention."""
    w, x, y, z = q
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    s = 2.0 * (w * y - z * x)
    pitch = math.asin(max(-1.0, min(1.0, s)))
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


class World:
    """A single-threaded rigid-body world stepped at a fixed 60 Hz.

    Build bodies and joints, then call `step()`.  The constraint structure is
    frozen on the first step; states, motor targets, and lock rest positions
    stay mutable.  Instances share nothing, so independent worlds may run on
    separate threads.
    """

    def __init__(self, iterations: int = 24, baumgarte: float = 0.2,
                 contact_youngs: float = 2.0e7, contact_friction: float = 0.8,
                 contact_restitution: float = 0.0, contact_damping: float = 2 * DT,
                 gravity: float = GRAVITY):
        self.iterations = iterations
        self.baumgarte = baumgarte
        self.contact_youngs = contact_youngs
        self.contact_friction = contact_friction
        self.contact_restitution = contact_restitution
        self.contact_damping = contact_damping
        self.gravity = gravity
        self.step_count = 0
        self.terrain: Terrain | None = None
        self.names: list[str] = []
        self._b: list[dict] = []
        self._shafts: list[float] = []
        self._hinges: list[dict] = []
        self._prisms: list[dict] = []
        self._circuits: list[dict] = []
        self._final = False

    _LAZY_STATE = ("pos", "quat", "vel", "omega", "shaft_w", "mass", "inv_mass",
                   "inv_inertia_b", "shape_type", "shape_size", "collide",
                   "shaft_inv_inertia")

    def __getattr__(self, name):
        # state arrays materialize on first access (builder finalization)
        if name in World._LAZY_STATE and not self.__dict__.get("_final", False):
            self._finalize()
            return self.__dict__[name]
        raise AttributeError(name)

    # -- construction -------------------------------------------------------

    def _check_building(self) -> None:
        if self._final:
            raise InvalidParameterError(
                "world structure is frozen once state arrays exist")

    def add_body(self, mass: float, inertia, pos, quat=(1.0, 0.0, 0.0, 0.0),
                 shape: tuple | None = None, static: bool = False,
                 collide: bool = True, name: str = "") -> int:
        self._check_building()
        if not static and mass <= 0.0:
            raise InvalidParameterError("dynamic bodies need positive mass")
        stype, ssize = 0, (0.0, 0.0, 0.0)
        if shape is not None:
            kind, dims = shape
            if kind == "sphere":
                stype, ssize = 1, (float(dims), 0.0, 0.0)
            elif kind == "box":
                stype, ssize = 2, tuple(float(v) for v in dims)
            else:
                raise InvalidParameterError(f"unknown shape {kind!r}")
        self._b.append(dict(mass=mass, inertia=np.asarray(inertia, float),
                            pos=np.asarray(pos, float),
                            quat=np.asarray(quat, float),
                            static=static, stype=stype, ssize=ssize,
                            collide=collide))
        self.names.append(name or f"body{len(self._b) - 1}")
        return len(self._b) - 1

    def add_shaft(self, inertia: float) -> int:
        self._check_building()
        self._shafts.append(float(inertia))
        return len(self._shafts) - 1

    def add_hinge(self, body_a: int, body_b: int, anchor, axis,
                  motor: bool = False, motor_torque: float = 0.0,
                  limits: tuple[float, float] | None = None,
                  brake: float = 0.0, compliance: float = 1.0e-10,
                  damping: float = 2 * DT) -> int:
        """Hinge between two bodies; anchor/axis in world coords at build pose."""
        self._check_building()
        a, b = self._b[body_a], self._b[body_b]
        axis = np.asarray(axis, float)
        axis = axis / np.linalg.norm(axis)
        axis_a = quat_rotate_inv(a["quat"], axis)
        perp1, perp2 = _orthonormal(axis_a)
        ref_a = perp1.copy()
        # matching reference on b so the angle reads zero at build
        axis_b = quat_rotate_inv(b["quat"], axis)
        ref_b = quat_rotate_inv(b["quat"], quat_rotate(a["quat"], ref_a))
        self._hinges.append(dict(
            body=(body_a, body_b),
            anchor_a=quat_rotate_inv(a["quat"], np.asarray(anchor, float) - a["pos"]),
            anchor_b=quat_rotate_inv(b["quat"], np.asarray(anchor, float) - b["pos"]),
            axis_a=axis_a, axis_b=axis_b, perp1=perp1, perp2=perp2,
            ref_a=ref_a, ref_b=ref_b,
            motor=motor, motor_torque=motor_torque,
            limits=limits if limits is not None else (-1.0e18, 1.0e18),
            brake=brake, eps=compliance, tau=damping))
        return len(self._hinges) - 1

    def add_prismatic(self, body_a: int, body_b: int, origin, axis,
                      ext_range: tuple[float, float],
                      lock_rest: float, lock_compliance: float,
                      lock_damping: float,
                      lock_force: tuple[float, float],
                      compliance: float = 1.0e-10,
                      damping: float = 2 * DT) -> int:
        """Slider along `axis`; the compliant lock holds extension at its rest.

        `origin` (world) marks extension zero on body_a's axis; body_b's
        reference point is its current position projected on the axis.
        """
        self._check_building()
        a, b = self._b[body_a], self._b[body_b]
        axis = np.asarray(axis, float)
        axis = axis / np.linalg.norm(axis)
        axis_a = quat_rotate_inv(a["quat"], axis)
        perp1, perp2 = _orthonormal(axis_a)
        q_rel0 = _quat_mul(_quat_conj(a["quat"]), b["quat"])
        self._prisms.append(dict(
            body=(body_a, body_b),
            anchor_a=quat_rotate_inv(a["quat"], np.asarray(origin, float) - a["pos"]),
            anchor_b=np.zeros(3),
            axis_a=axis_a, perp1=perp1, perp2=perp2, rot_ref=q_rel0,
            ext_range=ext_range, rest=lock_rest, eps=lock_compliance,
            tau=lock_damping, force=lock_force,
            joint_eps=compliance, joint_tau=damping))
        return len(self._prisms) - 1

    def add_circuit(self, shaft: int, wheel_hinges: tuple[int, int, int],
                    torque_limit: float) -> int:
        """Engine-fed differential over three wheel hinges."""
        self._check_building()
        self._circuits.append(dict(shaft=shaft, hinges=tuple(wheel_hinges),
                                   target=0.0, torque=torque_limit))
        return len(self._circuits) - 1

    def set_terrain(self, terrain: Terrain | None) -> None:
        self.terrain = terrain

    # -- runtime controls ----------------------------------------------------

    def set_motor_target(self, hinge: int, speed: float) -> None:
        if self._final:
            self._h_motor_target[hinge] = speed
        else:
            self._hinges[hinge]["motor_target"] = speed

    def set_brake(self, hinge: int, torque: float) -> None:
        if self._final:
            self._h_brake[hinge] = torque
        else:
            self._hinges[hinge]["brake"] = torque

    def set_lock_rest(self, prism: int, rest: float) -> None:
        lo, hi = ((self._p_range[prism, 0], self._p_range[prism, 1])
                  if self._final else self._prisms[prism]["ext_range"])
        rest = min(max(rest, lo), hi)
        if self._final:
            self._p_rest[prism] = rest
        else:
            self._prisms[prism]["rest"] = rest

    def lock_rest(self, prism: int) -> float:
        return float(self._p_rest[prism]) if self._final \
            else float(self._prisms[prism]["rest"])

    def set_engine(self, circuit: int, target_speed: float,
                   torque_limit: float | None = None) -> None:
        if self._final:
            self._t_target[circuit] = target_speed
            if torque_limit is not None:
                self._t_torque[circuit] = torque_limit
        else:
            self._circuits[circuit]["target"] = target_speed
            if torque_limit is not None:
                self._circuits[circuit]["torque"] = torque_limit

    # -- finalization ---------------------------------------------------------

    def _finalize(self) -> None:
        nb = len(self._b)
        self.inv_mass = np.zeros(nb)
        self.inv_inertia_b = np.zeros((nb, 3))
        self.mass = np.zeros(nb)
        self.pos = np.zeros((nb, 3))
        self.quat = np.zeros((nb, 4))
        self.vel = np.zeros((nb, 3))
        self.omega = np.zeros((nb, 3))
        self.shape_type = np.zeros(nb, np.int64)
        self.shape_size = np.zeros((nb, 3))
        self.collide = np.zeros(nb, np.int64)
        for i, b in enumerate(self._b):
            self.mass[i] = b["mass"]
            self.pos[i] = b["pos"]
            self.quat[i] = b["quat"] / np.linalg.norm(b["quat"])
            self.shape_type[i] = b["stype"]
            self.shape_size[i] = b["ssize"]
            self.collide[i] = 1 if b["collide"] else 0
            if not b["static"]:
                self.inv_mass[i] = 1.0 / b["mass"]
                self.inv_inertia_b[i] = 1.0 / b["inertia"]

        ns = max(len(self._shafts), 1)
        self.shaft_w = np.zeros(ns)
        self.shaft_inv_inertia = np.zeros(ns)
        for i, inertia in enumerate(self._shafts):
            self.shaft_inv_inertia[i] = 1.0 / inertia

        nh = len(self._hinges)
        self._h_body = np.zeros((nh, 2), np.int64)
        self._h_anchor_a = np.zeros((nh, 3))
        self._h_anchor_b = np.zeros((nh, 3))
        self._h_axis_a = np.zeros((nh, 3))
        self._h_axis_b = np.zeros((nh, 3))
        self._h_perp1 = np.zeros((nh, 3))
        self._h_perp2 = np.zeros((nh, 3))
        self._h_ref_a = np.zeros((nh, 3))
        self._h_ref_b = np.zeros((nh, 3))
        self._h_motor_on = np.zeros(nh, np.int64)
        self._h_motor_target = np.zeros(nh)
        self._h_motor_torque = np.zeros(nh)
        self._h_limits = np.zeros((nh, 2))
        self._h_brake = np.zeros(nh)
        self._h_eps = np.zeros(nh)
        self._h_tau = np.zeros(nh)
        for i, h in enumerate(self._hinges):
            self._h_body[i] = h["body"]
            self._h_anchor_a[i] = h["anchor_a"]
            self._h_anchor_b[i] = h["anchor_b"]
            self._h_axis_a[i] = h["axis_a"]
            self._h_axis_b[i] = h["axis_b"]
            self._h_perp1[i] = h["perp1"]
            self._h_perp2[i] = h["perp2"]
            self._h_ref_a[i] = h["ref_a"]
            self._h_ref_b[i] = h["ref_b"]
            self._h_motor_on[i] = 1 if h["motor"] else 0
            self._h_motor_target[i] = h.get("motor_target", 0.0)
            self._h_motor_torque[i] = h["motor_torque"]
            self._h_limits[i] = h["limits"]
            self._h_brake[i] = h["brake"]
            self._h_eps[i] = h["eps"]
            self._h_tau[i] = h["tau"]

        npr = len(self._prisms)
        self._p_body = np.zeros((npr, 2), np.int64)
        self._p_anchor_a = np.zeros((npr, 3))
        self._p_anchor_b = np.zeros((npr, 3))
        self._p_axis_a = np.zeros((npr, 3))
        self._p_perp1 = np.zeros((npr, 3))
        self._p_perp2 = np.zeros((npr, 3))
        self._p_rot_ref = np.zeros((npr, 4))
        self._p_range = np.zeros((npr, 2))
        self._p_rest = np.zeros(npr)
        self._p_eps = np.zeros(npr)
        self._p_tau = np.zeros(npr)
        self._p_force = np.zeros((npr, 2))
        self._pj_eps = np.zeros(npr)
        self._pj_tau = np.zeros(npr)
        for i, p in enumerate(self._prisms):
            self._p_body[i] = p["body"]
            self._p_anchor_a[i] = p["anchor_a"]
            self._p_anchor_b[i] = p["anchor_b"]
            self._p_axis_a[i] = p["axis_a"]
            self._p_perp1[i] = p["perp1"]
            self._p_perp2[i] = p["perp2"]
            self._p_rot_ref[i] = p["rot_ref"]
            self._p_range[i] = p["ext_range"]
            self._p_rest[i] = p["rest"]
            self._p_eps[i] = p["eps"]
            self._p_tau[i] = p["tau"]
            self._p_force[i] = p["force"]
            self._pj_eps[i] = p["joint_eps"]
            self._pj_tau[i] = p["joint_tau"]

        nc = len(self._circuits)
        self._t_shaft = np.zeros(nc, np.int64)
        self._t_hinges = np.zeros((nc, 3), np.int64)
        self._t_target = np.zeros(nc)
        self._t_torque = np.zeros(nc)
        for i, c in enumerate(self._circuits):
            self._t_shaft[i] = c["shaft"]
            self._t_hinges[i] = c["hinges"]
            self._t_target[i] = c["target"]
            self._t_torque[i] = c["torque"]
        self._d_entries = np.zeros((nc, 6), np.int64)
        self._d_axes = np.zeros((nc, 3, 3))

        n_spheres = int(np.sum(self.shape_type == 1))
        n_boxes = int(np.sum(self.shape_type == 2))
        self._hrows = nh * 7
        self._prows = npr * 7
        self._trans0 = self._hrows + self._prows
        self._contact0 = self._trans0 + nc * 2
        nrows = self._contact0 + (n_spheres + n_boxes * 8) * 3
        self._nrows = nrows
        self._r_ba = np.zeros(nrows, np.int64)
        self._r_bb = np.zeros(nrows, np.int64)
        self._r_ja_lin = np.zeros((nrows, 3))
        self._r_ja_ang = np.zeros((nrows, 3))
        self._r_jb_lin = np.zeros((nrows, 3))
        self._r_jb_ang = np.zeros((nrows, 3))
        self._r_rhs = np.zeros(nrows)
        self._r_rho = np.zeros(nrows)
        self._r_lo = np.zeros(nrows)
        self._r_hi = np.zeros(nrows)
        self._r_diag = np.ones(nrows)
        self._r_active = np.zeros(nrows, np.uint8)
        self._r_lam = np.zeros(nrows)
        self._r_norm_of = np.full(nrows, -1, np.int64)

        max_ct = n_spheres + n_boxes * 8
        self._ct_body = np.zeros(max(max_ct, 1), np.int64)
        self._ct_point = np.zeros((max(max_ct, 1), 3))
        self._ct_normal = np.zeros((max(max_ct, 1), 3))
        self._ct_depth = np.zeros(max(max_ct, 1))
        self._ct_slot = np.zeros(max(max_ct, 1), np.int64)
        self._ct_count = np.zeros(1, np.int64)
        self._iinv_w = np.zeros((nb, 3, 3))
        self._diag_out = np.zeros(1)

        self._h_angle = np.zeros(nh)
        self._h_speed = np.zeros(nh)
        self._p_ext = np.zeros(npr)
        self._p_rate = np.zeros(npr)
        self._final = True

    def _terrain_args(self):
        if self.terrain is not None:
            t = self.terrain
            return t.grid, t.cell_size, t.origin[0], t.origin[1], 1
        return np.zeros((2, 2)), 1.0, 0.0, 0.0, 0

    # -- stepping --------------------------------------------------------------

    def step(self, dt: float = DT) -> None:
        """Advance one fixed substep (gravity, constraints, contacts, integrate)."""
        if abs(dt - DT) > 1.0e-12:
            raise InvalidParameterError("the solver runs at a fixed dt of 1/60 s")
        if not self._final:
            self._finalize()
        grid, cell, ox, oy, have = self._terrain_args()
        sphere_eps = 1.0 / (self.contact_youngs * 0.74)
        corner_eps = 1.0 / (self.contact_youngs * 0.1)
        err = kernel.substep(
            self.inv_mass, self.inv_inertia_b, self.pos, self.quat,
            self.vel, self.omega, self.shape_type, self.shape_size, self.collide,
            self.shaft_w, self.shaft_inv_inertia,
            self._h_body, self._h_anchor_a, self._h_anchor_b,
            self._h_axis_a, self._h_axis_b,
            self._h_perp1, self._h_perp2, self._h_ref_a, self._h_ref_b,
            self._h_motor_on, self._h_motor_target, self._h_motor_torque,
            self._h_limits, self._h_brake, self._h_eps, self._h_tau,
            self._p_body, self._p_anchor_a, self._p_anchor_b, self._p_axis_a,
            self._p_perp1, self._p_perp2, self._p_rot_ref, self._p_range,
            self._p_rest, self._p_eps, self._p_tau, self._p_force,
            self._pj_eps, self._pj_tau,
            self._t_shaft, self._t_hinges, self._t_target, self._t_torque,
            grid, cell, ox, oy, have,
            sphere_eps, corner_eps, self.contact_friction, self.contact_damping,
            dt, self.gravity, self.iterations, self.baumgarte,
            self._r_ba, self._r_bb, self._r_ja_lin, self._r_ja_ang,
            self._r_jb_lin, self._r_jb_ang, self._r_rhs, self._r_rho,
            self._r_lo, self._r_hi, self._r_diag, self._r_active, self._r_lam,
            self._r_norm_of, self._d_entries, self._d_axes,
            self._ct_body, self._ct_point, self._ct_normal, self._ct_depth,
            self._ct_slot, self._ct_count, self._iinv_w, self._diag_out)
        if err != kernel.ERR_OK:
            raise SimulationDivergedError(self.step_count)
        self.step_count += 1

    # -- queries ----------------------------------------------------------------

    def _measure(self) -> None:
        if not self._final:
            self._finalize()
        kernel.measure_kernel(
            self.pos, self.quat, self._h_body, self._h_axis_a,
            self._h_ref_a, self._h_ref_b,
            self._p_body, self._p_anchor_a, self._p_anchor_b, self._p_axis_a,
            self._h_angle, self._h_speed, self.omega,
            self._p_ext, self._p_rate, self.vel)

    def hinge_angles(self) -> np.ndarray:
        self._measure()
        return self._h_angle.copy()

    def extensions(self) -> np.ndarray:
        self._measure()
        return self._p_ext.copy()

    def extension_rates(self) -> np.ndarray:
        self._measure()
        return self._p_rate.copy()

    def lock_force(self, prism: int, dt: float = DT) -> float:
        """Impulse along the lock row divided by dt; positive in compression."""
        if self.step_count == 0:
            raise NotReadyError("no step has run yet")
        return float(self._r_lam[self._hrows + prism * 7 + 5] / dt)

    def lock_forces(self, dt: float = DT) -> np.ndarray:
        if self.step_count == 0:
            raise NotReadyError("no step has run yet")
        idx = self._hrows + np.arange(len(self._prisms)) * 7 + 5
        return self._r_lam[idx] / dt

    def motor_torque(self, hinge: int, dt: float = DT) -> float:
        if self.step_count == 0:
            raise NotReadyError("no step has run yet")
        return float(self._r_lam[hinge * 7 + 5] / dt)

    def engine_torque(self, circuit: int, dt: float = DT) -> float:
        if self.step_count == 0:
            raise NotReadyError("no step has run yet")
        return float(self._r_lam[self._trans0 + circuit * 2] / dt)

    def shaft_speed(self, circuit: int) -> float:
        return float(self.shaft_w[self._t_shaft[circuit]])

    def wheel_spin(self, hinge: int) -> float:
        self._measure()
        return float(self._h_speed[hinge])

    def max_residual(self) -> float:
        if self.step_count == 0:
            raise NotReadyError("no step has run yet")
        return float(self._diag_out[0])

    def contact_arrays(self):
        """(bodies, points, normals, depths, normal_forces) of the last step."""
        n = int(self._ct_count[0])
        slots = self._ct_slot[:n]
        lam_n = self._r_lam[self._contact0 + slots * 3]
        return (self._ct_body[:n].copy(), self._ct_point[:n].copy(),
                self._ct_normal[:n].copy(), self._ct_depth[:n].copy(),
                lam_n / DT)

    def contacts(self) -> list[ContactPoint]:
        bodies, points, normals, depths, _ = self.contact_arrays()
        return [ContactPoint(int(b), tuple(p), tuple(n), float(d),
                             self.contact_friction, self.contact_restitution)
                for b, p, n, d in zip(bodies, points, normals, depths)]

    # -- state snapshots ----------------------------------------------------------

    def snapshot(self) -> dict:
        if not self._final:
            self._finalize()
        return dict(pos=self.pos.copy(), quat=self.quat.copy(),
                    vel=self.vel.copy(), omega=self.omega.copy(),
                    shaft_w=self.shaft_w.copy(), lam=self._r_lam.copy(),
                    rest=self._p_rest.copy(),
                    motor=self._h_motor_target.copy(),
                    target=self._t_target.copy(), steps=self.step_count)

    def restore(self, snap: dict) -> None:
        self.pos[:] = snap["pos"]
        self.quat[:] = snap["quat"]
        self.vel[:] = snap["vel"]
        self.omega[:] = snap["omega"]
        self.shaft_w[:] = snap["shaft_w"]
        self._r_lam[:] = snap["lam"]
        self._p_rest[:] = snap["rest"]
        self._h_motor_target[:] = snap["motor"]
        self._t_target[:] = snap["target"]
        self.step_count = snap["steps"]


def detect_contacts(world: World, terrain: Terrain) -> list[ContactPoint]:
    """Stand-alone contact query against a terrain (does not step the world)."""
    if not world._final:
        world._finalize()
    ct_body = np.zeros_like(world._ct_body)
    ct_point = np.zeros_like(world._ct_point)
    ct_normal = np.zeros_like(world._ct_normal)
    ct_depth = np.zeros_like(world._ct_depth)
    ct_slot = np.zeros_like(world._ct_slot)
    n = kernel.detect_contacts_kernel(
        world.pos, world.quat, world.shape_type, world.shape_size,
        world.collide, terrain.grid, terrain.cell_size,
        terrain.origin[0], terrain.origin[1],
        ct_body, ct_point, ct_normal, ct_depth, ct_slot)
    return [ContactPoint(int(ct_body[i]), tuple(ct_point[i]),
                         tuple(ct_normal[i]), float(ct_depth[i]),
                         world.contact_friction, world.contact_restitution)
            for i in range(n)]


def step(world: World, dt: float = DT) -> World:
    """Advance the world one substep and return it (fluent convenience)."""
    world.step(dt)
    return world
