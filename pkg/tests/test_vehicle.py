import math

import numpy as np
import pytest

from sixwheel import terrain as T
from sixwheel import vehicle as V
from sixwheel.config import RunConfig
from sixwheel.errors import InvalidParameterError, SpawnError


@pytest.fixture(scope="module")
def cfg():
    return RunConfig()


@pytest.fixture(scope="module")
def flat_rig(cfg):
    return V.build(cfg, T.flat(60.0), (0.0, 0.0, 0.0))


def test_spec_invariants_enforced(cfg):
    spec = V.VehicleSpec.from_config(cfg)
    assert spec.total_mass == 31000.0
    assert spec.wheel_radius == 0.74
    assert spec.suspension_stroke == 0.50
    unsprung = 6 * (spec.wheel_mass + spec.arm_mass)
    assert sum(spec.section_masses) == pytest.approx(31000.0 - unsprung)
    with pytest.raises(InvalidParameterError):
        V.VehicleSpec.from_config(cfg).__class__(
            total_mass=31000.0, wheel_radius=0.7, suspension_stroke=0.5,
            engine_max_torque=1300.0, engine_power=150e3, wheel_mass=250.0,
            arm_mass=250.0, section_masses=spec.section_masses,
            section_lengths=spec.section_lengths, track_width=2.2,
            arm_drop=0.6, nominal_extension=0.125, front_mount_opposite=True,
            v_max=1.5)


def test_structure_counts(flat_rig):
    # 15 bodies: 3 sections + 6 arms + 6 wheels
    assert len(flat_rig.sections) == 3
    assert len(flat_rig.arms) == 6
    assert len(flat_rig.wheels) == 6
    assert flat_rig.world.pos.shape[0] == 15
    # 14 actuated joints: 2 articulation + 6 suspensions + 6 driven wheels
    actuated = 2 + len(flat_rig.prisms) + len(flat_rig.wheel_hinges)
    assert actuated == 14
    # cross-connected circuits: one front wheel + two opposite-side wheels
    sides = V.ARM_SIDE
    for circuit in (V.CIRCUIT_A, V.CIRCUIT_B):
        front = [i for i in circuit if V.ARM_FRONT[i] > 0]
        rest = [i for i in circuit if V.ARM_FRONT[i] <= 0]
        assert len(front) == 1 and len(rest) == 2
        assert all(sides[i] == -sides[front[0]] for i in rest)


def test_settle_statics_force_sum(flat_rig):
    p = flat_rig.read_proprioception()
    sprung_weight = flat_rig.spec.sprung_mass * 9.81
    assert np.sum(p.forces) == pytest.approx(sprung_weight, rel=0.02)


def test_settle_level_attitude(flat_rig):
    p = flat_rig.read_proprioception()
    assert abs(math.degrees(p.roll)) < 0.2
    assert abs(math.degrees(p.pitch)) < 0.2
    assert flat_rig.max_speed() < 0.01


def test_settle_extensions_near_nominal(flat_rig):
    p = flat_rig.read_proprioception()
    assert np.all(np.abs(p.extensions - 0.125) < 0.01)
    assert np.all(p.extensions >= 0.0)
    assert np.all(p.extensions <= 0.5)


def test_normalized_forces_mean_one_sixth(flat_rig):
    norm = flat_rig.normalized_forces()
    assert float(np.mean(norm)) == pytest.approx(1.0 / 6.0, rel=0.02)
    assert np.all(norm <= 1.0) and np.all(norm >= -1.0)


def test_settle_deterministic(cfg):
    a = V.build(cfg, T.flat(60.0), (0.0, 0.0, 0.0))
    b = V.build(cfg, T.flat(60.0), (0.0, 0.0, 0.0))
    assert np.array_equal(a.world.pos, b.world.pos)
    assert np.array_equal(a.world.quat, b.world.quat)
    assert np.array_equal(a.world.vel, b.world.vel)


def test_transmission_free_wheels_reach_target(cfg):
    rig = V.build(cfg, T.flat(60.0), (0.0, 0.0, 0.0), settle=False)
    rig.world.set_terrain(None)       # wheels spin freely in the air
    rig.world.gravity = 0.0
    rig.transmission_update(1.0)
    for _ in range(180):              # 3 s
        rig.world.step()
    spins = [rig.world.wheel_spin(h) for h in rig.wheel_hinges]
    assert np.allclose(spins, 1.0 / 0.74, rtol=0.02)


def test_transmission_target_clamped_to_vmax(flat_rig):
    flat_rig.transmission_update(99.0)
    expected = flat_rig.spec.v_max / flat_rig.spec.wheel_radius
    assert flat_rig.world._t_target[0] == pytest.approx(expected)
    flat_rig.transmission_update(0.0)


def test_holds_on_gentle_slope_creeps_on_steep(cfg):
    def run(angle_deg):
        slope = math.tan(math.radians(angle_deg))
        n = 601
        xs = (np.arange(n) - n // 2) * 0.1
        grid = np.tile(xs * slope, (n, 1))
        t = T.Terrain(0.1, (-30.0, -30.0), grid)
        rig = V.build(cfg, t, (0.0, 0.0, 0.0))
        rig.transmission_update(0.0)
        x0 = rig.read_proprioception().pose[0]
        for _ in range(300):
            rig.world.step()
        return abs(rig.read_proprioception().pose[0] - x0)

    assert run(5.0) < 0.05      # parking + engine hold
    assert run(33.0) > 0.3      # demand exceeds the torque limits: creeps


def test_left_shelf_load_shift(cfg):
    """Asymmetric support: the chassis leans toward the low side, which then
    carries the larger share (moment balance about the roll axis: the c.g.
    projects downhill by h_cg*sin(roll), so F_low - F_high > 0)."""
    n = 601
    grid = np.zeros((n, n))
    ys = (np.arange(n) - n // 2) * 0.1
    grid[ys > 0.4, :] = 0.2
    t = T.Terrain(0.1, (-30.0, -30.0), grid)
    rig = V.build(cfg, t, (0.0, 0.0, 0.0))
    p = rig.read_proprioception()
    left = p.forces[[0, 2, 4]]
    right = p.forces[[1, 3, 5]]
    # left side raised: the vehicle rolls right-side-down (roll > 0) and the
    # low (right) side carries more, with the expected lean angle
    assert p.roll > 0.0
    assert math.degrees(p.roll) == pytest.approx(
        math.degrees(math.atan(0.2 / 2.2)), abs=1.0)
    assert np.sum(right) > np.sum(left)


def test_extension_hard_range_never_exceeded(cfg):
    rig = V.build(cfg, T.flat(60.0), (0.0, 0.0, 0.0))
    for arm in range(6):
        rig.world.set_lock_rest(rig.prisms[arm], 10.0)   # clamped to 0.5
    for _ in range(300):
        rig.world.step()
    exts = rig.world.extensions()
    assert np.all(exts <= 0.5 + 2e-3)
    assert np.all(rig.lock_rests() <= 0.5)


def test_spawn_error_on_deep_penetration(cfg):
    # a tall ridge between the axles would interpenetrate the chassis
    n = 401
    grid = np.zeros((n, n))
    xs = (np.arange(n) - n // 2) * 0.1
    grid[:, (xs > 1.0) & (xs < 1.5)] = 3.0
    t = T.Terrain(0.1, (-20.0, -20.0), grid)
    with pytest.raises(SpawnError):
        V.build(cfg, t, (0.0, 0.0, 0.0))


class TestBaselineController:
    def _proprio(self, roll=0.0, pitch=0.0, ext=0.125, forces=None):
        forces = np.full(6, 45780.0) if forces is None else np.asarray(forces)
        return V.Proprioception(
            extensions=np.full(6, ext), articulation=np.zeros(2),
            forces=forces, roll=roll, pitch=pitch, speed=0.0,
            pose=(0.0, 0.0, 0.0), height=1.465,
            force_sum_static=float(np.sum(forces)))

    def test_level_pose_zero_requests(self):
        rates = V.baseline_suspension_controller(self._proprio())
        assert np.allclose(rates, 0.0, atol=1e-12)

    def test_roll_requests_antisymmetric(self):
        rates = V.baseline_suspension_controller(
            self._proprio(roll=math.radians(5.0)))
        left = rates[[0, 2, 4]]
        right = rates[[1, 3, 5]]
        assert np.allclose(left, -right, atol=1e-12)
        assert np.all(right > 0)   # positive roll: extend the low right side

    def test_pitch_requests_front_rear_antisymmetric(self):
        rates = V.baseline_suspension_controller(
            self._proprio(pitch=math.radians(3.0)))
        assert np.allclose(rates[[0, 1]], -rates[[4, 5]], atol=1e-12)
        assert np.allclose(rates[[2, 3]], 0.0, atol=1e-12)

    def test_pressure_term_evens_forces(self):
        forces = np.array([60000.0, 40000, 45000, 45000, 45000, 45000])
        rates = V.baseline_suspension_controller(self._proprio(forces=forces))
        # overloaded arm is asked to contract, underloaded to extend
        assert rates[0] < 0 < rates[1]
