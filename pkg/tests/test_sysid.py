import math

import numpy as np
import pytest

from sixwheel import sysid
from sixwheel.config import RunConfig
from sixwheel.errors import InvalidParameterError


@pytest.fixture(scope="module")
def cfg():
    return RunConfig()


def _arm_step_log(n=120, name="arm_step"):
    """Command schedule: front and rear cylinders 0 -> 0.25 -> 0 in steps."""
    t = np.arange(n) / 10.0
    susp = {f"susp_target_{i}": np.full(n, 0.125) for i in range(6)}
    for i in (0, 1, 4, 5):   # front and rear pairs
        cmd = np.full(n, 0.0)
        cmd[20:70] = 0.25
        susp[f"susp_target_{i}"] = cmd
    chans = {"throttle": np.zeros(n), "steering_target": np.zeros(n), **susp}
    return sysid.SignalLog(t, chans, name=name)


class TestSignalLog:
    def test_round_trip(self, tmp_path):
        log = _arm_step_log()
        path = tmp_path / "log.csv"
        log.write(path)
        log2 = sysid.SignalLog.read(path)
        assert np.allclose(log2.time, log.time)
        for k in log.channels:
            assert np.allclose(log2.channels[k], log.channels[k])

    def test_non_monotone_time_rejected(self):
        with pytest.raises(InvalidParameterError):
            sysid.SignalLog(np.array([0.0, 0.1, 0.1]),
                            {"a": np.zeros(3)})

    def test_resample(self):
        t = np.array([0.0, 0.5, 1.0])
        log = sysid.SignalLog(t, {"a": np.array([0.0, 1.0, 2.0])})
        r = log.resample(10.0)
        assert len(r.time) == 11
        assert r.channels["a"][5] == pytest.approx(1.0)


class TestParamVector:
    def test_bounds_enforced(self):
        spec = [sysid.ParamSpec("suspension.kp", 0.001, 0.01)]
        with pytest.raises(InvalidParameterError):
            sysid.ParamVector(spec, np.array([0.5]))

    def test_apply_clones_config(self, cfg):
        pv = sysid.ParamVector([sysid.ParamSpec("suspension.kp", 0.001, 0.01)],
                               np.array([0.008]))
        tuned = pv.apply(cfg)
        assert tuned.suspension.kp == 0.008
        assert cfg.suspension.kp == 0.004   # original untouched

    def test_default_set_has_eight_parameters(self):
        assert len(sysid.DEFAULT_FIT_PARAMS) == 8


class TestReplay:
    def test_zero_commands_constant_responses(self, cfg):
        n = 60
        t = np.arange(n) / 10.0
        log = sysid.SignalLog(t, {
            "throttle": np.zeros(n), "steering_target": np.zeros(n),
            **{f"susp_target_{i}": np.full(n, 0.125) for i in range(6)}})
        sim = sysid.replay_scenario(cfg, log)
        for i in range(6):
            ext = sim.channels[f"ext_{i}"]
            # the position loop first closes the static sag, then holds
            assert np.ptp(ext[40:]) < 1e-3

    def test_self_consistency(self, cfg):
        """Replay of a replay (same config) reproduces it exactly."""
        log = _arm_step_log(n=80)
        sim1 = sysid.replay_scenario(cfg, log)
        merged = sysid.SignalLog(sim1.time,
                                 {**log.resample(10.0).channels,
                                  **sim1.channels}, name="merged")
        sim2 = sysid.replay_scenario(cfg, merged)
        for key in sim1.channels:
            assert np.array_equal(sim1.channels[key], sim2.channels[key])

    def test_arm_step_monotone_between_switches(self, cfg):
        log = _arm_step_log()
        sim = sysid.replay_scenario(cfg, log)
        ext = sim.channels["ext_0"]
        # rising segment after the 0 -> 0.25 switch (allow lock jitter)
        seg = ext[24:60]
        assert np.all(np.diff(seg) > -1e-3)
        # climbs at close to the capped rate once the valve saturates
        assert ext[65] - ext[25] > 0.07
        assert np.max(np.diff(ext)) * 10.0 <= 0.03 + 5e-3


class TestObjective:
    def test_zero_against_itself(self, cfg):
        log = _arm_step_log(n=60)
        sim = sysid.replay_scenario(cfg, log)
        full = sysid.SignalLog(sim.time, {**log.resample(10.0).channels,
                                          **sim.channels}, name="full")
        pv = sysid.ParamVector([], np.array([]))
        assert sysid.objective(cfg, pv, [full]) == pytest.approx(0.0, abs=1e-12)

    def test_constant_offset_gives_rmse_c(self):
        t = np.arange(50) / 10.0
        a = sysid.SignalLog(t, {"ext_0": np.zeros(50)})
        b = sysid.SignalLog(t, {"ext_0": np.full(50, 0.37)})
        assert sysid.log_mismatch(a, b) == pytest.approx(0.37, abs=1e-12)

    def test_weight_linearity(self):
        t = np.arange(50) / 10.0
        a = sysid.SignalLog(t, {"ext_0": np.zeros(50)})
        b = sysid.SignalLog(t, {"ext_0": np.full(50, 0.2)})
        one = sysid.log_mismatch(a, b, {"ext_0": 1.0})
        two = sysid.log_mismatch(a, b, {"ext_0": 2.0})
        assert two == pytest.approx(2.0 * one, abs=1e-12)

    def test_forces_enter_as_sum(self):
        t = np.arange(50) / 10.0
        ref = {f"force_{i}": np.full(50, 1000.0) for i in range(6)}
        # redistribute between arms without changing the sum
        sim = {f"force_{i}": np.full(50, 1000.0) for i in range(6)}
        sim["force_0"] = np.full(50, 1500.0)
        sim["force_1"] = np.full(50, 500.0)
        a = sysid.SignalLog(t, ref)
        b = sysid.SignalLog(t, sim)
        assert sysid.log_mismatch(a, b) == pytest.approx(0.0, abs=1e-9)


class TestFit:
    def test_budget_one_returns_init(self, cfg):
        log = _arm_step_log(n=40)
        pv = sysid.ParamVector([sysid.ParamSpec("suspension.kp", 0.001, 0.02)],
                               np.array([0.004]))
        report = sysid.fit(cfg, [log], pv, budget=1)
        assert report.evaluations == 1
        assert report.best.values[0] == 0.004

    def test_objective_trace_non_increasing(self, cfg):
        log = _arm_step_log(n=40)
        pv = sysid.ParamVector([sysid.ParamSpec("suspension.kp", 0.001, 0.02)],
                               np.array([0.009]))
        report = sysid.fit(cfg, [log], pv, budget=30)
        values = [f for _, f in report.trace]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))

    def test_validation_discipline(self, cfg):
        log = _arm_step_log(n=40, name="shared")
        pv = sysid.ParamVector([], np.array([]))
        with pytest.raises(InvalidParameterError, match="shared"):
            sysid.fit(cfg, [log], pv, budget=1, validation=[log])

    def test_best_within_bounds(self, cfg):
        log = _arm_step_log(n=40)
        spec = sysid.ParamSpec("suspension.kp", 0.001, 0.02)
        report = sysid.fit(cfg, [log], sysid.ParamVector([spec], [0.004]),
                           budget=20)
        assert spec.lo <= report.best.values[0] <= spec.hi


class TestEstimateDelay:
    def test_pure_shift(self):
        t = np.arange(100) / 10.0
        cmd = np.zeros(100)
        cmd[30:] = 1.0
        resp = np.zeros(100)
        resp[33:] = 1.0   # 0.3 s later
        d = sysid.estimate_delay(t, cmd, resp)
        assert d == pytest.approx(0.3, abs=0.1)

    def test_shift_plus_first_order_lag(self):
        t = np.arange(200) / 20.0
        cmd = np.zeros(200)
        cmd[40:] = 1.0
        shift = 0.25
        tau = 0.2
        resp = np.zeros(200)
        for i, ti in enumerate(t):
            t_on = t[40] + shift
            if ti > t_on:
                resp[i] = 1.0 - math.exp(-(ti - t_on) / tau)
        d = sysid.estimate_delay(t, cmd, resp)
        assert abs(d - shift) <= 0.1

    def test_white_noise_no_step(self):
        rng = np.random.default_rng(0)
        t = np.arange(100) / 10.0
        with pytest.raises(InvalidParameterError):
            sysid.estimate_delay(t, rng.normal(size=100) * 0.01,
                                 rng.normal(size=100))


class TestEstimateNoise:
    def test_constant_channel_zero(self):
        t = np.arange(100) / 10.0
        log = sysid.SignalLog(t, {"x": np.full(100, 3.3)})
        assert sysid.estimate_noise(log)["x"] == pytest.approx(0.0, abs=1e-12)

    def test_injected_noise_recovered(self):
        rng = np.random.default_rng(1)
        t = np.arange(600) / 10.0    # 60 s at 10 Hz
        log = sysid.SignalLog(t, {"x": rng.normal(0.0, 0.005, size=600)})
        assert sysid.estimate_noise(log)["x"] == pytest.approx(0.005, rel=0.10)

    def test_linear_drift_removed(self):
        rng = np.random.default_rng(2)
        t = np.arange(600) / 10.0
        drift = 0.02 * t
        log = sysid.SignalLog(t, {"x": drift + rng.normal(0, 0.005, 600)})
        assert sysid.estimate_noise(log)["x"] == pytest.approx(0.005, rel=0.10)

    def test_short_log_rejected(self):
        t = np.arange(30) / 10.0
        with pytest.raises(InvalidParameterError):
            sysid.estimate_noise(sysid.SignalLog(t, {"x": np.zeros(30)}))
