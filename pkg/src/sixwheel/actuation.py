"""Low-level control between policy actions and the dynamics constraints:
steering and suspension PI loops, actuator limits, and command delay buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .vehicle import Proprioception, VehicleRig


@dataclass
class PidState:
    """Discrete PID with integral clamping and output saturation."""
    kp: float
    ki: float
    kd: float = 0.0
    windup_limit: float = 100.0
    out_min: float = -1.0
    out_max: float = 1.0
    integral: float = 0.0
    prev_error: float | None = None

    def step(self, error: float, dt: float) -> float:
        self.integral = min(max(self.integral + error * dt, -self.windup_limit),
                            self.windup_limit)
        deriv = 0.0
        if self.kd != 0.0 and self.prev_error is not None:
            deriv = (error - self.prev_error) / dt
        self.prev_error = error
        out = self.kp * error + self.ki * self.integral + self.kd * deriv
        return min(max(out, self.out_min), self.out_max)

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None


@dataclass
class ActuatorLimits:
    """Command-side ranges; the policy only sees half the physical stroke."""
    suspension_target_min: float = 0.0
    suspension_target_max: float = 0.25
    suspension_rate_cap_fraction: float = 0.30
    suspension_full_speed: float = 0.10
    steering_angle_range: float = 0.61
    steering_speed_threshold: float = 0.0833

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "ActuatorLimits":
        return cls(cfg.suspension.target_min, cfg.suspension.target_max,
                   cfg.suspension.rate_cap_fraction, cfg.suspension.full_speed,
                   cfg.steering.angle_range, cfg.steering.speed_threshold)


class DelayBuffer:
    """FIFO of commands; a command issued at control step t activates at
    t + delay_steps.  Delays round half-up to whole control steps."""

    def __init__(self, delay_s: float, f_control: float, neutral):
        self.delay_steps = int(math.floor(delay_s * f_control + 0.5))
        self.neutral = np.array(neutral, dtype=float)
        self._queue: list[np.ndarray] = []

    def apply(self, command) -> np.ndarray:
        self._queue.append(np.array(command, dtype=float))
        if len(self._queue) > self.delay_steps + 1:
            self._queue.pop(0)
        if len(self._queue) <= self.delay_steps:
            return self.neutral.copy()
        return self._queue[0].copy()


@dataclass
class DelaySet:
    throttle: float = 0.0
    articulation: float = 0.0
    suspension: float = 0.0

    @classmethod
    def sample(cls, cfg: RunConfig, rng: np.random.Generator) -> "DelaySet":
        e, s = cfg.engine, cfg.suspension
        return cls(
            throttle=float(rng.uniform(e.throttle_delay_min, e.throttle_delay_max)),
            articulation=float(rng.uniform(e.articulation_delay_min,
                                           e.articulation_delay_max)),
            suspension=float(rng.uniform(s.delay_min, s.delay_max)))


class ActionDelays:
    """Per-group delay buffers over the 8D action
    (throttle, articulation, 6 suspension targets)."""

    def __init__(self, delays: DelaySet, f_control: float):
        self.delays = delays
        self._throttle = DelayBuffer(delays.throttle, f_control, [0.0])
        self._artic = DelayBuffer(delays.articulation, f_control, [0.0])
        self._susp = DelayBuffer(delays.suspension, f_control, [0.0] * 6)

    def apply(self, action: np.ndarray) -> np.ndarray:
        out = np.empty(8)
        out[0] = self._throttle.apply(action[0:1])[0]
        out[1] = self._artic.apply(action[1:2])[0]
        out[2:8] = self._susp.apply(action[2:8])
        return out


def delay_apply(buffers: ActionDelays, action: np.ndarray,
                step: int | None = None) -> np.ndarray:
    """Push an action through the per-group delay buffers."""
    return buffers.apply(np.asarray(action, dtype=float))


class SteeringController:
    """Front PI on the articulation angle plus a lag-tracking rear PI.

    Errors are taken in degrees; outputs are hinge motor speeds in rad/s.
    Both outputs are zero (and integrals frozen) below the speed threshold.
    """

    def __init__(self, cfg: RunConfig):
        st = cfg.steering
        self.front = PidState(st.kp, st.ki, st.kd, st.integral_limit,
                              -st.speed_limit, st.speed_limit)
        self.rear = PidState(st.rear_kp, st.rear_ki, st.kd, st.integral_limit,
                             -st.speed_limit, st.speed_limit)
        self.rear_ratio = st.rear_ratio
        self.rear_lag = st.rear_lag
        self.threshold = st.speed_threshold
        self._rear_target = 0.0

    def step(self, front_target: float, proprio: Proprioception,
             dt: float) -> tuple[float, float]:
        if abs(proprio.speed) < self.threshold:
            return 0.0, 0.0
        front_angle, rear_angle = proprio.articulation
        # rear follows a lagged fraction of the measured front angle
        raw = self.rear_ratio * front_angle
        alpha = dt / max(self.rear_lag, dt)
        self._rear_target += (raw - self._rear_target) * alpha
        front_cmd = self.front.step(math.degrees(front_target - front_angle), dt)
        rear_cmd = self.rear.step(math.degrees(self._rear_target - rear_angle), dt)
        return front_cmd, rear_cmd

    def reset(self) -> None:
        self.front.reset()
        self.rear.reset()
        self._rear_target = 0.0


def steering_step(controller: SteeringController, front_target: float,
                  proprio: Proprioception, dt: float) -> tuple[float, float]:
    return controller.step(front_target, proprio, dt)


class SuspensionController:
    """Six position PIs turning cylinder targets into rate commands.

    Errors are in millimetres; the PI output is a valve fraction in [-1, 1]
    which maps linearly to a cylinder rate, capped at 30 % of full speed and
    by the per-direction speed limits.
    """

    def __init__(self, cfg: RunConfig):
        s = cfg.suspension
        self.pids = [PidState(s.kp, s.ki, s.kd, s.windup_limit, -1.0, 1.0)
                     for _ in range(6)]
        self.full_speed = s.full_speed
        self.rate_cap = s.rate_cap_fraction * s.full_speed
        self.extend_limit = s.extend_speed_limit
        self.contract_limit = s.contract_speed_limit
        self.target_min = s.target_min
        self.target_max = s.target_max

    def step(self, targets: np.ndarray, proprio: Proprioception,
             dt: float) -> tuple[np.ndarray, bool]:
        """Returns (rates, clamped) where `clamped` flags out-of-range targets."""
        targets = np.asarray(targets, dtype=float)
        clamped = bool(np.any(targets < self.target_min - 1e-12)
                       or np.any(targets > self.target_max + 1e-12))
        targets = np.clip(targets, self.target_min, self.target_max)
        rates = np.empty(6)
        for i in range(6):
            err_mm = (targets[i] - proprio.extensions[i]) * 1000.0
            valve = self.pids[i].step(err_mm, dt)
            rate = valve * self.full_speed
            hi = min(self.rate_cap, self.extend_limit)
            lo = -min(self.rate_cap, self.contract_limit)
            rates[i] = min(max(rate, lo), hi)
        return rates, clamped

    def reset(self) -> None:
        for pid in self.pids:
            pid.reset()


def suspension_step(controller: SuspensionController, targets: np.ndarray,
                    proprio: Proprioception, dt: float) -> tuple[np.ndarray, bool]:
    return controller.step(targets, proprio, dt)


def shift_lock_rest(rig: VehicleRig, arm: int, rate: float, dt: float) -> None:
    """Move one arm lock's rest position by rate*dt, clamped to the stroke."""
    rig.shift_lock_rest(arm, rate, dt)
