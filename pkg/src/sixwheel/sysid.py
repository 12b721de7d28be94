"""Calibration tooling: replay recorded command logs through the simulator,
score the response mismatch, fit tunable parameters with derivative-free
search, and estimate actuator delays and sensor noise from logs.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, signal

from . import terrain as terrain_mod
from .actuation import SteeringController, SuspensionController
from .config import RunConfig
from .dynamics import DT
from .errors import InvalidParameterError, SimulationDivergedError
from .vehicle import build

COMMAND_CHANNELS = ["throttle", "steering_target"] + [
    f"susp_target_{i}" for i in range(6)]
RESPONSE_CHANNELS = ([f"ext_{i}" for i in range(6)]
                     + [f"force_{i}" for i in range(6)]
                     + ["artic_front", "artic_rear", "speed", "x", "y", "yaw"])


@dataclass
class SignalLog:
    """Time-aligned named channels sampled at the control rate."""
    time: np.ndarray
    channels: dict[str, np.ndarray]
    name: str = ""

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        if np.any(np.diff(self.time) <= 0):
            raise InvalidParameterError("time column must be strictly increasing")
        for key, vals in self.channels.items():
            arr = np.asarray(vals, dtype=float)
            if arr.shape != self.time.shape:
                raise InvalidParameterError(
                    f"channel {key!r} length differs from the time column")
            self.channels[key] = arr

    @property
    def duration(self) -> float:
        return float(self.time[-1] - self.time[0])

    def resample(self, f_hz: float = 10.0) -> "SignalLog":
        t = np.arange(self.time[0], self.time[-1] + 1e-9, 1.0 / f_hz)
        chans = {k: np.interp(t, self.time, v) for k, v in self.channels.items()}
        return SignalLog(t, chans, self.name)

    def write(self, path: str | Path) -> None:
        keys = list(self.channels.keys())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + keys)
            for i in range(len(self.time)):
                w.writerow([repr(float(self.time[i]))]
                           + [repr(float(self.channels[k][i])) for k in keys])

    @classmethod
    def read(cls, path: str | Path) -> "SignalLog":
        with open(path) as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        if header[0] != "t":
            raise InvalidParameterError("first CSV column must be 't'")
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        channels = {name: data[:, k + 1] for k, name in enumerate(header[1:])}
        return cls(data[:, 0], channels, name=Path(path).stem)


@dataclass
class ParamSpec:
    path: str           # dotted config path
    lo: float
    hi: float
    log: bool = False   # optimize in log space (decades-spanning params)
    quantum: float = 0.0  # nonzero for step-quantized coordinates (delays)

    def clip(self, v: float) -> float:
        return min(max(v, self.lo), self.hi)

    def encode(self, v: float) -> float:
        """Map a value into the optimizer's unit box."""
        if self.log:
            return (math.log(max(v, self.lo)) - math.log(self.lo)) / (
                math.log(self.hi) - math.log(self.lo))
        return (v - self.lo) / (self.hi - self.lo)

    def decode(self, z: float) -> float:
        z = min(max(z, 0.0), 1.0)
        if self.log:
            return math.exp(math.log(self.lo)
                            + z * (math.log(self.hi) - math.log(self.lo)))
        return self.lo + z * (self.hi - self.lo)


@dataclass
class ParamVector:
    """Named, box-constrained view over the tunable config parameters."""
    specs: list[ParamSpec]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.specs),):
            raise InvalidParameterError("one value per parameter spec")
        for spec, v in zip(self.specs, self.values):
            if not (spec.lo <= v <= spec.hi):
                raise InvalidParameterError(
                    f"{spec.path}={v} outside [{spec.lo}, {spec.hi}]")

    def apply(self, cfg: RunConfig) -> RunConfig:
        out = copy.deepcopy(cfg)
        for spec, v in zip(self.specs, self.values):
            current = out.get(spec.path)
            out.set(spec.path, type(current)(v))
        return out

    def with_values(self, values: np.ndarray) -> "ParamVector":
        clipped = np.array([s.clip(v) for s, v in zip(self.specs, values)])
        return ParamVector(self.specs, clipped)

    def names(self) -> list[str]:
        return [s.path for s in self.specs]


DEFAULT_FIT_PARAMS = [
    ParamSpec("suspension.kp", 0.0005, 0.02),
    ParamSpec("suspension.ki", 0.0, 0.001),
    ParamSpec("suspension.full_speed", 0.02, 0.3),
    ParamSpec("suspension.lock_compliance", 1e-9, 1e-6, log=True),
    ParamSpec("steering.kp", 0.005, 0.1),
    ParamSpec("steering.ki", 0.0, 1.0),
    ParamSpec("suspension.delay_min", 0.0, 0.5, quantum=0.1),
    ParamSpec("engine.throttle_delay_min", 0.0, 1.0, quantum=0.1),
]


@dataclass
class FitReport:
    best: ParamVector
    best_objective: float
    channel_rmse: dict[str, float]
    validation_rmse: dict[str, float]
    trace: list[tuple[int, float]]
    evaluations: int


# ---------------------------------------------------------------------------
# Replay

def replay_scenario(cfg: RunConfig, log: SignalLog) -> SignalLog:
    """Drive the rig open-loop with the recorded commands on flat ground.

    Command channel units: throttle as a [-1, 1] fraction, steering target in
    radians, suspension targets in metres.  Fixed per-group delays come from
    the config (``engine.throttle_delay_min``, ``engine.articulation_delay_min``,
    ``suspension.delay_min``); buffers hold each channel's first value until
    the delayed commands flow through.
    """
    from .actuation import DelayBuffer

    log10 = log.resample(10.0)
    n = len(log10.time)
    zeros = np.zeros(n)
    thr = log10.channels.get("throttle", zeros)
    steer = log10.channels.get("steering_target", zeros)
    susp = np.stack([log10.channels.get(f"susp_target_{a}",
                                        np.full(n, cfg.vehicle.nominal_extension))
                     for a in range(6)], axis=1)

    rig = build(cfg, terrain_mod.flat(60.0), (0.0, 0.0, 0.0))
    steering = SteeringController(cfg)
    suspension = SuspensionController(cfg)
    buf_thr = DelayBuffer(cfg.engine.throttle_delay_min, 10.0, [thr[0]])
    buf_steer = DelayBuffer(cfg.engine.articulation_delay_min, 10.0, [steer[0]])
    buf_susp = DelayBuffer(cfg.suspension.delay_min, 10.0, susp[0])

    out = {k: np.zeros(n) for k in RESPONSE_CHANNELS}
    substeps = int(round(1.0 / (10.0 * DT)))
    for i in range(n):
        eff_thr = buf_thr.apply([thr[i]])[0]
        eff_steer = buf_steer.apply([steer[i]])[0]
        eff_susp = buf_susp.apply(susp[i])

        proprio = rig.read_proprioception()
        rig.transmission_update(eff_thr * cfg.vehicle.v_max)
        f_cmd, r_cmd = steering.step(eff_steer, proprio, 0.1)
        rig.set_steering_motors(f_cmd, r_cmd)
        rates, _ = suspension.step(eff_susp, proprio, 0.1)
        try:
            for _ in range(substeps):
                for a in range(6):
                    rig.shift_lock_rest(a, rates[a], DT)
                rig.apply_drift(DT)
                rig.world.step()
        except SimulationDivergedError as exc:
            raise SimulationDivergedError(
                exc.step_index, "replay diverged") from exc

        p = rig.read_proprioception()
        for a in range(6):
            out[f"ext_{a}"][i] = p.extensions[a]
            out[f"force_{a}"][i] = p.forces[a]
        out["artic_front"][i] = p.articulation[0]
        out["artic_rear"][i] = p.articulation[1]
        out["speed"][i] = p.speed
        out["x"][i] = p.pose[0]
        out["y"][i] = p.pose[1]
        out["yaw"][i] = p.pose[2]
    return SignalLog(log10.time.copy(), out, name=log.name + "_sim")


# ---------------------------------------------------------------------------
# Objective

def objective(cfg: RunConfig, params: ParamVector, logs: list[SignalLog],
              weights: dict[str, float] | None = None) -> float:
    """Weighted RMSE between replayed and recorded responses.

    Extension and articulation channels enter individually; the six force
    channels enter only through their sum (matching the calibration practice
    of reproducing total load, with the rescale factor applied).
    """
    if not logs:
        raise InvalidParameterError("at least one training log required")
    weights = weights or {}
    tuned = params.apply(cfg)
    total = 0.0
    for log in logs:
        try:
            sim = replay_scenario(tuned, log)
        except SimulationDivergedError:
            return 1.0e9
        total += log_mismatch(log.resample(10.0), sim, weights)
    return total / len(logs)


DEFAULT_WEIGHTS = {"force_sum": 1.0e-4}   # newtons vs metres/radians


def log_mismatch(ref: SignalLog, sim: SignalLog,
                 weights: dict[str, float] | None = None) -> float:
    weights = {**DEFAULT_WEIGHTS, **(weights or {})}
    total = 0.0
    ext_keys = [k for k in ref.channels if k.startswith("ext_")
                or k.startswith("artic_") or k == "speed"]
    for key in ext_keys:
        if key not in sim.channels:
            continue
        w = weights.get(key, 1.0)
        total += w * float(np.sqrt(np.mean(
            (ref.channels[key] - sim.channels[key]) ** 2)))
    force_keys = [k for k in ref.channels if k.startswith("force_")]
    if force_keys:
        ref_sum = np.sum([ref.channels[k] for k in force_keys], axis=0)
        sim_sum = np.sum([sim.channels[k] for k in force_keys], axis=0)
        w = weights.get("force_sum", 1.0)
        total += w * float(np.sqrt(np.mean((ref_sum - sim_sum) ** 2)))
    return total


# ---------------------------------------------------------------------------
# Fitting

def fit(cfg: RunConfig, logs: list[SignalLog], init: ParamVector,
        budget: int = 2000, validation: list[SignalLog] | None = None,
        weights: dict[str, float] | None = None, method: str = "nelder-mead",
        seed: int = 0, target: float = 0.0, log=lambda s: None) -> FitReport:
    """Box-constrained derivative-free search over the parameter vector.

    Nelder-Mead with restarts by default; a compact CMA-ES is available as
    ``method="cma-es"``.  Validation logs never enter the objective.  The
    search stops early once the objective drops to `target`.
    """
    if budget < 1:
        raise InvalidParameterError("budget must be at least 1")
    validation = validation or []
    train_names = {l.name for l in logs}
    for v in validation:
        if v.name in train_names:
            raise InvalidParameterError(
                f"validation log {v.name!r} appears in the training set")

    evals = 0
    trace: list[tuple[int, float]] = []
    best = {"x": init.values.copy(), "f": math.inf}

    def score(x: np.ndarray) -> float:
        nonlocal evals
        if evals >= budget or best["f"] <= target:
            return best["f"] + abs(best["f"]) + 1.0
        evals += 1
        pv = init.with_values(x)
        f = objective(cfg, pv, logs, weights)
        if f < best["f"]:
            best["f"] = f
            best["x"] = pv.values.copy()
            trace.append((evals, f))
            log(f"eval {evals}: objective {f:.6g}")
        return f

    # the optimizer works in an encoded unit box: linear or log per spec
    specs = init.specs

    def decode(z: np.ndarray) -> np.ndarray:
        return np.array([s.decode(v) for s, v in zip(specs, z)])

    def encode(x: np.ndarray) -> np.ndarray:
        return np.array([s.encode(v) for s, v in zip(specs, x)])

    def score_z(z: np.ndarray) -> float:
        return score(decode(z))

    score(init.values)
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(specs)
    bounds01 = [(0.0, 1.0)] * n

    def scan_quantized() -> None:
        """Coordinate sweep over step-quantized parameters (delays): Nelder-
        Mead cannot cross their flat plateaus.  Few-quanta coordinates get a
        full sweep, wide ones a +-3 neighborhood."""
        for k, spec in enumerate(specs):
            if spec.quantum <= 0 or evals >= budget or best["f"] <= target:
                continue
            n_quanta = int(round((spec.hi - spec.lo) / spec.quantum))
            if n_quanta <= 12:
                candidates = [spec.lo + m * spec.quantum
                              for m in range(n_quanta + 1)]
            else:
                candidates = [best["x"][k] + m * spec.quantum
                              for m in range(-3, 4) if m != 0]
            base = best["x"].copy()
            for cand in candidates:
                cand = spec.clip(cand)
                if abs(cand - base[k]) < 1e-12:
                    continue
                trial = best["x"].copy()
                trial[k] = cand
                score(trial)

    if method == "nelder-mead":
        if n == 0:
            pass
        else:
            scan_quantized()
            z0 = encode(best["x"])
            while evals < budget and best["f"] > target:
                optimize.minimize(
                    score_z, z0, method="Nelder-Mead", bounds=bounds01,
                    options={"maxfev": max(budget - evals, 1), "xatol": 1e-4,
                             "fatol": 1e-12, "adaptive": True,
                             "initial_simplex": _simplex(z0, 0.15)})
                if evals >= budget or best["f"] <= max(target, 1e-12):
                    break
                scan_quantized()
                if evals >= budget or best["f"] <= max(target, 1e-12):
                    break
                z0 = np.clip(encode(best["x"]) + rng.normal(scale=0.06, size=n),
                             0.0, 1.0)
    elif method == "cma-es":
        if n > 0:
            _cma_es(score_z, encode(best["x"]), budget, rng,
                    lambda: budget if best["f"] <= target else evals)
    else:
        raise InvalidParameterError(f"unknown fit method {method!r}")

    best_pv = init.with_values(best["x"])
    tuned = best_pv.apply(cfg)
    channel_rmse = _per_channel_rmse(tuned, logs)
    validation_rmse = _per_channel_rmse(tuned, validation) if validation else {}
    return FitReport(best=best_pv, best_objective=best["f"],
                     channel_rmse=channel_rmse,
                     validation_rmse=validation_rmse,
                     trace=trace, evaluations=evals)


def _per_channel_rmse(cfg: RunConfig, logs: list[SignalLog]) -> dict[str, float]:
    out: dict[str, list[float]] = {}
    for log in logs:
        ref = log.resample(10.0)
        sim = replay_scenario(cfg, log)
        for key in ref.channels:
            if key in sim.channels:
                rmse = float(np.sqrt(np.mean(
                    (ref.channels[key] - sim.channels[key]) ** 2)))
                out.setdefault(key, []).append(rmse)
    return {k: float(np.mean(v)) for k, v in out.items()}


def _simplex(z0: np.ndarray, scale: float) -> np.ndarray:
    """Initial Nelder-Mead simplex spanning `scale` of the unit box."""
    n = len(z0)
    simplex = np.tile(z0, (n + 1, 1))
    for k in range(n):
        step = scale if z0[k] + scale <= 1.0 else -scale
        simplex[k + 1, k] = min(max(z0[k] + step, 0.0), 1.0)
    return simplex


def _cma_es(score, z0, budget, rng, evals_fn):
    """Compact (mu/lambda) CMA-ES over the encoded unit box."""
    n = len(z0)
    lam = 4 + int(3 * math.log(n))
    mu = lam // 2
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / np.sum(w ** 2)
    cc = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    cs = (mu_eff + 2) / (n + mu_eff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    cmu = min(1 - c1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    damps = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + cs
    pc = np.zeros(n)
    ps = np.zeros(n)
    C = np.eye(n)
    step = 0.25
    xm = np.asarray(z0, dtype=float).copy()
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    g = 0
    while evals_fn() < budget:
        g += 1
        try:
            A = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            C = np.eye(n)
            A = C.copy()
        zs = rng.normal(size=(lam, n))
        xs = xm + step * zs @ A.T
        fs = np.array([score(np.clip(xk, 0.0, 1.0)) for xk in xs])
        order = np.argsort(fs)
        zsel = zs[order[:mu]]
        xsel = xs[order[:mu]]
        xold = xm.copy()
        xm = w @ xsel
        y = (xm - xold) / step
        z_mean = w @ zsel
        ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mu_eff) * z_mean
        hsig = (np.linalg.norm(ps)
                / math.sqrt(1 - (1 - cs) ** (2 * g)) / chi_n) < 1.4 + 2 / (n + 1)
        pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mu_eff) * y
        artmp = (xsel - xold) / step
        C = ((1 - c1 - cmu) * C
             + c1 * (np.outer(pc, pc) + (not hsig) * cc * (2 - cc) * C)
             + cmu * artmp.T @ (w[:, None] * artmp))
        step *= math.exp((cs / damps) * (np.linalg.norm(ps) / chi_n - 1))
        step = float(np.clip(step, 1e-8, 0.6))


# ---------------------------------------------------------------------------
# Delay and noise estimation

def estimate_delay(t: np.ndarray, cmd: np.ndarray, resp: np.ndarray) -> float:
    """Delay between a step command and the response onset.

    Coarse lag from the cross-correlation of derivatives, refined to the
    first response sample exceeding 10 % of its final change after the step.
    Raises when the command holds no usable step.
    """
    t = np.asarray(t, float)
    cmd = np.asarray(cmd, float)
    resp = np.asarray(resp, float)
    dcmd = np.diff(cmd)
    span = np.max(cmd) - np.min(cmd)
    total_variation = float(np.sum(np.abs(dcmd)))
    # a usable step concentrates the signal's variation in one jump
    if span <= 0 or np.max(np.abs(dcmd)) < 0.4 * total_variation:
        raise InvalidParameterError("no step detected in the command channel")
    dt = float(np.median(np.diff(t)))

    dresp = np.diff(resp)
    corr = signal.correlate(dresp, dcmd, mode="full")
    lags = signal.correlation_lags(len(dresp), len(dcmd), mode="full")
    pos = lags >= 0
    lag = int(lags[pos][np.argmax(corr[pos])])

    step_idx = int(np.argmax(np.abs(dcmd)))
    final = resp[-1]
    base = resp[step_idx]
    change = final - base
    if abs(change) < 1e-12:
        return lag * dt
    onset = None
    for i in range(step_idx + 1, len(resp)):
        if abs(resp[i] - base) >= 0.1 * abs(change):
            onset = i
            break
    if onset is None:
        return lag * dt
    return float(t[onset] - t[step_idx + 1])


def estimate_noise(log: SignalLog) -> dict[str, float]:
    """Per-channel std after removing a linear trend; needs >= 5 s of data."""
    if log.duration < 5.0:
        raise InvalidParameterError("static log must cover at least 5 seconds")
    out = {}
    for key, vals in log.channels.items():
        detrended = signal.detrend(vals, type="linear")
        out[key] = float(np.std(detrended))
    return out
