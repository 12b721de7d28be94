"""Live telemetry and command bridge.

A WebSocket server streams `state` messages at the control rate while one
simulation thread drives the environment; clients place target poses, queue
routes, pause, resume, or reset.  One driver thread owns the simulation;
connection handlers talk to it only through queues and immutable snapshots.

Message framing: one JSON object per WebSocket text frame.  Every
server-to-client message carries a monotonically increasing sequence number.
"""

from __future__ import annotations

import asyncio
import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .env import DrivingEnv
from .scenarios import load_scenario

PROTO_VERSION = 1


@dataclass
class BridgeState:
    """Mutable hub shared between the sim thread and the socket handlers."""
    commands: "queue.Queue[dict]" = field(default_factory=queue.Queue)
    snapshot: dict | None = None
    terrain_msg: dict | None = None
    seq: int = 0
    running: bool = True
    paused: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list = field(default_factory=list)   # asyncio queues
    loop: asyncio.AbstractEventLoop | None = None
    controller: object | None = None   # first client to connect commands

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def publish(self, message: dict) -> None:
        message["seq"] = self.next_seq()
        with self.lock:
            if message["type"] == "state":
                self.snapshot = message
            subs = list(self.subscribers)
        if self.loop is not None:
            for q in subs:
                self.loop.call_soon_threadsafe(q.put_nowait, message)


def terrain_message(terrain) -> dict:
    return {
        "type": "terrain",
        "proto_version": PROTO_VERSION,
        "ncols": terrain.ncols,
        "nrows": terrain.nrows,
        "cellsize": terrain.cell_size,
        "origin": list(terrain.origin),
        "heights": [round(float(v), 4) for v in terrain.heights],
    }


def state_message(env: DrivingEnv, info: dict, paused: bool) -> dict:
    p = info["proprio"]
    rb = info["reward"]
    return {
        "type": "state",
        "t": info["t"],
        "pose": [round(v, 6) for v in p.pose],
        "v": round(p.speed, 6),
        "roll": round(p.roll, 6),
        "pitch": round(p.pitch, 6),
        "extensions": [round(float(v), 6) for v in p.extensions],
        "forces": [round(float(v), 1) for v in p.forces],
        "reward": rb.to_dict(),
        "target": list(env.target()),
        "paused": paused,
    }


class BridgeDriver(threading.Thread):
    """Owns the environment; consumes client commands between control steps."""

    def __init__(self, cfg: RunConfig, scenario: str, policy_path: str | None,
                 speed: float, state: BridgeState, max_steps: int | None = None):
        super().__init__(daemon=True)
        self.cfg = cfg
        self.scenario = scenario
        self.speed = speed
        self.state = state
        self.max_steps = max_steps
        self.policy = None
        if policy_path:
            from .learn.policy import PolicyNet
            self.policy, _, _ = PolicyNet.load(policy_path)

    def _reset(self, scenario: str | None = None) -> None:
        env = DrivingEnv(self.cfg)
        episode = load_scenario(self.cfg, scenario or self.scenario, mode="tc")
        rng = np.random.Generator(np.random.PCG64(self.cfg.seed))
        env.reset(episode, rng)
        env.auto_advance = True
        self.env = env
        self.state.terrain_msg = terrain_message(env.map_terrain)
        self.state.publish({"type": "event", "event": "reset",
                            "scenario": scenario or self.scenario})

    def _action(self, obs) -> np.ndarray:
        if self.policy is not None:
            return self.policy.act(obs)[0]
        # no policy loaded: scripted straight-line driver toward the target
        proprio = self.env.rig.read_proprioception()
        tx, ty, _ = self.env.target()
        x, y, yaw = proprio.pose
        err = math.atan2(ty - y, tx - x) - yaw
        err = (err + math.pi) % (2 * math.pi) - math.pi
        a = np.zeros(8)
        a[0] = 0.5
        a[1] = max(-1.0, min(1.0, 2.0 * err / self.cfg.steering.angle_range))
        return a

    def _handle(self, msg: dict) -> None:
        kind = msg.get("type")
        if kind == "set_target":
            self.env.set_target((float(msg["x"]), float(msg["y"]),
                                 float(msg["psi"])))
            self.state.publish({"type": "event", "event": "target_set",
                                "target": list(self.env.target())})
        elif kind == "queue_targets":
            targets = [(float(t["x"]), float(t["y"]), float(t["psi"]))
                       for t in msg.get("targets", [])]
            self.env.queue_targets(targets)
            self.state.publish({"type": "event", "event": "targets_queued",
                                "count": len(targets)})
        elif kind == "pause":
            self.state.paused = True
            self.state.publish({"type": "event", "event": "paused"})
        elif kind == "resume":
            self.state.paused = False
            self.state.publish({"type": "event", "event": "resumed"})
        elif kind == "reset":
            self._reset(msg.get("scenario"))
        elif kind == "select_policy":
            from .learn.policy import PolicyNet
            self.policy, _, _ = PolicyNet.load(msg["name"])
            self.state.publish({"type": "event", "event": "policy_selected",
                                "name": msg["name"]})
        else:
            self.state.publish({"type": "event", "event": "warning",
                                "detail": f"unknown message type {kind!r}"})

    def run(self) -> None:
        self._reset()
        obs = self.env._observation(self.env.rig.read_proprioception())
        period = 0.1 / self.speed if self.speed > 0 else 0.0
        steps = 0
        while self.state.running:
            t0 = time.monotonic()
            try:
                while True:
                    msg = self.state.commands.get_nowait()
                    try:
                        self._handle(msg)
                    except Exception as exc:  # a bad command must not kill the sim
                        self.state.publish({"type": "event", "event": "error",
                                            "detail": str(exc)})
            except queue.Empty:
                pass
            if self.state.paused:
                time.sleep(0.02 if period else 0.0005)
                continue
            action = self._action(obs)
            obs, reward, done, info = self.env.step(action)
            self.state.publish(state_message(self.env, info, self.state.paused))
            if "target_event" in info:
                self.state.publish({"type": "event",
                                    "event": f"target_{info['target_event']}"})
            if done:
                self.state.publish({"type": "event", "event": "terminal",
                                    "reason": info["reason"]})
                self._reset()
                obs = self.env._observation(self.env.rig.read_proprioception())
            steps += 1
            if self.max_steps is not None and steps >= self.max_steps:
                self.state.running = False
                break
            if period:
                remain = period - (time.monotonic() - t0)
                if remain > 0:
                    time.sleep(remain)


async def _client_session(ws, state: BridgeState) -> None:
    sub: asyncio.Queue = asyncio.Queue()
    with state.lock:
        if state.controller is None:
            state.controller = ws
        role = "controller" if state.controller is ws else "observer"
    hello = {"type": "hello", "proto_version": PROTO_VERSION, "role": role,
             "seq": state.next_seq()}
    await ws.send(json.dumps(hello))
    for _ in range(100):   # the driver publishes terrain on its first reset
        if state.terrain_msg is not None or not state.running:
            break
        await asyncio.sleep(0.05)
    if state.terrain_msg is not None:
        msg = dict(state.terrain_msg)
        msg["seq"] = state.next_seq()
        await ws.send(json.dumps(msg))
    with state.lock:
        state.subscribers.append(sub)
        snap = state.snapshot
    if snap is not None:
        await ws.send(json.dumps(snap))

    async def pump_out():
        while True:
            msg = await sub.get()
            await ws.send(json.dumps(msg))

    async def pump_in():
        async for raw in ws:
            try:
                msg = json.loads(raw)
                if not isinstance(msg, dict) or "type" not in msg:
                    raise ValueError("message must be an object with a type")
            except (json.JSONDecodeError, ValueError) as exc:
                err = {"type": "event", "event": "error", "detail": str(exc),
                       "seq": state.next_seq()}
                await ws.send(json.dumps(err))
                continue
            with state.lock:
                commanding = state.controller is ws
            if not commanding:
                err = {"type": "event", "event": "error",
                       "detail": "observer connections cannot command",
                       "seq": state.next_seq()}
                await ws.send(json.dumps(err))
                continue
            state.commands.put(msg)

    out_task = asyncio.create_task(pump_out())
    try:
        await pump_in()
    finally:
        out_task.cancel()
        with state.lock:
            if sub in state.subscribers:
                state.subscribers.remove(sub)
            if state.controller is ws:
                state.controller = None


def serve(cfg: RunConfig, scenario: str = "route", policy_path: str | None = None,
          port: int = 8700, speed: float = 1.0, max_steps: int | None = None,
          ready_event: threading.Event | None = None,
          stop_event: threading.Event | None = None) -> None:
    """Run the bridge until interrupted (or `stop_event` is set in tests)."""
    import websockets

    state = BridgeState()
    driver = BridgeDriver(cfg, scenario, policy_path, speed, state, max_steps)

    async def main():
        state.loop = asyncio.get_running_loop()
        driver.start()
        async with websockets.serve(
                lambda ws: _client_session(ws, state), "127.0.0.1", port):
            if ready_event is not None:
                ready_event.set()
            while state.running:
                if stop_event is not None and stop_event.is_set():
                    state.running = False
                    break
                await asyncio.sleep(0.05)

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        state.running = False
