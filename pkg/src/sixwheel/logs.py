"""Episode logs: JSON-Lines, one header record then one record per control step."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _round(values, nd=10):
    return [round(float(v), nd) for v in np.asarray(values).ravel()]


@dataclass
class EpisodeLog:
    header: dict
    records: list[dict] = field(default_factory=list)

    def add_step(self, t: int, proprio, action, delayed_action, breakdown,
                 terminal: str) -> None:
        # actions are kept at full precision: replays feed them back into the
        # dynamics, and a 1e-10 nudge breaks bit-identical regeneration
        self.records.append({
            "t": t,
            "pose": _round(proprio.pose),
            "v": round(float(proprio.speed), 10),
            "roll": round(float(proprio.roll), 10),
            "pitch": round(float(proprio.pitch), 10),
            "extensions": _round(proprio.extensions),
            "forces": _round(proprio.forces, 6),
            "action": [float(v) for v in np.asarray(action).ravel()],
            "delayed_action": [float(v) for v in np.asarray(delayed_action).ravel()],
            "reward": breakdown.to_dict(),
            "terminal": terminal,
        })

    @property
    def total_reward(self) -> float:
        return sum(r["reward"]["total"] for r in self.records)

    @property
    def success(self) -> bool:
        return any(r["reward"]["success"] for r in self.records)

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"type": "header", **self.header}) + "\n")
            for rec in self.records:
                fh.write(json.dumps({"type": "step", **rec}) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeLog":
        header = None
        records = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec.pop("type", "step")
                if kind == "header":
                    header = rec
                else:
                    records.append(rec)
        if header is None:
            raise ValueError(f"{path}: missing header record")
        return cls(header, records)
