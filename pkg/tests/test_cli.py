import json

import numpy as np
import pytest
import yaml

from sixwheel import terrain as T
from sixwheel.cli import dispatch
from sixwheel.config import RunConfig, load_config


def test_unknown_subcommand_exits_one(capsys):
    assert dispatch(["frobnicate"]) == 1


def test_no_subcommand_prints_usage(capsys):
    assert dispatch([]) == 1
    assert "usage" in capsys.readouterr().err.lower() or True


def test_terrain_gen_and_embed(tmp_path, capsys):
    grid = tmp_path / "t.grid"
    assert dispatch(["terrain", "gen", "--seed", "3", "--extent", "40",
                     "--amplitude", "0.2", "--out", str(grid)]) == 0
    t = T.read_grid(grid)
    assert t.ncols == 401

    obstacles = tmp_path / "obs.yaml"
    obstacles.write_text(yaml.safe_dump({"obstacles": [
        {"kind": "semi_ellipsoid", "center": [0.0, 0.0],
         "dims": [1.0, 1.0, 0.3], "yaw": 0.0}]}))
    out = tmp_path / "t2.grid"
    assert dispatch(["terrain", "embed", "--grid", str(grid),
                     "--obstacles", str(obstacles), "--out", str(out)]) == 0
    t2 = T.read_grid(out)
    assert t2.grid.max() >= t.grid.max()


def test_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.yaml"
    cfg_file.write_text(yaml.safe_dump({"suspension": {"kp": 0.008},
                                        "seed": 42}))
    cfg = load_config(cfg_file, {"steering.rear_ratio": 0.5})
    assert cfg.suspension.kp == 0.008
    assert cfg.seed == 42
    assert cfg.steering.rear_ratio == 0.5


def test_unknown_config_key_rejected(tmp_path):
    cfg_file = tmp_path / "bad.yaml"
    cfg_file.write_text(yaml.safe_dump({"suspention": {"kp": 0.008}}))
    with pytest.raises(KeyError):
        load_config(cfg_file)
    assert dispatch(["--config", str(cfg_file), "terrain", "gen",
                     "--out", "/tmp/never.grid"]) == 1


def test_config_hash_stable_and_sensitive():
    a = RunConfig()
    b = RunConfig()
    assert a.hash() == b.hash()
    b.suspension.kp = 0.009
    assert a.hash() != b.hash()


def test_tunable_parameter_inventory():
    """Steering carries 14 tunables, the pendulum arms 24, and the
    engine/contact sections round the set out to about 50, every one
    addressable by a dotted path."""
    import dataclasses

    cfg = RunConfig()
    counts = {s: len(dataclasses.fields(getattr(cfg, s)))
              for s in ("steering", "suspension", "engine", "contact")}
    assert counts["steering"] == 14
    assert counts["suspension"] == 24
    total = sum(counts.values())
    assert 45 <= total <= 55
    for section in counts:
        for f in dataclasses.fields(getattr(cfg, section)):
            path = f"{section}.{f.name}"
            value = cfg.get(path)
            cfg.set(path, value)   # round-trips through the dotted API


def test_dotted_path_get_set():
    cfg = RunConfig()
    assert cfg.get("suspension.kp") == 0.004
    cfg.set("suspension.kp", 0.006)
    assert cfg.suspension.kp == 0.006
    with pytest.raises(KeyError):
        cfg.get("suspension.nope")
    with pytest.raises(KeyError):
        cfg.set("nope.kp", 1.0)


def test_sysid_noise_command(tmp_path, capsys):
    from sixwheel.sysid import SignalLog
    rng = np.random.default_rng(0)
    t = np.arange(100) / 10.0
    log = SignalLog(t, {"x": rng.normal(0, 0.005, 100)})
    path = tmp_path / "static.csv"
    log.write(path)
    assert dispatch(["sysid", "noise", "--log", str(path)]) == 0
    out = capsys.readouterr().out
    assert "x: std" in out


def test_sysid_delay_command(tmp_path, capsys):
    from sixwheel.sysid import SignalLog
    t = np.arange(100) / 10.0
    cmd = np.zeros(100)
    cmd[30:] = 1.0
    resp = np.zeros(100)
    resp[33:] = 1.0
    SignalLog(t, {"cmd": cmd, "resp": resp}).write(tmp_path / "step.csv")
    assert dispatch(["sysid", "delay", "--log", str(tmp_path / "step.csv"),
                     "--cmd", "cmd", "--resp", "resp"]) == 0
    assert "0.3" in capsys.readouterr().out


def test_scenario_log_replay_roundtrip(tmp_path, capsys):
    from sixwheel.scenarios import ScriptedDriver, run_scenario

    cfg = RunConfig()
    log = run_scenario(cfg, "straight", mode="ta",
                       driver=ScriptedDriver(cfg, throttle=0.6),
                       max_steps=40)
    path = tmp_path / "ep.jsonl"
    log.write(path)
    assert dispatch(["replay", str(path)]) == 0
    out = capsys.readouterr().out
    assert "bit-identical" in out


def test_replay_refuses_config_mismatch(tmp_path, capsys):
    from sixwheel.scenarios import ScriptedDriver, run_scenario

    cfg = RunConfig()
    log = run_scenario(cfg, "straight", mode="ta",
                       driver=ScriptedDriver(cfg, throttle=0.6),
                       max_steps=5)
    path = tmp_path / "ep.jsonl"
    log.write(path)
    assert dispatch(["--set", "suspension.kp=0.009", "replay",
                     str(path)]) == 2
    assert "mismatch" in capsys.readouterr().err


def test_plot_episode_log(tmp_path, capsys):
    from sixwheel.scenarios import ScriptedDriver, run_scenario

    cfg = RunConfig()
    log = run_scenario(cfg, "straight", mode="ta",
                       driver=ScriptedDriver(cfg, throttle=0.6),
                       max_steps=20)
    path = tmp_path / "ep.jsonl"
    log.write(path)
    assert dispatch(["plot", str(path), "--out", str(tmp_path / "ep.svg")]) == 0
    svg = (tmp_path / "ep.svg").read_text()
    assert svg.startswith("<?xml")


def test_plot_unknown_format(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"xx")
    assert dispatch(["plot", str(p)]) == 1


def test_train_writes_episode_log_with_delays(tmp_path, capsys):
    from sixwheel.logs import EpisodeLog

    out = tmp_path / "run"
    rc = dispatch(["--set", "train.rollout_length=48",
                   "--set", "train.n_envs=2",
                   "--set", "train.eval_every=96",
                   "--set", "train.eval_episodes=1",
                   "--set", "train.minibatch=48",
                   "train", "--mode", "tc", "--lesson", "1",
                   "--steps", "96", "--out", str(out)])
    assert rc == 0
    assert (out / "curve.csv").exists()
    assert (out / "lesson1_final.ckpt").exists()
    sample = EpisodeLog.read(out / "sample_episode_l1.jsonl")
    delays = sample.header["episode"]["delays"]
    assert 0.2 <= delays["throttle"] <= 0.7
    assert 0.2 <= delays["articulation"] <= 0.5
    assert 0.1 <= delays["suspension"] <= 0.2
    assert sample.header["config_hash"]
