"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import terrain as terrain_mod
from .config import RunConfig, load_config
from .errors import SixwheelError


def _parse_set(values: list[str]) -> dict:
    out = {}
    for item in values or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sixwheel",
                                description="articulated-vehicle simulator "
                                            "and learning stack")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config value (repeatable)")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("terrain", help="generate or edit terrain grids")
    tsub = t.add_subparsers(dest="terrain_cmd")
    tg = tsub.add_parser("gen")
    tg.add_argument("--seed", type=int, default=0)
    tg.add_argument("--extent", type=float, default=None)
    tg.add_argument("--amplitude", type=float, default=None)
    tg.add_argument("--out", required=True)
    te = tsub.add_parser("embed")
    te.add_argument("--grid", required=True, help="input terrain grid file")
    te.add_argument("--obstacles", required=True,
                    help="YAML file with an obstacle list")
    te.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="PPO curriculum training")
    tr.add_argument("--mode", choices=["ta", "tb", "tc"], default="tc")
    tr.add_argument("--lesson", choices=["1", "2", "all"], default="all")
    tr.add_argument("--steps", type=int, default=None,
                    help="override the per-lesson step budget")
    tr.add_argument("--out", default="runs/latest")

    ev = sub.add_parser("eval", help="evaluate a policy on a scenario")
    ev.add_argument("--policy", required=True)
    ev.add_argument("--scenario", required=True)
    ev.add_argument("--episodes", type=int, default=20)
    ev.add_argument("--mode", choices=["ta", "tb", "tc"], default="tc")
    ev.add_argument("--log-dir", default=None,
                    help="also write one episode log per run")

    rp = sub.add_parser("replay", help="re-run a stored episode log")
    rp.add_argument("log")

    sy = sub.add_parser("sysid", help="calibration tools")
    ssub = sy.add_subparsers(dest="sysid_cmd")
    sf = ssub.add_parser("fit")
    sf.add_argument("--log", action="append", required=True,
                    help="training log CSV (repeatable)")
    sf.add_argument("--validation", action="append", default=[])
    sf.add_argument("--budget", type=int, default=2000)
    sf.add_argument("--method", choices=["nelder-mead", "cma-es"],
                    default="nelder-mead")
    sf.add_argument("--out", default="fit_report.json")
    sd = ssub.add_parser("delay")
    sd.add_argument("--log", required=True)
    sd.add_argument("--cmd", required=True, help="command channel name")
    sd.add_argument("--resp", required=True, help="response channel name")
    sn = ssub.add_parser("noise")
    sn.add_argument("--log", required=True)

    sv = sub.add_parser("serve", help="telemetry/command bridge")
    sv.add_argument("--port", type=int, default=8700)
    sv.add_argument("--policy", default=None)
    sv.add_argument("--scenario", default="route")
    sv.add_argument("--speed", type=float, default=1.0,
                    help="real-time factor; 0 = as fast as possible")

    pl = sub.add_parser("plot", help="render SVG charts from logs")
    pl.add_argument("log")
    pl.add_argument("--out", default=None)
    return p


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage()
        return 1
    try:
        cfg = load_config(args.config, _parse_set(args.set))
    except SystemExit:
        raise
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _run(args, cfg)
    except SixwheelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _run(args, cfg: RunConfig) -> int:
    if args.command == "terrain":
        return _cmd_terrain(args, cfg)
    if args.command == "train":
        return _cmd_train(args, cfg)
    if args.command == "eval":
        return _cmd_eval(args, cfg)
    if args.command == "replay":
        return _cmd_replay(args, cfg)
    if args.command == "sysid":
        return _cmd_sysid(args, cfg)
    if args.command == "serve":
        return _cmd_serve(args, cfg)
    if args.command == "plot":
        return _cmd_plot(args, cfg)
    print(f"unknown command {args.command!r}", file=sys.stderr)
    return 1


def _cmd_terrain(args, cfg: RunConfig) -> int:
    import yaml

    if args.terrain_cmd == "gen":
        extent = args.extent if args.extent is not None else cfg.terrain.extent
        amplitude = (args.amplitude if args.amplitude is not None
                     else cfg.terrain.amplitude)
        t = terrain_mod.generate(args.seed, extent, amplitude,
                                 cfg.terrain.octaves, cfg.terrain.roughness,
                                 cfg.terrain.cell_size)
        t.save(args.out)
        print(f"wrote {args.out}: {t.ncols}x{t.nrows} cells, "
              f"amplitude {amplitude} m, seed {args.seed}")
        return 0
    if args.terrain_cmd == "embed":
        t = terrain_mod.read_grid(args.grid, cfg.terrain.cell_size)
        spec = yaml.safe_load(Path(args.obstacles).read_text())
        obstacles = [terrain_mod.ObstacleSpec.from_dict(o)
                     for o in spec.get("obstacles", spec if isinstance(spec, list) else [])]
        t2 = terrain_mod.embed(t, obstacles)
        t2.save(args.out)
        print(f"wrote {args.out} with {len(obstacles)} obstacles")
        return 0
    print("usage: sixwheel terrain {gen,embed} ...", file=sys.stderr)
    return 1


def _cmd_train(args, cfg: RunConfig) -> int:
    from .learn.train import train

    lessons = (1, 2) if args.lesson == "all" else (int(args.lesson),)
    override = None
    if args.steps is not None:
        override = {lesson: args.steps for lesson in lessons}
    result = train(cfg, args.mode, cfg.seed, args.out, lessons=lessons,
                   steps_override=override)
    print(f"trained {result.steps} steps; best checkpoint "
          f"{result.best_checkpoint}; curve {Path(args.out) / 'curve.csv'}")
    return 0


def _cmd_eval(args, cfg: RunConfig) -> int:
    from .learn.policy import PolicyNet
    from .scenarios import run_scenario

    net, _, meta = PolicyNet.load(args.policy)
    returns, successes = [], 0
    for k in range(args.episodes):
        log = run_scenario(cfg, args.scenario,
                           policy=lambda o: net.act(o)[0],
                           mode=args.mode, seed=cfg.seed * 1000 + k)
        returns.append(log.total_reward)
        successes += int(log.success)
        if args.log_dir:
            out = Path(args.log_dir)
            out.mkdir(parents=True, exist_ok=True)
            log.write(out / f"{args.scenario}_{k:03d}.jsonl")
    print(f"scenario {args.scenario}: mean return "
          f"{float(np.mean(returns)):.2f}, success rate "
          f"{successes / args.episodes:.0%} over {args.episodes} episodes")
    return 0


def _cmd_replay(args, cfg: RunConfig) -> int:
    from .logs import EpisodeLog
    from .scenarios import replay_log

    log = EpisodeLog.read(args.log)
    stored_hash = log.header.get("config_hash", "")
    if stored_hash and stored_hash != cfg.hash():
        print(f"error: config hash mismatch (log {stored_hash}, "
              f"current {cfg.hash()}); refusing to replay", file=sys.stderr)
        return 2
    identical, detail = replay_log(cfg, log)
    if identical:
        print(f"replay of {args.log}: bit-identical over "
              f"{len(log.records)} steps")
        return 0
    print(f"replay diverged: {detail}", file=sys.stderr)
    return 2


def _cmd_sysid(args, cfg: RunConfig) -> int:
    from . import sysid

    if args.sysid_cmd == "fit":
        logs = [sysid.SignalLog.read(p) for p in args.log]
        validation = [sysid.SignalLog.read(p) for p in args.validation]
        init = sysid.ParamVector(
            sysid.DEFAULT_FIT_PARAMS,
            np.array([cfg.get(s.path) for s in sysid.DEFAULT_FIT_PARAMS]))
        report = sysid.fit(cfg, logs, init, budget=args.budget,
                           validation=validation, method=args.method,
                           log=print)
        payload = {
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "best_objective": report.best_objective,
            "evaluations": report.evaluations,
            "parameters": dict(zip(report.best.names(),
                                   report.best.values.tolist())),
            "channel_rmse": report.channel_rmse,
            "validation_rmse": report.validation_rmse,
        }
        Path(args.out).write_text(json.dumps(payload, indent=2))
        print(f"best objective {report.best_objective:.6g} after "
              f"{report.evaluations} evaluations; report in {args.out}")
        return 0
    if args.sysid_cmd == "delay":
        log = sysid.SignalLog.read(args.log)
        d = sysid.estimate_delay(log.time, log.channels[args.cmd],
                                 log.channels[args.resp])
        print(f"estimated delay {args.cmd} -> {args.resp}: {d:.3f} s")
        return 0
    if args.sysid_cmd == "noise":
        log = sysid.SignalLog.read(args.log)
        for key, std in sysid.estimate_noise(log).items():
            print(f"{key}: std {std:.6g}")
        return 0
    print("usage: sixwheel sysid {fit,delay,noise} ...", file=sys.stderr)
    return 1


def _cmd_serve(args, cfg: RunConfig) -> int:
    from .bridge import serve

    serve(cfg, scenario=args.scenario, policy_path=args.policy,
          port=args.port, speed=args.speed)
    return 0


def _cmd_plot(args, cfg: RunConfig) -> int:
    from . import plots
    from .logs import EpisodeLog

    path = Path(args.log)
    out = args.out or path.with_suffix(".svg")
    if path.suffix == ".jsonl":
        result = plots.plot_episode(EpisodeLog.read(path), out)
    elif path.suffix == ".csv":
        head = path.read_text().splitlines()[0]
        if "mean_return" in head:
            result = plots.plot_curve(path, out)
        else:
            from . import sysid
            result = plots.plot_signal_log(sysid.SignalLog.read(path),
                                           out_path=out)
    else:
        print(f"cannot plot {path}: unknown format", file=sys.stderr)
        return 1
    print(f"wrote {result}")
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
