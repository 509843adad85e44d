"""Command line entry point: ``depowder simulate|track|bench|report``.

Bench config (YAML; every section optional, units in comments)::

    tracker:                  # TrackerConfig overrides (deg, cm, fractions)
      delta1: 30
    use_part_xi: true         # replace tracker.xi with each part's own value
    workers: 1                # process pool size for trials
    strategies: [cuicp, continuous, vanilla]
    save_trajectories: true   # JSONL per trial under <out>/trajectories
    scene:                    # simulator knobs shared by all trials
      noise_sigma: 0.002      # m
      pixel_size: 0.003       # m
      point_density: 5.0      # CAD samples per cm^2
    static:
      parts: [cube, cup, propeller, owl, pipe]
      visibilities: [0.2, 0.4, 0.6, 0.8, 1.0]
      seeds: 10               # count (0..n-1) or an explicit list
      fps: 30
      duration: 2.0           # s
      occluder: true
      occluder_rate_deg: 180  # deg/s
    push:
      parts: [...]
      seeds: 5
      speed: 0.01             # m/s
      distance: 0.06          # m
      fps: 15
      max_yaw_deg: 30
    speed:
      parts: [...]
      visibilities: [0.4, 0.6]
      seeds: 1
      motions: [translation, rotation]
      duration: 3.0           # s
      fps: 30
      max_factor: 32
      resolution: 0.25
    throughput:
      part: cube
      visibility: 0.6
      frames: 200
      target_points: 20000
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from ..config import ConfigError, Strategy, TrackerConfig
from ..geometry import GeometryError
from ..progress import ProgressError
from ..simulator.io import ConfigFileError, load_scene, load_script, load_yaml, pose_from_dict, read_sequence, \
    write_sequence
from ..simulator.mesh import MeshParseError, read_obj, sample_surface
from ..simulator.parts import PART_NAMES, get_part
from ..simulator.scene import generate_sequence
from ..tracker import TrackerError, run_sequence, write_trajectory
from . import report
from .trials import (
    STRATEGIES,
    PushTrialConfig,
    SceneOptions,
    SpeedTrialConfig,
    StaticTrialConfig,
    measure_throughput,
    run_conditions,
    run_speed_conditions,
    throughput_condition,
)

log = logging.getLogger("depowder")


class UsageError(Exception):
    """A failed precondition; reported on stderr with exit code 2."""


# ---------------------------------------------------------------- helpers

def _seeds(value) -> list[int]:
    if isinstance(value, int):
        return list(range(value))
    return [int(s) for s in value]


def _tracker_cfg(data: dict) -> TrackerConfig:
    return TrackerConfig.from_dict(data or {})


def _scene_opts(data: dict | None) -> SceneOptions:
    data = dict(data or {})
    known = {f.name for f in fields(SceneOptions)}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown scene options: {sorted(unknown)}")
    return SceneOptions(**{k: float(v) for k, v in data.items()})


def _parts(sec: dict) -> list[str]:
    parts = list(sec.get("parts", PART_NAMES))
    bad = [p for p in parts if p not in PART_NAMES]
    if bad:
        raise UsageError(f"unknown parts: {bad}")
    return parts


def _check_keys(sec: dict, allowed: set, name: str):
    unknown = set(sec) - allowed
    if unknown:
        raise UsageError(f"unknown keys in '{name}': {sorted(unknown)}")


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    script = load_script(args.script) if args.script else None
    if args.fps <= 0 or args.duration <= 0:
        raise UsageError("--fps and --duration must be positive")
    frames = generate_sequence(scene, script, args.fps, args.duration)
    write_sequence(args.out, frames)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


# ---------------------------------------------------------------- track

def _load_cad(spec: str, density: float) -> np.ndarray:
    path = Path(spec)
    if path.suffix.lower() == ".obj":
        if not path.exists():
            raise UsageError(f"CAD mesh {spec} not found")
        return sample_surface(read_obj(path), density, seed=0)
    if path.suffix.lower() == ".xyz":
        if not path.exists():
            raise UsageError(f"CAD cloud {spec} not found")
        return np.loadtxt(path, ndmin=2)[:, :3]
    if spec in PART_NAMES:
        return sample_surface(get_part(spec).mesh, density, seed=0)
    raise UsageError(f"--cad must be an .obj/.xyz file or one of {PART_NAMES}")


def cmd_track(args) -> int:
    frames_dir = Path(args.frames)
    if not frames_dir.is_dir():
        raise UsageError(f"{frames_dir} is not a directory")
    frames = read_sequence(frames_dir)
    if not frames:
        raise UsageError("sequence has no frames")
    data = load_yaml(args.config) if args.config else {}
    init = data.pop("initial_pose", None)
    density = float(data.pop("point_density", args.point_density))
    cfg = _tracker_cfg(data).with_(strategy=Strategy.parse(args.strategy))
    cad = _load_cad(args.cad, density)
    t_init = pose_from_dict(init) if init else frames[0].truth_pose
    records, _, lost = run_sequence(cad, t_init, frames, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_trajectory(args.out, records)
    status = "complete" if lost is None else f"lost at frame {lost}"
    print(f"tracked {len(records)} frames ({status}); trajectory in {args.out}")
    return 0 if lost is None else 1


# ---------------------------------------------------------------- bench

def _bench_common(cfg: dict):
    _check_keys(cfg, {"tracker", "use_part_xi", "workers", "strategies", "save_trajectories", "scene",
                      "static", "push", "speed", "throughput"}, "bench config")
    tracker = _tracker_cfg(cfg.get("tracker"))
    strategies = [Strategy.parse(s) for s in cfg.get("strategies", [s.value for s in STRATEGIES])]
    workers = int(cfg.get("workers", 1))
    if workers < 1:
        raise UsageError("workers must be >= 1")
    return tracker, strategies, workers, _scene_opts(cfg.get("scene"))


def _save_trajectories(out: Path, results):
    tdir = out / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)
    for r in results:
        name = f"{r.kind}_{r.part_id}_v{r.visibility:.4f}_s{r.seed}_{r.strategy}.jsonl"
        write_trajectory(tdir / name, r.records or [])


def _write_trial_outputs(out: Path, kind: str, results, save_traj: bool, extra: str = "") -> str:
    rows = [r.summary_row() for r in results]
    report.write_rows(out / "trials.csv", report.TRIAL_COLUMNS, rows)
    cols, table = report.TABLES[kind](report.read_rows(out / "trials.csv"))
    report.write_rows(out / f"table_{kind}.csv", cols, table)
    if save_traj:
        _save_trajectories(out, results)
    text = f"{kind} benchmark: {len(results)} trials\n{extra}\n" + report.format_table(cols, table) + "\n"
    (out / "summary.txt").write_text(text)
    return text


def bench_static(cfg: dict, out: Path) -> str:
    tracker, strategies, workers, opts = _bench_common(cfg)
    sec = dict(cfg.get("static") or {})
    _check_keys(sec, {"parts", "visibilities", "seeds", "fps", "duration", "occluder", "occluder_rate_deg"},
                "static")
    vis = [float(v) for v in sec.get("visibilities", [0.2, 0.4, 0.6, 0.8, 1.0])]
    if any(not 0 < v <= 1 for v in vis):
        raise UsageError("visibilities must lie in (0, 1]")
    configs = [
        StaticTrialConfig(p, v, s, fps=float(sec.get("fps", 30.0)), duration=float(sec.get("duration", 2.0)),
                          occluder=bool(sec.get("occluder", True)),
                          occluder_rate=float(sec.get("occluder_rate_deg", 180.0)), scene=opts)
        for p in _parts(sec) for v in vis for s in _seeds(sec.get("seeds", 10))
    ]
    save = bool(cfg.get("save_trajectories", True))
    results = run_conditions("static", configs, strategies, tracker, workers=workers, keep_records=save,
                             use_part_xi=bool(cfg.get("use_part_xi", True)))
    return _write_trial_outputs(out, "static", results, save)


def bench_push(cfg: dict, out: Path) -> str:
    tracker, strategies, workers, opts = _bench_common(cfg)
    sec = dict(cfg.get("push") or {})
    _check_keys(sec, {"parts", "seeds", "speed", "distance", "fps", "max_yaw_deg", "visibility"}, "push")
    configs = [
        PushTrialConfig(p, s, speed=float(sec.get("speed", 0.01)), distance=float(sec.get("distance", 0.06)),
                        fps=float(sec.get("fps", 15.0)), max_yaw=float(sec.get("max_yaw_deg", 30.0)),
                        visibility=sec.get("visibility"), scene=opts)
        for p in _parts(sec) for s in _seeds(sec.get("seeds", 5))
    ]
    if configs[0].speed <= 0:
        raise UsageError("push speed must be positive")
    save = bool(cfg.get("save_trajectories", True))
    results = run_conditions("push", configs, strategies, tracker, workers=workers, keep_records=save,
                             use_part_xi=bool(cfg.get("use_part_xi", True)))
    return _write_trial_outputs(out, "push", results, save)


def bench_speed(cfg: dict, out: Path) -> str:
    tracker, strategies, workers, opts = _bench_common(cfg)
    sec = dict(cfg.get("speed") or {})
    _check_keys(sec, {"parts", "visibilities", "seeds", "motions", "duration", "fps", "max_factor", "resolution"},
                "speed")
    motions = list(sec.get("motions", ["translation", "rotation"]))
    if set(motions) - {"translation", "rotation"}:
        raise UsageError("motions must be translation and/or rotation")
    configs = [
        SpeedTrialConfig(p, float(v), s, motion=m, duration=float(sec.get("duration", 3.0)),
                         fps=float(sec.get("fps", 30.0)), max_factor=float(sec.get("max_factor", 32.0)),
                         resolution=float(sec.get("resolution", 0.25)), scene=opts)
        for p in _parts(sec) for v in sec.get("visibilities", [0.4, 0.6]) for m in motions
        for s in _seeds(sec.get("seeds", 1))
    ]
    entries = run_speed_conditions(configs, strategies, tracker, workers=workers,
                                   use_part_xi=bool(cfg.get("use_part_xi", True)))
    rows = [{"part": e.part, "visibility": e.visibility, "seed": e.seed, "motion": e.motion,
             "strategy": e.strategy, "max_factor": e.max_factor, "max_speed": e.max_speed,
             "unit": "cm/s" if e.motion == "translation" else "deg/s"} for e in entries]
    report.write_rows(out / "speed.csv", report.SPEED_COLUMNS, rows)
    cols, table = report.speed_table(report.read_rows(out / "speed.csv"))
    report.write_rows(out / "table_speed.csv", cols, table)
    text = f"speed benchmark: {len(entries)} searches\n" + report.format_table(cols, table) + "\n"
    (out / "summary.txt").write_text(text)
    return text


def bench_throughput(cfg: dict, out: Path) -> str:
    tracker, strategies, _, opts = _bench_common(cfg)
    sec = dict(cfg.get("throughput") or {})
    _check_keys(sec, {"part", "visibility", "frames", "target_points", "seed"}, "throughput")
    n = int(sec.get("frames", 200))
    if n < 200:
        raise UsageError("throughput needs at least 200 timed frames")
    cond = throughput_condition(sec.get("part", "cube"), float(sec.get("visibility", 0.6)),
                                int(sec.get("seed", 0)), n_frames=n + 4,
                                target_points=int(sec.get("target_points", 20000)), opts=opts)
    tcfg = tracker.with_(xi=cond.part.xi, phase_gating=False) if cfg.get("use_part_xi", True) else \
        tracker.with_(phase_gating=False)
    points = float(np.mean([len(f.points) for f in cond.frames]))
    rows = [{"strategy": s.value, "fps": measure_throughput(cond, s, tcfg, min_frames=n), "frames": n,
             "mean_points": points} for s in strategies]
    report.write_rows(out / "throughput.csv", ["strategy", "fps", "frames", "mean_points"], rows)
    hw = report.hardware_info()
    (out / "hardware.json").write_text(json.dumps(hw, indent=2) + "\n")
    lines = [f"throughput on {hw['cpu_model']} (single worker), {points:.0f} points per frame"]
    lines += [f"  {r['strategy']:<11} {r['fps']:.1f} FPS" for r in rows]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    return text


BENCHES = {"static": bench_static, "push": bench_push, "speed": bench_speed, "throughput": bench_throughput}


def cmd_bench(args) -> int:
    cfg = load_yaml(args.config) if args.config else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(BENCHES[args.kind](cfg, out), end="")
    return 0


# ---------------------------------------------------------------- report

def cmd_report(args) -> int:
    src = Path(args.inp)
    for name in ("trials.csv", "speed.csv"):
        if (src / name).exists():
            rows = report.read_rows(src / name)
            break
    else:
        raise UsageError(f"{src} holds neither trials.csv nor speed.csv")
    if not rows:
        raise UsageError("no rows to report")
    cols, table = report.table_for(rows)
    report.write_rows(args.out, cols, table)
    print(report.format_table(cols, table))
    return 0


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depowder", description="Pose tracking of parts in powder (simulated).")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a scan sequence")
    s.add_argument("--scene", required=True)
    s.add_argument("--script")
    s.add_argument("--out", required=True)
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--duration", type=float, default=2.0)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="track a part through a recorded sequence")
    t.add_argument("--cad", required=True, help=".obj mesh, .xyz cloud or built-in part name")
    t.add_argument("--frames", required=True)
    t.add_argument("--strategy", default="cuicp", choices=[s.value for s in Strategy])
    t.add_argument("--config", help="YAML tracker config; may hold initial_pose and point_density")
    t.add_argument("--point-density", type=float, default=5.0, help="CAD samples per cm^2")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_track)

    b = sub.add_parser("bench", help="run an experiment")
    b.add_argument("kind", choices=sorted(BENCHES))
    b.add_argument("--config")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="rebuild the aggregate table from raw results")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ConfigFileError, MeshParseError, ProgressError, GeometryError,
            TrackerError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
