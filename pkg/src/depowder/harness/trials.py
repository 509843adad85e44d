"""Experiment protocols on simulated sequences.

Static trials (nozzle orbiting a stationary part at fixed visibility), push
trials (part translated and yawed through powder by a pusher), maximum
trackable speed via playback speedup, throughput, and parallel trackers.
A *condition* renders one sequence and runs every requested strategy on it,
so strategies are always compared on identical scans.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..config import Strategy, TrackerConfig
from ..geometry import RigidPose, compose, rotation_about
from ..simulator.parts import PartSpec, get_part
from ..simulator.scene import (
    MotionScript,
    OccluderSpec,
    ScanFrame,
    generate_sequence,
    make_scene,
    speedup_resample,
)
from ..tracker import EmptyTemplate, TrackerError, init_tracker, run_sequence, track_step
from .metrics import TrialResult, is_success, pose_errors, trial_errors

log = logging.getLogger(__name__)

STRATEGIES = (Strategy.CONDITIONAL, Strategy.CONTINUOUS, Strategy.VANILLA)


def part_radius(part: PartSpec) -> float:
    return float(np.max(np.linalg.norm(part.mesh.vertices[:, :2], axis=1)))


def config_for_part(cfg: TrackerConfig, part: PartSpec, override_xi: bool = True) -> TrackerConfig:
    """Benchmark tracker config: the part's own xi, tracking from the first frame."""
    changes = {"phase_gating": False}
    if override_xi:
        changes["xi"] = part.xi
    return cfg.with_(**changes)


@dataclass(frozen=True)
class SceneOptions:
    noise_sigma: float = 0.002
    pixel_size: float = 0.003
    point_density: float = 5.0
    camera_tilt: float = 25.0


@dataclass(frozen=True)
class StaticTrialConfig:
    part: str
    visibility: float
    seed: int
    fps: float = 30.0
    duration: float = 2.0
    occluder: bool = True
    occluder_rate: float = 180.0  # deg/s
    scene: SceneOptions = SceneOptions()


@dataclass(frozen=True)
class PushTrialConfig:
    part: str
    seed: int
    speed: float = 0.01  # m/s
    distance: float = 0.06  # m
    fps: float = 15.0
    visibility: float | None = None  # drawn from [0.4, 0.6] when None
    max_yaw: float = 30.0  # deg of yaw for a contact at the part's rim
    pusher: bool = True
    scene: SceneOptions = SceneOptions()


@dataclass(frozen=True)
class SpeedTrialConfig:
    part: str
    visibility: float
    seed: int
    motion: str = "translation"  # or "rotation"
    base_speed: float | None = None  # cm/s or deg/s; default 2 cm/s / 15 deg/s
    duration: float = 3.0
    fps: float = 30.0
    max_factor: float = 32.0
    resolution: float = 0.25
    scene: SceneOptions = SceneOptions()

    @property
    def speed(self) -> float:
        if self.base_speed is not None:
            return self.base_speed
        return 2.0 if self.motion == "translation" else 15.0


@dataclass(frozen=True)
class ToppleTrialConfig:
    """Part rests, then tips over one bottom edge and lies still."""

    part: str = "cup"
    visibility: float = 0.8
    seed: int = 0
    angle: float = 60.0  # deg
    start: float = 1.0  # s
    tip_time: float = 1.0  # s
    duration: float = 3.0
    fps: float = 30.0
    scene: SceneOptions = SceneOptions()


@dataclass
class Condition:
    """One rendered sequence plus what is needed to track and score it."""

    part: PartSpec
    cad: np.ndarray
    init_pose: RigidPose
    frames: list[ScanFrame]
    visibility: float
    seed: int
    kind: str


def _seed_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


def _scene_kwargs(opts: SceneOptions) -> dict:
    return {"noise_sigma": opts.noise_sigma, "pixel_size": opts.pixel_size, "camera_tilt": opts.camera_tilt}


def build_static_condition(cfg: StaticTrialConfig) -> Condition:
    part = get_part(cfg.part)
    rng = _seed_rng(cfg.seed, 1)
    yaw, phase = rng.uniform(0.0, 360.0, size=2)
    pose = RigidPose(rotation_about((0, 0, 1), yaw))
    occ = None
    if cfg.occluder:
        occ = OccluderSpec(orbit_radius=part_radius(part) + 0.02, angular_rate=cfg.occluder_rate, phase=phase)
    scene = make_scene(part, cfg.visibility, pose=pose, point_density=cfg.scene.point_density, occluder=occ,
                       seed=cfg.seed, **_scene_kwargs(cfg.scene))
    frames = generate_sequence(scene, None, cfg.fps, cfg.duration)
    return Condition(part, scene.cad, pose, frames, cfg.visibility, cfg.seed, "static")


def push_script(cfg: PushTrialConfig, part: PartSpec):
    """Random contact point -> (start pose, motion script, pusher, visibility)."""
    rng = _seed_rng(cfg.seed, 2)
    vis = cfg.visibility if cfg.visibility is not None else float(rng.uniform(0.4, 0.6))
    yaw0, psi = rng.uniform(0.0, 360.0, size=2)
    offset = float(rng.uniform(-1.0, 1.0))  # lateral contact offset, fraction of radius
    u = np.array([np.cos(np.deg2rad(psi)), np.sin(np.deg2rad(psi)), 0.0])
    start = -0.5 * cfg.distance * u
    pose0 = RigidPose(rotation_about((0, 0, 1), yaw0), start)
    if cfg.distance <= 0:
        return pose0, MotionScript(((0.0, pose0),)), None, vis, 2.0
    duration = cfg.distance / cfg.speed
    pose1 = RigidPose(rotation_about((0, 0, 1), yaw0 + cfg.max_yaw * offset), start + cfg.distance * u)
    script = MotionScript(((0.0, pose0), (duration, pose1)))
    pusher = None
    if cfg.pusher:
        r = part_radius(part)
        behind = np.degrees(np.arctan2(-u[1], -u[0])) + 40.0 * offset
        pusher = OccluderSpec(radius=0.012, orbit_radius=r + 0.012, angular_rate=0.0, phase=behind,
                              center=(float(start[0]), float(start[1])),
                              velocity=(float(cfg.speed * u[0]), float(cfg.speed * u[1])))
    return pose0, script, pusher, vis, duration


def build_push_condition(cfg: PushTrialConfig) -> Condition:
    part = get_part(cfg.part)
    pose0, script, pusher, vis, duration = push_script(cfg, part)
    scene = make_scene(part, vis, pose=pose0, point_density=cfg.scene.point_density, occluder=pusher,
                       seed=cfg.seed, **_scene_kwargs(cfg.scene))
    frames = generate_sequence(scene, script, cfg.fps, duration)
    return Condition(part, scene.cad, pose0, frames, vis, cfg.seed, "push")


def build_speed_condition(cfg: SpeedTrialConfig) -> Condition:
    part = get_part(cfg.part)
    rng = _seed_rng(cfg.seed, 3)
    yaw0 = float(rng.uniform(0.0, 360.0))
    if cfg.motion == "translation":
        psi = np.deg2rad(float(rng.uniform(0.0, 360.0)))
        u = np.array([np.cos(psi), np.sin(psi), 0.0])
        dist = cfg.speed / 100.0 * cfg.duration
        start = -0.5 * dist * u
        pose0 = RigidPose(rotation_about((0, 0, 1), yaw0), start)
        pose1 = RigidPose(pose0.rotation, start + dist * u)
        keys = ((0.0, pose0), (cfg.duration, pose1))
    elif cfg.motion == "rotation":
        pose0 = RigidPose(rotation_about((0, 0, 1), yaw0))
        total = cfg.speed * cfg.duration
        # slerp takes the short way, so split into <180 degree segments
        n_seg = int(np.ceil(abs(total) / 90.0)) or 1
        keys = tuple((cfg.duration * k / n_seg, RigidPose(rotation_about((0, 0, 1), yaw0 + total * k / n_seg)))
                     for k in range(n_seg + 1))
    else:
        raise ValueError(f"unknown motion {cfg.motion!r}")
    script = MotionScript(keys)
    scene = make_scene(part, cfg.visibility, pose=pose0, point_density=cfg.scene.point_density,
                       seed=cfg.seed, **_scene_kwargs(cfg.scene))
    frames = generate_sequence(scene, script, cfg.fps, cfg.duration)
    return Condition(part, scene.cad, pose0, frames, cfg.visibility, cfg.seed, f"speed-{cfg.motion}")


def topple_script(cfg: ToppleTrialConfig, part: PartSpec):
    rng = _seed_rng(cfg.seed, 4)
    pose0 = RigidPose(rotation_about((0, 0, 1), float(rng.uniform(0.0, 360.0))))
    lo, hi = part.mesh.bounds()
    pivot = np.array([0.0, hi[1], lo[2]])  # bottom edge on the +y side, part frame
    R = rotation_about((1, 0, 0), -cfg.angle)
    pose1 = compose(pose0, RigidPose(R, pivot - R @ pivot))
    t1 = cfg.start + cfg.tip_time
    keys = [(0.0, pose0), (cfg.start, pose0), (t1, pose1)]
    if cfg.duration > t1:
        keys.append((cfg.duration, pose1))
    return pose0, MotionScript(tuple(keys))


def build_topple_condition(cfg: ToppleTrialConfig) -> Condition:
    part = get_part(cfg.part)
    pose0, script = topple_script(cfg, part)
    scene = make_scene(part, cfg.visibility, pose=pose0, point_density=cfg.scene.point_density,
                       seed=cfg.seed, **_scene_kwargs(cfg.scene))
    frames = generate_sequence(scene, script, cfg.fps, cfg.duration)
    return Condition(part, scene.cad, pose0, frames, cfg.visibility, cfg.seed, "topple")


def build_condition(cfg) -> Condition:
    """Render the scene for any trial config type."""
    for kind, builder in _BUILDERS.items():
        if isinstance(cfg, kind):
            return builder(cfg)
    raise TypeError(f"no scene builder for {type(cfg).__name__}")


def track_condition(cond: Condition, strategy, tracker_cfg: TrackerConfig, frames=None,
                    keep_records: bool = False) -> TrialResult:
    """Run one strategy over the condition's frames (or ``frames``) and score it."""
    frames = cond.frames if frames is None else frames
    cfg = tracker_cfg.with_(strategy=Strategy.parse(strategy))
    t0 = time.perf_counter()
    try:
        records, poses, lost = run_sequence(cond.cad, cond.init_pose, frames, cfg, stop_on_lost=True)
    except (EmptyTemplate, TrackerError) as exc:
        log.info("trial %s/%s seed %d failed at init: %s", cond.part.name, cfg.strategy.value, cond.seed, exc)
        records, poses, lost = [], [], 0
    elapsed = time.perf_counter() - t0
    r, t, r_raw, t_raw = trial_errors(poses, frames, cond.part.symmetries)
    res = TrialResult(
        strategy=cfg.strategy.value,
        part_id=cond.part.name,
        visibility=cond.visibility,
        seed=cond.seed,
        r_err=r,
        t_err=t,
        r_err_raw=r_raw,
        t_err_raw=t_raw,
        lost_at=lost,
        mean_fps=len(poses) / elapsed if elapsed > 0 else float("nan"),
        template_counts=[rec["template_points"] for rec in records],
        kind=cond.kind,
    )
    if keep_records:
        res.records = records
    return res


_BUILDERS = {
    StaticTrialConfig: build_static_condition,
    PushTrialConfig: build_push_condition,
    SpeedTrialConfig: build_speed_condition,
    ToppleTrialConfig: build_topple_condition,
}


def run_static_trial(cfg: StaticTrialConfig, strategy, tracker_cfg: TrackerConfig) -> TrialResult:
    cond = build_static_condition(cfg)
    return track_condition(cond, strategy, config_for_part(tracker_cfg, cond.part))


def run_push_trial(cfg: PushTrialConfig, strategy, tracker_cfg: TrackerConfig) -> TrialResult:
    cond = build_push_condition(cfg)
    return track_condition(cond, strategy, config_for_part(tracker_cfg, cond.part))


def run_condition(kind: str, cfg, strategies, tracker_cfg: TrackerConfig, keep_records: bool = False,
                  use_part_xi: bool = True):
    """Render once, track with each strategy; returns a list of TrialResults."""
    builder = {"static": build_static_condition, "push": build_push_condition,
               "topple": build_topple_condition}[kind]
    cond = builder(cfg)
    tcfg = config_for_part(tracker_cfg, cond.part, use_part_xi)
    return [track_condition(cond, s, tcfg, keep_records=keep_records) for s in strategies]


def _run_condition_job(args):
    return run_condition(*args)


def run_conditions(kind: str, configs, strategies, tracker_cfg: TrackerConfig, workers: int = 1,
                   keep_records: bool = False, use_part_xi: bool = True) -> list[TrialResult]:
    """Run many conditions, optionally on a process pool; order is preserved."""
    jobs = [(kind, c, tuple(strategies), tracker_cfg, keep_records, use_part_xi) for c in configs]
    if workers <= 1:
        batches = [_run_condition_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_condition_job, jobs))
    return [r for batch in batches for r in batch]


@dataclass
class SpeedEntry:
    part: str
    visibility: float
    seed: int
    motion: str
    strategy: str
    max_factor: float
    max_speed: float  # cm/s or deg/s
    probes: dict = field(default_factory=dict)


def playback_succeeds(cond: Condition, factor: float, strategy, tracker_cfg: TrackerConfig) -> bool:
    frames = speedup_resample(cond.frames, factor)
    if len(frames) < 2:
        return False
    res = track_condition(cond, strategy, tracker_cfg, frames=frames)
    return res.success


def find_max_speed(cond: Condition, strategy, tracker_cfg: TrackerConfig, base_speed: float,
                   max_factor: float = 32.0, resolution: float = 0.25) -> SpeedEntry:
    """Largest playback factor on a ``resolution`` grid whose trial still succeeds."""
    if max_factor > len(cond.frames) - 1:
        raise ValueError(f"max_factor {max_factor} needs more than {len(cond.frames)} frames")
    probes: dict[float, bool] = {}

    def ok(f):
        if f not in probes:
            probes[f] = playback_succeeds(cond, f, strategy, tracker_cfg)
        return probes[f]

    strategy = Strategy.parse(strategy)
    if not ok(1.0):
        best = 0.0
    elif ok(max_factor):
        best = max_factor
    else:
        lo, hi = 1.0, max_factor
        while hi - lo > resolution:
            steps = int(round((hi - lo) / resolution))
            mid = lo + max(1, steps // 2) * resolution
            if ok(mid):
                lo = mid
            else:
                hi = mid
        best = lo
    motion = cond.kind.replace("speed-", "")
    return SpeedEntry(cond.part.name, cond.visibility, cond.seed, motion, strategy.value, best,
                      best * base_speed, dict(sorted(probes.items())))


def run_speed_condition(cfg: SpeedTrialConfig, strategies, tracker_cfg: TrackerConfig,
                        use_part_xi: bool = True) -> list[SpeedEntry]:
    cond = build_speed_condition(cfg)
    tcfg = config_for_part(tracker_cfg, cond.part, use_part_xi)
    return [find_max_speed(cond, s, tcfg, cfg.speed, cfg.max_factor, cfg.resolution) for s in strategies]


def _run_speed_job(args):
    return run_speed_condition(*args)


def run_speed_conditions(configs, strategies, tracker_cfg: TrackerConfig, workers: int = 1,
                         use_part_xi: bool = True) -> list[SpeedEntry]:
    jobs = [(c, tuple(strategies), tracker_cfg, use_part_xi) for c in configs]
    if workers <= 1:
        batches = [_run_speed_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_speed_job, jobs))
    return [e for batch in batches for e in batch]


def measure_throughput(cond: Condition, strategy, tracker_cfg: TrackerConfig, warmup: int = 3,
                       min_frames: int = 200) -> float:
    """Mean frames per second of ``track_step`` on one worker, after warm-up."""
    cfg = tracker_cfg.with_(strategy=Strategy.parse(strategy))
    frames = cond.frames
    if len(frames) < warmup + 1 + min_frames:
        raise ValueError(f"need at least {warmup + 1 + min_frames} frames, got {len(frames)}")
    state = init_tracker(cond.cad, cond.init_pose, frames[0], cfg)
    for fr in frames[1:warmup + 1]:
        state, _, _ = track_step(state, fr, cfg)
    timed = frames[warmup + 1:]
    t0 = time.perf_counter()
    for fr in timed:
        state, _, _ = track_step(state, fr, cfg)
    return len(timed) / (time.perf_counter() - t0)


def throughput_condition(part: str = "cube", visibility: float = 0.6, seed: int = 0, n_frames: int = 210,
                         target_points: int = 20000, opts: SceneOptions = SceneOptions()) -> Condition:
    """Static occluded scene whose frames hold roughly ``target_points`` points."""
    probe = StaticTrialConfig(part, visibility, seed, fps=30.0, duration=1 / 30.0, scene=opts)
    n0 = len(build_static_condition(probe).frames[0].points)
    pixel = opts.pixel_size * np.sqrt(n0 / target_points)
    cfg = StaticTrialConfig(part, visibility, seed, fps=30.0, duration=n_frames / 30.0,
                            scene=replace(opts, pixel_size=float(pixel)))
    return build_static_condition(cfg)


def _parallel_job(args):
    cond_builder, cfg, strategy, tracker_cfg = args
    cond = cond_builder(cfg)
    tcfg = config_for_part(tracker_cfg, cond.part)
    return track_condition(cond, strategy, tcfg, keep_records=True)


def run_parallel_demo(configs, strategy, tracker_cfg: TrackerConfig, workers: int = 2,
                      builder=build_condition) -> list[TrialResult]:
    """Track independent scenes concurrently, one process per scene."""
    jobs = [(builder, c, strategy, tracker_cfg) for c in configs]
    if workers <= 1:
        return [_parallel_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_parallel_job, jobs))


__all__ = [
    "STRATEGIES", "SceneOptions", "StaticTrialConfig", "PushTrialConfig", "SpeedTrialConfig",
    "ToppleTrialConfig", "build_topple_condition", "build_condition", "Condition",
    "SpeedEntry", "build_static_condition", "build_push_condition", "build_speed_condition", "track_condition",
    "run_static_trial", "run_push_trial", "run_condition", "run_conditions", "find_max_speed",
    "run_speed_condition", "run_speed_conditions", "measure_throughput", "throughput_condition",
    "run_parallel_demo", "is_success", "pose_errors", "config_for_part",
]
