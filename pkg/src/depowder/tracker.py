"""Template-based pose tracking: Vanilla, Continuous and Conditional Update ICP."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import Strategy, TrackerConfig
from .geometry import (
    GeometryError,
    IcpResult,
    NearestNeighborIndex,
    RigidPose,
    as_cloud,
    compose,
    icp_register,
    rotation_angle_between,
    transform_cloud,
)
from .progress import ProgressError, progress_from_scan

# scan crop around the posed CAD, in multiples of the correspondence cutoff
CROP_MARGIN_CUTOFFS = 3.0


class TrackerError(RuntimeError):
    pass


class EmptyTemplate(TrackerError):
    pass


class TrackingLost(TrackerError):
    def __init__(self, message: str, state: "TrackerState | None" = None):
        super().__init__(message)
        self.state = state


class Phase(enum.IntEnum):
    PHASE1 = 1
    PHASE2 = 2
    PHASE3 = 3


def classify_phase(eta: float, cfg: TrackerConfig) -> Phase:
    if eta <= cfg.eta1:
        return Phase.PHASE1
    if eta <= cfg.eta2:
        return Phase.PHASE2
    return Phase.PHASE3


@dataclass(frozen=True)
class Template:
    """Visible CAD subset, kept as indices into the model-frame CAD cloud."""

    indices: np.ndarray
    R_last: np.ndarray
    t_last: np.ndarray
    eta_last: float

    def cloud(self, cad: np.ndarray) -> np.ndarray:
        return cad[self.indices]

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class TrackerState:
    cad: np.ndarray
    current_pose: RigidPose
    template: Template
    transformed_cad: np.ndarray
    current_eta: float
    phase: Phase
    frame_index: int = 0
    tracking_started: bool = False
    h_pow: float = float("nan")
    last_icp: IcpResult | None = None
    template_updated: bool = True


def template_update_mask(transformed_cad, scan, xi: float, index: NearestNeighborIndex | None = None) -> np.ndarray:
    """Boolean mask over CAD points whose nearest scan point is closer than ``xi`` cm."""
    cad = as_cloud(transformed_cad)
    if index is None:
        pts = as_cloud(scan)
        if len(pts) == 0:
            raise TrackerError("template update needs a non-empty scan")
        index = NearestNeighborIndex(pts)
    radius = xi / 100.0
    if len(cad) == 0:
        return np.zeros(0, dtype=bool)
    dist, _ = index.query_within(cad, radius)
    return dist < radius


def template_update(transformed_cad, scan, xi: float, index: NearestNeighborIndex | None = None) -> np.ndarray:
    cad = as_cloud(transformed_cad)
    return cad[template_update_mask(cad, scan, xi, index)]


def should_update(state: TrackerState, new_pose: RigidPose, new_eta: float, cfg: TrackerConfig) -> bool:
    tmpl = state.template
    if rotation_angle_between(tmpl.R_last, new_pose.rotation) > cfg.delta1:
        return True
    if np.linalg.norm(new_pose.translation - tmpl.t_last) > cfg.delta2_m:
        return True
    return abs(new_eta - tmpl.eta_last) > cfg.delta3


def _scan_points(scan) -> np.ndarray:
    return as_cloud(getattr(scan, "points", scan))


def _crop(scan: np.ndarray, cad_world: np.ndarray, margin: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scan points whose xy lies in the CAD footprint grown by ``margin``, plus that box."""
    lo = cad_world[:, :2].min(axis=0) - margin
    hi = cad_world[:, :2].max(axis=0) + margin
    xy = scan[:, :2]
    keep = np.all((xy >= lo) & (xy <= hi), axis=1)
    return scan[keep], lo, hi


def _covers(crop, cad_world: np.ndarray, margin: float) -> bool:
    """True if the crop box holds the CAD footprint grown by ``margin``."""
    _, lo, hi = crop
    xy = cad_world[:, :2]
    return bool(np.all(xy.min(axis=0) - margin >= lo) and np.all(xy.max(axis=0) + margin <= hi))


def _progress(scan, cad_world, cfg: TrackerConfig, fallback_eta: float, fallback_h: float, crop=None):
    # the ICP crop can stand in for the full scan when it covers the contour band
    region = None
    if crop is not None and _covers(crop, cad_world, cfg.xi_m + cfg.contour_d_max):
        region = crop[0]
    try:
        est = progress_from_scan(scan, cad_world, cfg.xi, cfg.contour_d_min, cfg.contour_d_max,
                                 stat=cfg.powder_height_stat, region=region)
    except ProgressError:
        return fallback_eta, fallback_h
    return est.eta, est.h_pow


def init_tracker(cad, t_init: RigidPose, first_scan, cfg: TrackerConfig) -> TrackerState:
    cad = as_cloud(cad, copy=True)
    scan = _scan_points(first_scan)
    if len(cad) < 3 or len(scan) < 3:
        raise TrackerError("init_tracker needs >= 3 CAD and scan points")
    cad.flags.writeable = False
    cad_world = transform_cloud(cad, t_init)
    mask = template_update_mask(cad_world, scan, cfg.xi)
    if not mask.any():
        raise EmptyTemplate("no CAD point lies within xi of the first scan")
    eta, h_pow = _progress(scan, cad_world, cfg, 0.0, float("nan"))
    phase = classify_phase(eta, cfg)
    template = Template(np.flatnonzero(mask), t_init.rotation.copy(), t_init.translation.copy(), eta)
    return TrackerState(
        cad=cad,
        current_pose=t_init,
        template=template,
        transformed_cad=cad_world,
        current_eta=eta,
        phase=phase,
        frame_index=0,
        tracking_started=(not cfg.phase_gating) or phase != Phase.PHASE1,
        h_pow=h_pow,
    )


def track_step(state: TrackerState, scan, cfg: TrackerConfig) -> tuple[TrackerState, RigidPose, float]:
    """Advance the tracker by one scan; returns ``(state, pose, eta)``."""
    pts = _scan_points(scan)
    if len(pts) < 3:
        raise TrackingLost("scan has fewer than 3 points", state)
    frame = state.frame_index + 1

    if not state.tracking_started:
        # below eta1 the part is assumed to stay at its initial pose
        eta, h_pow = _progress(pts, state.transformed_cad, cfg, state.current_eta, state.h_pow)
        phase = classify_phase(eta, cfg)
        started = phase != Phase.PHASE1
        new_state = replace(state, current_eta=eta, h_pow=h_pow, phase=phase, frame_index=frame,
                            tracking_started=started, last_icp=None, template_updated=False)
        if not started:
            return new_state, state.current_pose, eta
        state = new_state
        frame = state.frame_index

    crop = _crop(pts, state.transformed_cad, CROP_MARGIN_CUTOFFS * cfg.cutoff_m)
    cropped = crop[0]
    if len(cropped) < 3:
        raise TrackingLost("no scan points near the part", state)
    index = NearestNeighborIndex(cropped)

    if cfg.strategy is Strategy.VANILLA:
        source = state.cad
    else:
        source = state.template.cloud(state.cad)
    try:
        icp = icp_register(source, None, state.current_pose, cfg, index=index)
    except GeometryError as exc:
        raise TrackingLost(f"ICP failed: {exc}", state) from exc

    pose = compose(icp.relative_pose, state.current_pose)
    cad_world = transform_cloud(state.cad, pose)
    eta, h_pow = _progress(pts, cad_world, cfg, state.current_eta, state.h_pow, crop=crop)

    if cfg.strategy is Strategy.VANILLA:
        update = False
    elif cfg.strategy is Strategy.CONTINUOUS:
        update = True
    else:
        update = should_update(state, pose, eta, cfg)

    template = state.template
    if update:
        if _covers(crop, cad_world, cfg.xi_m):
            mask = template_update_mask(cad_world, cropped, cfg.xi, index=index)
        else:
            mask = template_update_mask(cad_world, pts, cfg.xi)
        if not mask.any():
            raise TrackingLost("template became empty", state)
        template = Template(np.flatnonzero(mask), pose.rotation.copy(), pose.translation.copy(), eta)

    new_state = TrackerState(
        cad=state.cad,
        current_pose=pose,
        template=template,
        transformed_cad=cad_world,
        current_eta=eta,
        phase=classify_phase(eta, cfg),
        frame_index=frame,
        tracking_started=True,
        h_pow=h_pow,
        last_icp=icp,
        template_updated=update,
    )
    return new_state, pose, eta


# trajectory log: one JSON object per line, keys in this order
TRAJECTORY_FIELDS = (
    "frame",
    "timestamp",
    "rotation",
    "translation",
    "eta",
    "phase",
    "template_points",
    "icp_rmse",
    "template_updated",
    "h_pow",
)


def trajectory_record(state: TrackerState, timestamp: float) -> dict:
    icp = state.last_icp
    h = state.h_pow
    return {
        "frame": int(state.frame_index),
        "timestamp": float(timestamp),
        "rotation": [float(v) for v in state.current_pose.rotation.reshape(-1)],
        "translation": [float(v) for v in state.current_pose.translation],
        "eta": float(state.current_eta),
        "phase": int(state.phase),
        "template_points": len(state.template),
        "icp_rmse": None if icp is None else float(icp.final_rmse),
        "template_updated": bool(state.template_updated),
        "h_pow": None if not np.isfinite(h) else float(h),
    }


def write_trajectory(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({k: rec[k] for k in TRAJECTORY_FIELDS}) + "\n")


def read_trajectory(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def pose_from_record(rec: dict) -> RigidPose:
    return RigidPose(np.reshape(rec["rotation"], (3, 3)), rec["translation"])


def run_sequence(cad, t_init: RigidPose, frames, cfg: TrackerConfig, stop_on_lost: bool = True):
    """Track a whole sequence; returns ``(records, poses, lost_at)``.

    ``lost_at`` is the frame index of the first TrackingLost, or None. With
    ``stop_on_lost=False`` the last good pose is held and tracking retries on
    the following frame.
    """
    frames = list(frames)
    state = init_tracker(cad, t_init, frames[0], cfg)
    records = [trajectory_record(state, getattr(frames[0], "timestamp", 0.0))]
    poses = [state.current_pose]
    lost_at = None
    for i, frame in enumerate(frames[1:], start=1):
        ts = getattr(frame, "timestamp", float(i))
        try:
            state, pose, _ = track_step(state, frame, cfg)
        except TrackingLost as exc:
            if lost_at is None:
                lost_at = i
            if stop_on_lost:
                break
            state = replace(exc.state, frame_index=exc.state.frame_index + 1, template_updated=False, last_icp=None)
        records.append(trajectory_record(state, ts))
        poses.append(state.current_pose)
    return records, poses, lost_at
