"""Pose error metrics and per-trial results."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import RigidPose, rotation_angle_between

SUCCESS_R_DEG = 15.0
SUCCESS_T_CM = 1.5
# errors recorded for a trial whose tracker was lost
SENTINEL_R_DEG = 180.0
SENTINEL_T_CM = 100.0


def pose_errors(est: RigidPose, truth: RigidPose, symmetries=None) -> tuple[float, float, float, float]:
    """``(R_raw, t_raw, R_sym, t_sym)`` in degrees and centimetres.

    The symmetry-aware pair uses the part symmetry that best explains the
    estimated orientation.
    """
    r_raw = rotation_angle_between(est, truth)
    t_raw = float(np.linalg.norm(est.translation - truth.translation)) * 100.0
    if not symmetries:
        return r_raw, t_raw, r_raw, t_raw
    best = None
    for sym in symmetries:
        R = est.rotation @ sym.rotation
        r = rotation_angle_between(R, truth.rotation)
        if best is None or r < best[0] - 1e-12:
            t = est.rotation @ sym.translation + est.translation
            best = (r, float(np.linalg.norm(t - truth.translation)) * 100.0)
    return r_raw, t_raw, best[0], best[1]


@dataclass
class TrialResult:
    strategy: str
    part_id: str
    visibility: float
    seed: int
    r_err: list = field(default_factory=list)  # deg per frame, symmetry-aware
    t_err: list = field(default_factory=list)  # cm per frame, symmetry-aware
    r_err_raw: list = field(default_factory=list)
    t_err_raw: list = field(default_factory=list)
    lost_at: int | None = None
    mean_fps: float = float("nan")
    template_counts: list = field(default_factory=list)
    kind: str = "static"
    records: list | None = field(default=None, repr=False)  # per-frame trajectory log, when kept

    @property
    def lost(self) -> bool:
        return self.lost_at is not None

    @property
    def final_R_err(self) -> float:
        return SENTINEL_R_DEG if self.lost or not self.r_err else float(self.r_err[-1])

    @property
    def final_t_err(self) -> float:
        return SENTINEL_T_CM if self.lost or not self.t_err else float(self.t_err[-1])

    @property
    def mean_R_err(self) -> float:
        return SENTINEL_R_DEG if self.lost else float(np.mean(self.r_err))

    @property
    def mean_t_err(self) -> float:
        return SENTINEL_T_CM if self.lost else float(np.mean(self.t_err))

    @property
    def mean_R_err_raw(self) -> float:
        return SENTINEL_R_DEG if self.lost else float(np.mean(self.r_err_raw))

    @property
    def mean_t_err_raw(self) -> float:
        return SENTINEL_T_CM if self.lost else float(np.mean(self.t_err_raw))

    @property
    def success(self) -> bool:
        return is_success(self.final_R_err, self.final_t_err)

    def summary_row(self) -> dict:
        return {
            "kind": self.kind,
            "strategy": self.strategy,
            "part": self.part_id,
            "visibility": self.visibility,
            "seed": self.seed,
            "mean_R_err": self.mean_R_err,
            "mean_t_err": self.mean_t_err,
            "mean_R_err_raw": self.mean_R_err_raw,
            "mean_t_err_raw": self.mean_t_err_raw,
            "final_R_err": self.final_R_err,
            "final_t_err": self.final_t_err,
            "success": int(self.success),
            "lost_at": -1 if self.lost_at is None else self.lost_at,
            "frames": len(self.r_err),
        }


def is_success(final_r_deg: float, final_t_cm: float) -> bool:
    return final_r_deg <= SUCCESS_R_DEG and final_t_cm <= SUCCESS_T_CM


def trial_errors(poses, frames, symmetries=None):
    rows = [pose_errors(p, f.truth_pose, symmetries) for p, f in zip(poses, frames)]
    if not rows:
        return [], [], [], []
    r_raw, t_raw, r_sym, t_sym = map(list, zip(*rows))
    return r_sym, t_sym, r_raw, t_raw
