"""Point clouds, rigid poses and point-to-point ICP.

A point cloud is an ``(N, 3)`` float64 array in metres. Poses map model-frame
points into the world frame: ``x_world = R @ x_model + t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

ORTHO_TOL = 1e-6
# re-orthonormalize composed rotations once drift passes this
_DRIFT_TOL = 1e-10


class GeometryError(ValueError):
    pass


class DegenerateCorrespondences(GeometryError):
    pass


class NoCorrespondences(GeometryError):
    def __init__(self, message: str, result: "IcpResult | None" = None):
        super().__init__(message)
        self.result = result


def as_cloud(points, copy: bool = False) -> np.ndarray:
    """Validate and coerce ``points`` into an ``(N, 3)`` float64 array."""
    arr = np.array(points, dtype=np.float64) if copy else np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3))
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"expected (N, 3) points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point cloud contains non-finite coordinates")
    return arr


def _polar(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def orthonormality_error(R: np.ndarray) -> float:
    return float(np.max(np.abs(R.T @ R - np.eye(3))))


@dataclass(frozen=True, eq=False)
class RigidPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise GeometryError("pose contains non-finite values")
        if orthonormality_error(R) > ORTHO_TOL or np.linalg.det(R) < 0:
            raise GeometryError("rotation is not a proper orthonormal matrix")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "RigidPose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle_deg: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(rotation_about(axis, angle_deg), translation)

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "RigidPose":
        Rt = self.rotation.T
        return RigidPose(Rt, -Rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        return transform_cloud(points, self)

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return compose(self, other)

    def __repr__(self):
        rv = np.round(self.rotation, 6).tolist()
        tv = np.round(self.translation, 6).tolist()
        return f"RigidPose(rotation={rv}, translation={tv})"


def rotation_about(axis, angle_deg: float) -> np.ndarray:
    """Rodrigues rotation matrix for a rotation of ``angle_deg`` about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise GeometryError("rotation axis must be non-zero")
    k = axis / n
    theta = np.deg2rad(angle_deg)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def transform_cloud(cloud, pose: RigidPose) -> np.ndarray:
    pts = as_cloud(cloud)
    if len(pts) == 0:
        return np.zeros((0, 3))
    return pts @ pose.rotation.T + pose.translation


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose that applies ``b`` first, then ``a``."""
    R = a.rotation @ b.rotation
    if orthonormality_error(R) > _DRIFT_TOL:
        R = _polar(R)
    return RigidPose(R, a.rotation @ b.translation + a.translation)


def rotation_angle_between(a: RigidPose | np.ndarray, b: RigidPose | np.ndarray) -> float:
    """Geodesic angle in degrees between two orientations."""
    Ra = a.rotation if isinstance(a, RigidPose) else np.asarray(a)
    Rb = b.rotation if isinstance(b, RigidPose) else np.asarray(b)
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def translation_distance(a: RigidPose, b: RigidPose) -> float:
    """Euclidean distance between translations, metres."""
    return float(np.linalg.norm(a.translation - b.translation))


class NearestNeighborIndex:
    """Immutable k-d tree over a target cloud."""

    def __init__(self, target):
        self.points = as_cloud(target, copy=True)
        self.points.flags.writeable = False
        if len(self.points) == 0:
            raise GeometryError("cannot index an empty cloud")
        # unbalanced (sliding midpoint) trees build and query faster on scan data
        self._tree = cKDTree(self.points, balanced_tree=False)

    def __len__(self):
        return len(self.points)

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Nearest target point and squared distance for each query."""
        q = as_cloud(queries)
        _, idx = self._tree.query(q, k=1)
        nearest = self.points[idx]
        return nearest, np.sum((q - nearest) ** 2, axis=1)

    def query_within(self, queries, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices, with ``inf`` / ``len(self)`` beyond ``radius``."""
        q = as_cloud(queries)
        if len(q) == 0:
            return np.zeros(0), np.zeros(0, dtype=np.intp)
        return self._tree.query(q, k=1, distance_upper_bound=radius)


def kabsch_align(source_pts, target_pts) -> RigidPose:
    """Least-squares rigid transform taking ``source_pts[i]`` onto ``target_pts[i]``."""
    src = as_cloud(source_pts)
    dst = as_cloud(target_pts)
    if src.shape != dst.shape:
        raise DegenerateCorrespondences("source and target counts differ")
    if len(src) < 3:
        raise DegenerateCorrespondences(f"need >= 3 correspondences, got {len(src)}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, S, Vt = np.linalg.svd(H)
    scale = max(S[0], np.finfo(float).tiny)
    if S[1] <= 1e-12 * scale or S[0] == 0:
        raise DegenerateCorrespondences("correspondences are collinear or coincident")
    D = np.eye(3)
    if np.linalg.det(Vt.T @ U.T) < 0:
        D[2, 2] = -1.0
    R = Vt.T @ D @ U.T
    R = _polar(R) if orthonormality_error(R) > _DRIFT_TOL else R
    return RigidPose(R, mu_d - R @ mu_s)


@dataclass(frozen=True)
class IcpResult:
    relative_pose: RigidPose
    final_rmse: float
    iterations_used: int
    converged: bool
    rmse_trace: tuple = ()
    inlier_count: int = 0


def icp_register(source, target, prior: RigidPose, cfg, index: NearestNeighborIndex | None = None) -> IcpResult:
    """Point-to-point ICP of ``source`` against ``target`` starting from ``prior``.

    Returns the relative pose ``T`` such that ``compose(T, prior)`` maps the
    source onto the target. The RMSE tracked per iteration is the truncated
    error ``sqrt(mean(min(d^2, c^2)))`` over all source points, with ``c`` the
    correspondence cutoff; this objective cannot increase between iterations.
    ``index`` may be passed to reuse a k-d tree already built over ``target``.
    """
    src = as_cloud(source)
    if len(src) < 3:
        raise DegenerateCorrespondences("ICP source needs >= 3 points")
    if index is None:
        tgt = as_cloud(target)
        if len(tgt) < 3:
            raise DegenerateCorrespondences("ICP target needs >= 3 points")
        index = NearestNeighborIndex(tgt)
    elif len(index) < 3:
        raise DegenerateCorrespondences("ICP target needs >= 3 points")

    cutoff = cfg.cutoff_m
    base = transform_cloud(src, prior)
    rel = RigidPose.identity()
    trace: list[float] = []
    converged = False
    iterations = 0
    prev = np.inf
    n_in = 0

    def evaluate(pose):
        moved = base @ pose.rotation.T + pose.translation
        dist, idx = index.query_within(moved, cutoff)
        inlier = np.isfinite(dist)
        sq = np.where(inlier, dist, cutoff) ** 2
        return moved, idx, inlier, float(np.sqrt(sq.mean()))

    prev_rel = rel
    prev_n = 0
    while True:
        moved, idx, inlier, rmse = evaluate(rel)
        n_in = int(inlier.sum())
        if rmse > prev:
            # a rounding-level uphill step near the optimum: keep the previous pose
            rel, rmse, n_in = prev_rel, prev, prev_n
            iterations -= 1
            converged = True
            break
        trace.append(rmse)
        if n_in < 3:
            fail = IcpResult(RigidPose.identity(), rmse, iterations, False, tuple(trace), n_in)
            raise NoCorrespondences(f"only {n_in} correspondences within cutoff", fail)
        if rmse == 0.0 or prev - rmse < cfg.convergence_eps:
            converged = True
            break
        if iterations >= cfg.max_iterations:
            break
        prev, prev_rel, prev_n = rmse, rel, n_in
        step = kabsch_align(moved[inlier], index.points[idx[inlier]])
        rel = compose(step, rel)
        iterations += 1

    return IcpResult(rel, rmse, iterations, converged, tuple(trace), n_in)
