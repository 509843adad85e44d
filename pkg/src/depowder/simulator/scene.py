"""Synthetic powder-bed scans from orthographic overhead depth cameras.

Each camera casts one ray per pixel through a regular grid. A ray returns the
first surface it meets among the posed part mesh, the powder surface (a plane
at ``powder_height`` with uniform roughness, spanning the build-box
footprint) and an optional cylindrical occluder. Part surface below the powder
height is buried and never returned. Gaussian noise is added last.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from ..geometry import RigidPose, transform_cloud
from ..progress import HeightExtent, estimate_progress
from .mesh import TriangleMesh, sample_surface

LABEL_PART, LABEL_POWDER, LABEL_OCCLUDER = 0, 1, 2


@dataclass(frozen=True)
class OccluderSpec:
    """Vertical cylinder (nozzle analogue) orbiting a centre point in xy.

    The orbit centre may itself drift at constant ``velocity`` (m/s), which
    lets the same spec describe a pusher travelling with a part.
    """

    radius: float = 0.015
    length: float = 0.15
    orbit_radius: float = 0.07
    angular_rate: float = 90.0  # deg/s
    phase: float = 0.0  # deg at t = 0
    clearance: float = 0.01  # tip height above the powder surface
    center: tuple[float, float] = (0.0, 0.0)
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("occluder radius must be positive")

    def position(self, time: float) -> np.ndarray:
        a = np.deg2rad(self.phase + self.angular_rate * time)
        return np.array([self.center[0] + self.velocity[0] * time + self.orbit_radius * np.cos(a),
                         self.center[1] + self.velocity[1] * time + self.orbit_radius * np.sin(a)])


@dataclass(frozen=True)
class MotionScript:
    """Pose keyframes; translation is interpolated linearly, rotation by slerp."""

    keyframes: tuple[tuple[float, RigidPose], ...]

    def __post_init__(self):
        times = [t for t, _ in self.keyframes]
        if not times:
            raise ValueError("motion script needs at least one keyframe")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")
        object.__setattr__(self, "keyframes", tuple((float(t), p) for t, p in self.keyframes))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.keyframes])

    def pose_at(self, time: float) -> RigidPose:
        times = self.times
        poses = [p for _, p in self.keyframes]
        if len(poses) == 1 or time <= times[0]:
            return poses[0]
        if time >= times[-1]:
            return poses[-1]
        k = int(np.searchsorted(times, time, side="right")) - 1
        t0, t1 = times[k], times[k + 1]
        alpha = (time - t0) / (t1 - t0)
        p0, p1 = poses[k], poses[k + 1]
        slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([p0.rotation, p1.rotation])))
        R = slerp([alpha]).as_matrix()[0]
        t = (1 - alpha) * p0.translation + alpha * p1.translation
        return RigidPose(R, t)


@dataclass(frozen=True, eq=False)
class Scene:
    mesh: TriangleMesh  # model frame
    cad: np.ndarray  # model-frame samples of ``mesh``
    part_pose: RigidPose
    powder_height: float
    powder_extent: tuple[tuple[float, float], tuple[float, float]] = ((-0.15, 0.15), (-0.15, 0.15))
    noise_sigma: float = 0.002
    occluder: OccluderSpec | None = None
    seed: int = 0
    powder_roughness: float = 0.001  # uniform +- jitter, m
    pixel_size: float = 0.003
    camera_tilt: float = 25.0  # deg from vertical
    camera_azimuths: tuple[float, ...] = (45.0, 225.0)
    part_name: str = "custom"

    def __post_init__(self):
        (x0, x1), (y0, y1) = self.powder_extent
        if not (x1 > x0 and y1 > y0):
            raise ValueError("powder extent must have positive area")
        if self.noise_sigma < 0 or self.pixel_size <= 0:
            raise ValueError("noise_sigma must be >= 0 and pixel_size > 0")

    def extent_at(self, pose: RigidPose) -> HeightExtent:
        z = transform_cloud(self.cad, pose)[:, 2]
        return HeightExtent(float(z.max()), float(z.min()))


def powder_height_for_visibility(cad: np.ndarray, pose: RigidPose, visibility: float) -> float:
    """Powder height whose height-ratio progress at ``pose`` equals ``visibility``."""
    z = transform_cloud(cad, pose)[:, 2]
    return float(z.max() - visibility * (z.max() - z.min()))


def make_scene(part, visibility: float | None = None, *, powder_height: float | None = None,
               pose: RigidPose | None = None, point_density: float = 5.0, **kwargs) -> Scene:
    """Build a scene around a :class:`PartSpec` or a ``(name, mesh)`` pair."""
    name = getattr(part, "name", "custom")
    mesh = part.mesh if hasattr(part, "mesh") else part
    cad = sample_surface(mesh, point_density, seed=0)
    pose = pose or RigidPose.identity()
    if powder_height is None:
        if visibility is None:
            raise ValueError("give either visibility or powder_height")
        powder_height = powder_height_for_visibility(cad, pose, visibility)
    return Scene(mesh=mesh, cad=cad, part_pose=pose, powder_height=powder_height, part_name=name, **kwargs)


@dataclass(frozen=True, eq=False)
class ScanFrame:
    timestamp: float
    points: np.ndarray
    truth_pose: RigidPose
    truth_labels: np.ndarray
    truth_eta: float
    index: int = 0

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class _Camera:
    direction: np.ndarray  # unit, pointing down into the scene
    u: np.ndarray
    v: np.ndarray


def _camera(tilt_deg: float, azimuth_deg: float) -> _Camera:
    tilt, az = np.deg2rad(tilt_deg), np.deg2rad(azimuth_deg)
    # camera sits at azimuth ``az`` and looks back toward the origin
    d = np.array([-np.sin(tilt) * np.cos(az), -np.sin(tilt) * np.sin(az), -np.cos(tilt)])
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.999 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, d)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return _Camera(d, u, v)


def _rasterize(a: np.ndarray, b: np.ndarray, s: np.ndarray, faces: np.ndarray,
               a0: float, b0: float, px: float, na: int, nb: int) -> np.ndarray:
    """Nearest triangle depth per pixel (``inf`` where the mesh is absent)."""
    depth = np.full(na * nb, np.inf)
    fa = (a - a0) / px - 0.5
    fb = (b - b0) / px - 0.5
    A, B, S = fa[faces], fb[faces], s[faces]
    i0 = np.clip(np.ceil(A.min(axis=1)), 0, na).astype(np.int64)
    i1 = np.clip(np.floor(A.max(axis=1)), -1, na - 1).astype(np.int64)
    j0 = np.clip(np.ceil(B.min(axis=1)), 0, nb).astype(np.int64)
    j1 = np.clip(np.floor(B.max(axis=1)), -1, nb - 1).astype(np.int64)
    area2 = (A[:, 1] - A[:, 0]) * (B[:, 2] - B[:, 0]) - (A[:, 2] - A[:, 0]) * (B[:, 1] - B[:, 0])
    wi = np.maximum(i1 - i0 + 1, 0)
    wj = np.maximum(j1 - j0 + 1, 0)
    counts = np.where(np.abs(area2) > 1e-12, wi * wj, 0)
    total = int(counts.sum())
    if total == 0:
        return depth
    tri = np.repeat(np.arange(len(faces)), counts)
    start = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(total) - start
    pi = i0[tri] + local % wi[tri]
    pj = j0[tri] + local // wi[tri]
    Ax, Bx = A[tri], B[tri]
    # barycentric weights via edge functions
    w0 = (Ax[:, 1] - pi) * (Bx[:, 2] - pj) - (Ax[:, 2] - pi) * (Bx[:, 1] - pj)
    w1 = (Ax[:, 2] - pi) * (Bx[:, 0] - pj) - (Ax[:, 0] - pi) * (Bx[:, 2] - pj)
    w2 = (Ax[:, 0] - pi) * (Bx[:, 1] - pj) - (Ax[:, 1] - pi) * (Bx[:, 0] - pj)
    ar = area2[tri]
    w0, w1, w2 = w0 / ar, w1 / ar, w2 / ar
    eps = -1e-9
    inside = (w0 >= eps) & (w1 >= eps) & (w2 >= eps)
    if not inside.any():
        return depth
    Sx = S[tri[inside]]
    z = w0[inside] * Sx[:, 0] + w1[inside] * Sx[:, 1] + w2[inside] * Sx[:, 2]
    np.minimum.at(depth, pi[inside] * nb + pj[inside], z)
    return depth


def _render_camera(scene: Scene, cam: _Camera, mesh_world: TriangleMesh, occ_xy, occ_z, rng):
    (x0, x1), (y0, y1) = scene.powder_extent
    top = max(float(mesh_world.vertices[:, 2].max()), scene.powder_height) + 0.05
    corners = np.array([[x, y, z] for x in (x0, x1) for y in (y0, y1) for z in (0.0, top)])
    ca, cb = corners @ cam.u, corners @ cam.v
    px = scene.pixel_size
    a0, b0 = ca.min(), cb.min()
    na = int(np.ceil((ca.max() - a0) / px))
    nb = int(np.ceil((cb.max() - b0) / px))
    ga = a0 + (np.arange(na) + 0.5) * px
    gb = b0 + (np.arange(nb) + 0.5) * px
    GA, GB = np.meshgrid(ga, gb, indexing="ij")
    q = GA.reshape(-1, 1) * cam.u + GB.reshape(-1, 1) * cam.v  # ray base points
    d = cam.direction
    n_pix = na * nb

    V = mesh_world.vertices
    part_s = _rasterize(V @ cam.u, V @ cam.v, V @ d, mesh_world.faces, a0, b0, px, na, nb)
    part_z = q[:, 2] + part_s * d[2]
    part_s = np.where(part_z >= scene.powder_height, part_s, np.inf)  # buried surface

    jitter = rng.uniform(-scene.powder_roughness, scene.powder_roughness, n_pix) if scene.powder_roughness > 0 else 0.0
    powder_s = (scene.powder_height + jitter - q[:, 2]) / d[2]
    hit = q + powder_s[:, None] * d
    inside_box = (hit[:, 0] >= x0) & (hit[:, 0] <= x1) & (hit[:, 1] >= y0) & (hit[:, 1] <= y1)
    powder_s = np.where(inside_box, powder_s, np.inf)

    occ_s = np.full(n_pix, np.inf)
    if occ_xy is not None:
        occ_s = _cylinder_hits(q, d, occ_xy, scene.occluder.radius, occ_z)

    stack = np.stack([part_s, powder_s, occ_s])
    label = np.argmin(stack, axis=0)
    best = stack[label, np.arange(n_pix)]
    ok = np.isfinite(best)
    pts = q[ok] + best[ok, None] * d
    return pts, label[ok]


def _cylinder_hits(q, d, center_xy, radius, z_range) -> np.ndarray:
    z_lo, z_hi = z_range
    out = np.full(len(q), np.inf)
    dx, dy = d[0], d[1]
    ox, oy = q[:, 0] - center_xy[0], q[:, 1] - center_xy[1]
    A = dx * dx + dy * dy
    if A > 1e-15:
        Bq = 2 * (ox * dx + oy * dy)
        C = ox * ox + oy * oy - radius * radius
        disc = Bq * Bq - 4 * A * C
        ok = disc >= 0
        s1 = np.where(ok, (-Bq - np.sqrt(np.where(ok, disc, 0.0))) / (2 * A), np.inf)
        z1 = q[:, 2] + s1 * d[2]
        side = ok & (z1 >= z_lo) & (z1 <= z_hi)
        out = np.where(side, s1, out)
    s_cap = (z_hi - q[:, 2]) / d[2]
    cx = ox + s_cap * dx
    cy = oy + s_cap * dy
    cap = cx * cx + cy * cy <= radius * radius
    return np.where(cap, np.minimum(out, s_cap), out)


def render_frame(scene: Scene, time: float, script: MotionScript | None = None, index: int = 0) -> ScanFrame:
    """Render one noisy, labelled scan of ``scene`` at ``time`` seconds.

    The random stream depends only on ``(scene.seed, index)``.
    """
    rng = np.random.default_rng([int(scene.seed), int(index)])
    pose = script.pose_at(time) if script is not None else scene.part_pose
    mesh_world = scene.mesh.transformed(pose.rotation, pose.translation)

    occ_xy = occ_z = None
    if scene.occluder is not None:
        occ = scene.occluder
        occ_xy = occ.position(time)
        z_lo = scene.powder_height + occ.clearance
        occ_z = (z_lo, z_lo + occ.length)

    pts_all, lab_all = [], []
    for az in scene.camera_azimuths:
        cam = _camera(scene.camera_tilt, az)
        pts, lab = _render_camera(scene, cam, mesh_world, occ_xy, occ_z, rng)
        pts_all.append(pts)
        lab_all.append(lab)
    points = np.vstack(pts_all) if pts_all else np.zeros((0, 3))
    labels = np.concatenate(lab_all).astype(np.int8) if lab_all else np.zeros(0, dtype=np.int8)
    if scene.noise_sigma > 0 and len(points):
        points = points + rng.normal(0.0, scene.noise_sigma, points.shape)

    eta = estimate_progress(scene.powder_height, scene.extent_at(pose))
    return ScanFrame(float(time), points, pose, labels, eta, int(index))


def generate_sequence(scene: Scene, script: MotionScript | None, fps: float, duration: float) -> list[ScanFrame]:
    if not fps > 0 or not duration > 0:
        raise ValueError("fps and duration must be positive")
    n = int(round(duration * fps))
    return [render_frame(scene, k / fps, script, index=k) for k in range(n)]


def speedup_resample(frames: list[ScanFrame], factor: float) -> list[ScanFrame]:
    """Emulate faster playback: stride through ``frames`` by ``factor``.

    Timestamps are rewritten to the original frame interval, so the apparent
    motion per frame grows by ``factor``.
    """
    if not factor >= 1:
        raise ValueError("factor must be >= 1")
    if not frames:
        raise ValueError("frames must be non-empty")
    n = len(frames)
    count = int(np.floor((n - 1) / factor + 1e-9)) + 1
    idx = np.floor(np.arange(count) * factor + 1e-9).astype(int)
    dt = frames[1].timestamp - frames[0].timestamp if n > 1 else 1.0
    t0 = frames[0].timestamp
    return [replace(frames[i], timestamp=t0 + k * dt) for k, i in enumerate(idx)]
