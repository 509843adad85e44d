"""Triangle meshes: OBJ subset I/O, primitive builders and surface sampling.

Supported OBJ subset: ``v x y z`` and triangular ``f i j k`` lines (``i/vt/vn``
tokens and negative indices accepted). Everything else is ignored except
non-triangular faces, which are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshParseError(ValueError):
    pass


class DegenerateMesh(ValueError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) metres
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshParseError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.areas().sum()) if len(self.faces) else 0.0

    def transformed(self, rotation=None, translation=None) -> "TriangleMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return TriangleMesh(v, self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def merge(*meshes: TriangleMesh) -> TriangleMesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise MeshParseError(f"cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(parts) < 4:
                    raise ValueError("vertex needs 3 coordinates")
            elif tag == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise MeshParseError(f"line {lineno}: only triangular faces are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except ValueError as exc:
            if isinstance(exc, MeshParseError):
                raise
            raise MeshParseError(f"line {lineno}: {exc}") from exc
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(v)):
        raise MeshParseError("non-finite vertex coordinates")
    return TriangleMesh(v, np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.extend(f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices)
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
    Path(path).write_text("\n".join(lines) + "\n")


def sample_surface(mesh: TriangleMesh, point_density: float, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform samples; ``point_density`` is points per cm^2."""
    if not point_density > 0:
        raise ValueError("point_density must be positive")
    areas = mesh.areas() if len(mesh.faces) else np.zeros(0)
    total = float(areas.sum())
    if total <= 0:
        raise DegenerateMesh("mesh has zero surface area")
    n = max(int(round(total * 1e4 * point_density)), 1)
    rng = np.random.default_rng(seed)
    tri_idx = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles()[tri_idx]
    return ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
            + (r1 * r2)[:, None] * tri[:, 2])


def sample_mesh(mesh_file, point_density: float, seed: int = 0) -> np.ndarray:
    mesh = mesh_file if isinstance(mesh_file, TriangleMesh) else read_obj(mesh_file)
    return sample_surface(mesh, point_density, seed)


# primitive builders; all outward-facing is not required for sampling or ray casting

def box(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    sx, sy, sz = np.asarray(size, dtype=float) / 2
    v = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)]) + center
    f = [[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
         [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]]
    return TriangleMesh(v, f)


def _grid_faces(n_rings: int, n_seg: int, closed_seg: bool = True) -> np.ndarray:
    faces = []
    cols = n_seg if closed_seg else n_seg - 1
    for i in range(n_rings - 1):
        for j in range(cols):
            jn = (j + 1) % n_seg
            a, b = i * n_seg + j, i * n_seg + jn
            c, d = (i + 1) * n_seg + j, (i + 1) * n_seg + jn
            faces.append([a, b, d])
            faces.append([a, d, c])
    return np.array(faces, dtype=np.int64).reshape(-1, 3)


def tube(radius: float, z0: float, z1: float, n_seg: int = 32, center=(0.0, 0.0)) -> TriangleMesh:
    """Open cylindrical surface about a vertical axis."""
    ang = np.linspace(0, 2 * np.pi, n_seg, endpoint=False)
    ring = np.stack([radius * np.cos(ang) + center[0], radius * np.sin(ang) + center[1]], axis=1)
    v = np.vstack([np.column_stack([ring, np.full(n_seg, z)]) for z in (z0, z1)])
    return TriangleMesh(v, _grid_faces(2, n_seg))


def annulus(r_in: float, r_out: float, z: float, n_seg: int = 32, center=(0.0, 0.0)) -> TriangleMesh:
    """Flat ring at height ``z``; ``r_in = 0`` gives a disc."""
    ang = np.linspace(0, 2 * np.pi, n_seg, endpoint=False)
    if r_in <= 0:
        v = np.vstack([[center[0], center[1], z],
                       np.column_stack([r_out * np.cos(ang) + center[0], r_out * np.sin(ang) + center[1],
                                        np.full(n_seg, z)])])
        f = [[0, 1 + j, 1 + (j + 1) % n_seg] for j in range(n_seg)]
        return TriangleMesh(v, f)
    v = np.vstack([np.column_stack([r * np.cos(ang) + center[0], r * np.sin(ang) + center[1], np.full(n_seg, z)])
                   for r in (r_in, r_out)])
    return TriangleMesh(v, _grid_faces(2, n_seg))


def ellipsoid(radii, center=(0.0, 0.0, 0.0), n_seg: int = 24, n_rings: int = 14) -> TriangleMesh:
    rx, ry, rz = radii
    theta = np.linspace(0, np.pi, n_rings)
    phi = np.linspace(0, 2 * np.pi, n_seg, endpoint=False)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    v = np.stack([rx * np.sin(T) * np.cos(P), ry * np.sin(T) * np.sin(P), rz * np.cos(T)], axis=-1)
    v = v.reshape(-1, 3) + np.asarray(center)
    return TriangleMesh(v, _grid_faces(n_rings, n_seg))


def cone(radius: float, height: float, base_center=(0.0, 0.0, 0.0), n_seg: int = 16) -> TriangleMesh:
    ang = np.linspace(0, 2 * np.pi, n_seg, endpoint=False)
    base = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_seg)])
    v = np.vstack([base, [[0, 0, height]]]) + np.asarray(base_center)
    f = [[j, (j + 1) % n_seg, n_seg] for j in range(n_seg)]
    return TriangleMesh(v, f)


def torus_section(major: float, minor: float, sweep_deg: float, n_major: int = 24, n_minor: int = 20) -> TriangleMesh:
    """Curved tube about the z axis from angle 0 to ``sweep_deg``; open ends."""
    u = np.linspace(0, np.deg2rad(sweep_deg), n_major)
    w = np.linspace(0, 2 * np.pi, n_minor, endpoint=False)
    U, W = np.meshgrid(u, w, indexing="ij")
    r = major + minor * np.cos(W)
    v = np.stack([r * np.cos(U), r * np.sin(U), minor * np.sin(W)], axis=-1).reshape(-1, 3)
    return TriangleMesh(v, _grid_faces(n_major, n_minor))


def straight_tube(radius: float, start, end, n_seg: int = 20) -> TriangleMesh:
    """Open tube between two points with arbitrary axis direction."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    axis = end - start
    axis /= np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    ang = np.linspace(0, 2 * np.pi, n_seg, endpoint=False)
    ring = radius * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)
    v = np.vstack([ring + start, ring + end])
    return TriangleMesh(v, _grid_faces(2, n_seg))
