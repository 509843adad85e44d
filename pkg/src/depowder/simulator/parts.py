"""Procedural stand-ins for the five evaluation parts.

Every part sits on the build-box floor in its model frame (lowest point at
z = 0) and fits an 8-15 cm bounding-box diagonal. Each part declares the
rotations that map its surface onto itself, used by symmetry-aware metrics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..geometry import RigidPose, rotation_about
from . import mesh as M

PART_NAMES = ("cube", "cup", "propeller", "owl", "pipe")


@dataclass(frozen=True)
class PartSpec:
    name: str
    mesh: M.TriangleMesh
    xi: float  # cm, template/segmentation threshold for this part
    symmetries: tuple[RigidPose, ...]

    def diagonal(self) -> float:
        lo, hi = self.mesh.bounds()
        return float(np.linalg.norm(hi - lo))


def _about_point(R: np.ndarray, p) -> RigidPose:
    p = np.asarray(p, dtype=float)
    return RigidPose(R, p - R @ p)


def _cube_rotations() -> list[np.ndarray]:
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            R = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                R[row, col] = s
            if np.linalg.det(R) > 0:
                out.append(R)
    return out


def _cube() -> PartSpec:
    edge = 0.06
    centre = (0.0, 0.0, edge / 2)
    mesh = M.box((edge, edge, edge), centre)
    syms = tuple(_about_point(R, centre) for R in _cube_rotations())
    return PartSpec("cube", mesh, 1.0, syms)


def _cup() -> PartSpec:
    r_out, r_in, h, floor = 0.035, 0.031, 0.075, 0.005
    body = M.merge(
        M.tube(r_out, 0.0, h, 40),
        M.tube(r_in, floor, h, 40),
        M.annulus(r_in, r_out, h, 40),
        M.annulus(0.0, r_out, 0.0, 40),
        M.annulus(0.0, r_in, floor, 40),
    )
    handle = M.merge(
        M.box((0.022, 0.012, 0.008), (r_out + 0.008, 0.0, 0.018)),
        M.box((0.022, 0.012, 0.008), (r_out + 0.008, 0.0, 0.057)),
        M.box((0.008, 0.012, 0.047), (r_out + 0.016, 0.0, 0.0375)),
    )
    return PartSpec("cup", M.merge(body, handle), 1.0, (RigidPose.identity(),))


def _propeller() -> PartSpec:
    hub_r, hub_h = 0.012, 0.025
    parts = [M.tube(hub_r, 0.0, hub_h, 24), M.annulus(0.0, hub_r, 0.0, 24), M.annulus(0.0, hub_r, hub_h, 24)]
    blade_len, blade_w, blade_t, pitch = 0.045, 0.022, 0.004, 25.0
    for k in range(3):
        b = M.box((blade_len, blade_w, blade_t))
        b = b.transformed(rotation_about((1, 0, 0), pitch))
        b = b.transformed(translation=(hub_r - 0.002 + blade_len / 2, 0.0, 0.0))
        b = b.transformed(rotation_about((0, 0, 1), 120.0 * k), (0.0, 0.0, hub_h / 2))
        parts.append(b)
    mesh = M.merge(*parts)
    lo, _ = mesh.bounds()
    mesh = mesh.transformed(translation=(0.0, 0.0, -lo[2]))
    syms = tuple(RigidPose(rotation_about((0, 0, 1), 120.0 * k)) for k in range(3))
    return PartSpec("propeller", mesh, 0.8, syms)


def _owl() -> PartSpec:
    parts = [
        M.ellipsoid((0.030, 0.026, 0.035), (0.0, 0.0, 0.035)),
        M.ellipsoid((0.024, 0.022, 0.018), (0.0, 0.003, 0.074)),
        M.cone(0.007, 0.016, (0.013, 0.0, 0.084)),
        M.cone(0.007, 0.016, (-0.013, 0.0, 0.084)),
        M.box((0.008, 0.010, 0.010), (0.0, 0.026, 0.071)),
        M.ellipsoid((0.008, 0.018, 0.026), (0.027, -0.004, 0.036), n_seg=16, n_rings=10),
        M.ellipsoid((0.008, 0.018, 0.026), (-0.027, -0.004, 0.036), n_seg=16, n_rings=10),
        M.ellipsoid((0.014, 0.010, 0.006), (0.0, -0.026, 0.012), n_seg=16, n_rings=8),
    ]
    mesh = M.merge(*parts)
    lo, _ = mesh.bounds()
    mesh = mesh.transformed(translation=(0.0, 0.0, -lo[2]))
    return PartSpec("owl", mesh, 1.0, (RigidPose.identity(),))


def _pipe() -> PartSpec:
    major, r_out, r_in, ext = 0.045, 0.014, 0.011, 0.02
    parts = [M.torus_section(major, r_out, 90.0), M.torus_section(major, r_in, 90.0)]
    for r in (r_out, r_in):
        parts.append(M.straight_tube(r, (major, 0.0, 0.0), (major, -ext, 0.0)))
        parts.append(M.straight_tube(r, (0.0, major, 0.0), (-ext, major, 0.0)))
    # end faces
    ring = M.annulus(r_in, r_out, 0.0, 20)
    parts.append(ring.transformed(rotation_about((1, 0, 0), 90.0), (major, -ext, 0.0)))
    parts.append(ring.transformed(rotation_about((0, 1, 0), 90.0), (-ext, major, 0.0)))
    mesh = M.merge(*parts)
    shift = np.array([-(major - ext) / 2, -(major - ext) / 2, r_out])
    mesh = mesh.transformed(translation=shift)
    axis_point = np.array([0.0, 0.0, 0.0]) + shift
    syms = (RigidPose.identity(), _about_point(rotation_about((1, 1, 0), 180.0), axis_point))
    return PartSpec("pipe", mesh, 0.8, syms)


_BUILDERS = {"cube": _cube, "cup": _cup, "propeller": _propeller, "owl": _owl, "pipe": _pipe}


@lru_cache(maxsize=None)
def get_part(name: str) -> PartSpec:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown part {name!r}; choose from {PART_NAMES}") from None
