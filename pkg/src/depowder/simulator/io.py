"""Scene/script YAML configs and on-disk scan sequences.

Sequence directory layout::

    frame_00000.xyz   one point per line: "x y z label" (metres; label 0 part,
    frame_00001.xyz   1 powder, 2 occluder)
    ...
    manifest.csv      frame,file,timestamp,truth_eta,r00..r22,tx,ty,tz

Scene config keys (YAML)::

    part: cube                # built-in part name, or
    mesh: parts/cube.obj      # path to an OBJ mesh (relative to the config)
    point_density: 5.0        # CAD samples per cm^2
    pose:                     # ground-truth part pose
      translation: [0, 0, 0]  # m
      rotation_deg: [0, 0, 0] # xyz Euler angles, degrees
    visibility: 0.6           # fraction; sets the powder height, or
    powder_height: 0.03       # m
    powder_extent: [[-0.15, 0.15], [-0.15, 0.15]]  # m, build-box footprint
    noise_sigma: 0.002        # m
    powder_roughness: 0.001   # m, uniform +- jitter of powder heights
    pixel_size: 0.003         # m, camera ray spacing
    camera_tilt_deg: 25       # deg from vertical
    camera_azimuths_deg: [45, 225]
    seed: 0
    occluder:                 # optional nozzle analogue
      radius: 0.015           # m
      length: 0.15            # m
      orbit_radius: 0.07      # m
      angular_rate_deg: 90    # deg/s
      phase_deg: 0            # deg
      clearance: 0.01         # m above the powder surface
      center: [0, 0]          # m
      velocity: [0, 0]        # m/s, drift of the orbit centre

Motion script keys (YAML)::

    keyframes:
      - {time: 0.0, translation: [0, 0, 0], rotation_deg: [0, 0, 0]}
      - {time: 5.0, translation: [0.1, 0, 0], rotation_deg: [0, 0, 20]}
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from ..geometry import RigidPose
from .mesh import read_obj
from .parts import get_part
from .scene import MotionScript, OccluderSpec, ScanFrame, Scene, make_scene

MANIFEST = "manifest.csv"
_ROT_COLS = [f"r{i}{j}" for i in range(3) for j in range(3)]
MANIFEST_COLUMNS = ["frame", "file", "timestamp", "truth_eta", *_ROT_COLS, "tx", "ty", "tz"]


class ConfigFileError(ValueError):
    pass


def load_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigFileError(f"cannot load {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigFileError(f"{path}: top level must be a mapping")
    return data


def pose_from_dict(d: dict | None) -> RigidPose:
    if not d:
        return RigidPose.identity()
    rot = Rotation.from_euler("xyz", d.get("rotation_deg", [0, 0, 0]), degrees=True).as_matrix()
    return RigidPose(rot, d.get("translation", [0, 0, 0]))


def pose_to_dict(pose: RigidPose) -> dict:
    return {
        "translation": [float(v) for v in pose.translation],
        "rotation_deg": [float(v) for v in Rotation.from_matrix(pose.rotation).as_euler("xyz", degrees=True)],
    }


_SCENE_KEYS = {
    "part", "mesh", "point_density", "pose", "visibility", "powder_height", "powder_extent", "noise_sigma",
    "powder_roughness", "pixel_size", "camera_tilt_deg", "camera_azimuths_deg", "seed", "occluder",
}


def scene_from_dict(data: dict, base_dir: Path | None = None) -> Scene:
    unknown = set(data) - _SCENE_KEYS
    if unknown:
        raise ConfigFileError(f"unknown scene keys: {sorted(unknown)}")
    if ("part" in data) == ("mesh" in data):
        raise ConfigFileError("scene needs exactly one of 'part' or 'mesh'")
    if "part" in data:
        part = get_part(data["part"])
    else:
        path = Path(data["mesh"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        part = read_obj(path)
    kwargs = {}
    for key, name in [("noise_sigma", "noise_sigma"), ("powder_roughness", "powder_roughness"),
                      ("pixel_size", "pixel_size"), ("camera_tilt_deg", "camera_tilt"), ("seed", "seed")]:
        if key in data:
            kwargs[name] = data[key]
    if "camera_azimuths_deg" in data:
        kwargs["camera_azimuths"] = tuple(float(a) for a in data["camera_azimuths_deg"])
    if "powder_extent" in data:
        (x0, x1), (y0, y1) = data["powder_extent"]
        kwargs["powder_extent"] = ((float(x0), float(x1)), (float(y0), float(y1)))
    if "occluder" in data and data["occluder"]:
        o = dict(data["occluder"])
        kwargs["occluder"] = OccluderSpec(
            radius=o.get("radius", 0.015),
            length=o.get("length", 0.15),
            orbit_radius=o.get("orbit_radius", 0.07),
            angular_rate=o.get("angular_rate_deg", 90.0),
            phase=o.get("phase_deg", 0.0),
            clearance=o.get("clearance", 0.01),
            center=tuple(o.get("center", (0.0, 0.0))),
            velocity=tuple(o.get("velocity", (0.0, 0.0))),
        )
    if ("visibility" in data) == ("powder_height" in data):
        raise ConfigFileError("scene needs exactly one of 'visibility' or 'powder_height'")
    return make_scene(
        part,
        data.get("visibility"),
        powder_height=data.get("powder_height"),
        pose=pose_from_dict(data.get("pose")),
        point_density=float(data.get("point_density", 5.0)),
        **kwargs,
    )


def load_scene(path) -> Scene:
    return scene_from_dict(load_yaml(path), Path(path).parent)


def script_from_dict(data: dict) -> MotionScript:
    frames = data.get("keyframes")
    if not frames:
        raise ConfigFileError("motion script needs a non-empty 'keyframes' list")
    return MotionScript(tuple((float(k["time"]), pose_from_dict(k)) for k in frames))


def load_script(path) -> MotionScript:
    return script_from_dict(load_yaml(path))


def write_sequence(out_dir, frames: list[ScanFrame]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, fr in enumerate(frames):
        name = f"frame_{k:05d}.xyz"
        data = np.column_stack([fr.points, fr.truth_labels.astype(float)])
        np.savetxt(out / name, data, fmt=["%.6f", "%.6f", "%.6f", "%d"])
        R = fr.truth_pose.rotation.reshape(-1)
        t = fr.truth_pose.translation
        rows.append([k, name, repr(float(fr.timestamp)), repr(float(fr.truth_eta)),
                     *[repr(float(v)) for v in R], *[repr(float(v)) for v in t]])
    with open(out / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        w.writerows(rows)
    return out


def read_sequence(in_dir) -> list[ScanFrame]:
    src = Path(in_dir)
    manifest = src / MANIFEST
    if not manifest.exists():
        raise ConfigFileError(f"{src} has no {MANIFEST}")
    frames = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            data = np.loadtxt(src / row["file"], ndmin=2)
            if data.size == 0:
                data = np.zeros((0, 4))
            R = np.array([float(row[c]) for c in _ROT_COLS]).reshape(3, 3)
            t = [float(row[c]) for c in ("tx", "ty", "tz")]
            frames.append(ScanFrame(float(row["timestamp"]), data[:, :3], RigidPose(R, t),
                                    data[:, 3].astype(np.int8), float(row["truth_eta"]), int(row["frame"])))
    return frames
