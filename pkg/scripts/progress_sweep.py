"""Progress estimate versus ground truth over parts, visibilities and noise.

Prints the worst absolute error per part for the mean and median contour
height, with and without an orbiting occluder next to the part.

usage: python3 scripts/progress_sweep.py
"""

import numpy as np

from depowder.geometry import RigidPose, rotation_about, transform_cloud
from depowder.harness.trials import part_radius
from depowder.progress import progress_from_scan
from depowder.simulator.parts import PART_NAMES, get_part
from depowder.simulator.scene import OccluderSpec, make_scene, render_frame

VISIBILITIES = (0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 1.0)


def worst_error(part, stat, occluded):
    spec = get_part(part)
    worst = 0.0
    for vis in VISIBILITIES:
        for sigma in (0.0, 0.002):
            for k, phase in enumerate(range(0, 360, 45)):
                occ = OccluderSpec(orbit_radius=part_radius(spec) + 0.02, phase=phase) if occluded else None
                pose = RigidPose(rotation_about((0, 0, 1), 37.0 * k))
                scene = make_scene(spec, vis, pose=pose, noise_sigma=sigma, seed=k, occluder=occ)
                fr = render_frame(scene, 0.0)
                est = progress_from_scan(fr.points, transform_cloud(scene.cad, fr.truth_pose), spec.xi, stat=stat)
                worst = max(worst, abs(est.eta - fr.truth_eta))
    return worst


def main():
    print(f"{'part':10s} {'mean':>8s} {'median':>8s} {'mean+occ':>9s} {'median+occ':>11s}")
    for part in PART_NAMES:
        vals = [worst_error(part, s, o) for o in (False, True) for s in ("mean", "median")]
        print(f"{part:10s} {vals[0]:8.4f} {vals[1]:8.4f} {vals[2]:9.4f} {vals[3]:11.4f}")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
