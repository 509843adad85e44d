import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depowder.geometry import RigidPose, rotation_about
from depowder.progress import (
    DegenerateExtent,
    HeightExtent,
    NoContour,
    ProgressError,
    cad_height_extent,
    estimate_progress,
    extract_contour,
    progress_from_scan,
    segment_scan,
)


def brute_segment(scan, cad, xi_cm):
    d = np.sqrt(((scan[:, None, :] - cad[None, :, :]) ** 2).sum(-1)).min(1)
    return d < xi_cm / 100.0


def brute_contour(part, powder, d_min, d_max):
    d = np.sqrt(((powder[:, None, :2] - part[None, :, :2]) ** 2).sum(-1)).min(1)
    return (d >= d_min) & (d <= d_max)


def test_progress_examples():
    ext = HeightExtent(0.10, 0.0)
    assert estimate_progress(0.07, ext) == pytest.approx(0.3)
    assert estimate_progress(0.10, ext) == 0.0
    assert estimate_progress(0.0, ext) == 1.0


def test_powder_above_part_truncates_to_zero():
    assert estimate_progress(0.25, HeightExtent(0.10, 0.0)) == 0.0
    assert estimate_progress(-0.05, HeightExtent(0.10, 0.0)) == 1.0


def test_degenerate_extent():
    with pytest.raises(DegenerateExtent):
        estimate_progress(0.0, HeightExtent(0.0, 0.0))
    flat = np.c_[np.random.default_rng(0).uniform(size=(50, 2)), np.zeros(50)]
    with pytest.raises(DegenerateExtent):
        cad_height_extent(flat)


@given(st.floats(-0.2, 0.3), st.floats(0.0, 0.1), st.floats(0.002, 0.2))
def test_progress_in_unit_interval_and_monotone(h, h_min, span):
    ext = HeightExtent(h_min + span, h_min)
    eta = estimate_progress(h, ext)
    assert 0.0 <= eta <= 1.0
    assert estimate_progress(h + 0.001, ext) <= eta


def test_cad_height_extent_under_pose():
    # rotating +90 deg about x sends the y axis to +z
    cad = np.array([[0, 0, 0], [0, 0.1, 0], [0, 0.05, 0.02]], dtype=float)
    ext = cad_height_extent(cad, RigidPose(rotation_about((1, 0, 0), 90), [0, 0, 1]))
    assert ext.h_max == pytest.approx(1.1)
    assert ext.h_min == pytest.approx(1.0)
    assert ext.span == pytest.approx(0.1)


@given(st.integers(0, 10_000), st.floats(0.3, 2.0))
def test_segmentation_matches_brute_force(seed, xi):
    rng = np.random.default_rng(seed)
    cad = rng.uniform(-0.05, 0.05, (150, 3))
    scan = np.vstack([cad + rng.normal(0, 0.004, cad.shape), rng.uniform(-0.1, 0.1, (150, 3))])
    seg = segment_scan(scan, cad, xi)
    assert np.array_equal(seg.part_mask, brute_segment(scan, cad, xi))
    assert len(seg.part_points) + len(seg.powder_points) == len(scan)


@given(st.integers(0, 10_000))
def test_contour_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    part = rng.uniform(-0.03, 0.03, (80, 3))
    powder = np.c_[rng.uniform(-0.1, 0.1, (300, 2)), rng.normal(0.01, 0.001, 300)]
    seg = segment_scan(np.vstack([part, powder]), part, 0.01)
    ref = brute_contour(seg.part_points, seg.powder_points, 0.01, 0.03)
    if not ref.any():
        return
    c = extract_contour(seg, 0.01, 0.03, widen=False)
    got = {tuple(p) for p in c.contour_points}
    want = {tuple(p) for p in seg.powder_points[ref]}
    assert got == want
    assert c.mean_height == pytest.approx(np.mean(seg.powder_points[ref][:, 2]))


def test_contour_widens_then_gives_up():
    part = np.array([[0, 0, 0.05], [0.01, 0, 0.05], [0, 0.01, 0.05]], dtype=float)
    far = np.array([[0.05, 0, 0.0], [0.0, 0.05, 0.0]])  # beyond 3 cm, inside 4.5 cm
    from depowder.progress import Segmentation
    seg = Segmentation(part, far, np.zeros(0, bool))
    c = extract_contour(seg, 0.01, 0.03)
    assert c.d_max_used == pytest.approx(0.045)
    with pytest.raises(NoContour):
        extract_contour(Segmentation(part, far + [1.0, 0, 0], np.zeros(0, bool)), 0.01, 0.03)
    with pytest.raises(NoContour):
        extract_contour(seg, 0.01, 0.03, widen=False)


def test_contour_needs_both_classes():
    from depowder.progress import Segmentation
    with pytest.raises(ProgressError):
        extract_contour(Segmentation(np.zeros((0, 3)), np.ones((5, 3)), np.zeros(5, bool)), 0.01, 0.03)


def _box_scene(powder_h, rng, sigma=0.0):
    # 6 cm cube standing on z = 0, CAD sampled on its faces, flat powder at powder_h
    n = 1500
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-0.03, 0.03, (n, 2))
    cad = np.empty((n, 3))
    for k, (ax, s) in enumerate([(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)]):
        m = face == k
        others = [i for i in range(3) if i != ax]
        cad[m, ax] = 0.03 * s
        cad[m][:, others] = 0
        cad[np.ix_(m, others)] = uv[m]
    cad[:, 2] += 0.03
    visible = cad[cad[:, 2] > powder_h]
    xy = rng.uniform(-0.15, 0.15, (20000, 2))
    outside = np.any(np.abs(xy) > 0.03, axis=1)
    powder = np.c_[xy[outside], np.full(outside.sum(), powder_h)]
    scan = np.vstack([visible, powder])
    return cad, scan + rng.normal(0, sigma, scan.shape)


@pytest.mark.parametrize("h", [0.0, 0.012, 0.03, 0.05])
def test_progress_from_scan_on_ideal_box(h):
    cad, scan = _box_scene(h, np.random.default_rng(1))
    est = progress_from_scan(scan, cad, 1.0)
    assert est.eta == pytest.approx((0.06 - h) / 0.06, abs=1e-9)


@given(st.floats(0.005, 0.055), st.integers(0, 1000))
def test_progress_fast_path_equals_full_scan(h, seed):
    cad, scan = _box_scene(h, np.random.default_rng(seed), sigma=0.002)
    fast = progress_from_scan(scan, cad, 1.0)
    seg = segment_scan(scan, cad, 1.0)
    full = extract_contour(seg, 0.01, 0.03)
    assert fast.h_pow == full.mean_height
    region = scan[np.all(np.abs(scan[:, :2]) < 0.1, axis=1)]
    hinted = progress_from_scan(scan, cad, 1.0, region=region)
    assert hinted.eta == fast.eta


def test_median_statistic_resists_outliers():
    cad, scan = _box_scene(0.03, np.random.default_rng(2))
    spike = np.array([[0.045, 0.0, 0.5]] * 3)
    mean = progress_from_scan(np.vstack([scan, spike]), cad, 1.0, stat="mean")
    med = progress_from_scan(np.vstack([scan, spike]), cad, 1.0, stat="median")
    assert med.eta == pytest.approx(0.5, abs=1e-9)
    assert mean.eta < med.eta


# -- further worked examples ---------------------------------------------------------------

def test_progress_formula_examples():
    ext = HeightExtent(0.100, 0.0)
    assert estimate_progress(0.040, ext) == pytest.approx(0.60)
    assert estimate_progress(0.120, ext) == 0.0
    assert estimate_progress(ext.h_min, ext) == 1.0


def test_segmentation_extremes():
    cad = np.random.default_rng(5).uniform(-0.05, 0.05, (300, 3))
    seg = segment_scan(cad, cad, 1.0)
    assert seg.part_mask.all() and len(seg.powder_points) == 0
    plane = np.c_[np.random.default_rng(6).uniform(-0.1, 0.1, (200, 2)), np.full(200, 0.5)]
    seg = segment_scan(plane, cad, 1.0)
    assert not seg.part_mask.any() and len(seg.powder_points) == 200


def test_ring_inside_annulus_is_fully_selected():
    from depowder.progress import Segmentation
    theta = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    part = np.c_[np.zeros((1, 2)), [[0.05]]]
    ring = np.c_[0.03 * np.cos(theta), 0.03 * np.sin(theta), np.full(400, 0.01)]
    c = extract_contour(Segmentation(part, ring, np.zeros(0, bool)), 0.02, 0.05)
    assert len(c.contour_points) == 400
    assert c.mean_height == pytest.approx(0.01)


def test_powder_only_inside_d_min_is_exhausted():
    from depowder.progress import Segmentation
    part = np.array([[0.0, 0.0, 0.05]])
    close = np.array([[0.005, 0.0, 0.0], [0.0, 0.004, 0.0]])
    with pytest.raises(NoContour):
        extract_contour(Segmentation(part, close, np.zeros(0, bool)), 0.01, 0.03)


def test_extent_of_tilted_cube():
    from depowder.simulator.mesh import box, sample_surface
    cube = box((0.1, 0.1, 0.1), (0, 0, 0.05))
    ext = cad_height_extent(cube.vertices)
    assert (ext.h_min, ext.h_max) == pytest.approx((0.0, 0.1))
    tilted = cad_height_extent(cube.vertices, RigidPose(rotation_about((1, 0, 0), 45)))
    assert tilted.span == pytest.approx(0.1 * np.sqrt(2), abs=1e-6)
    # a sampled cloud follows the mesh bounds after a topple
    pts = sample_surface(cube, 5.0)
    pose = RigidPose(rotation_about((1, 1, 0), 70), [0, 0, 0.02])
    lo, hi = cube.transformed(pose.rotation, pose.translation).bounds()
    got = cad_height_extent(pts, pose)
    assert got.h_max <= hi[2] + 1e-12 and got.h_min >= lo[2] - 1e-12
    assert got.span == pytest.approx(hi[2] - lo[2], abs=0.005)


def _sim_estimate(part, vis, sigma, seed=0):
    from depowder.geometry import transform_cloud
    from depowder.simulator.parts import get_part
    from depowder.simulator.scene import make_scene, render_frame
    spec = get_part(part)
    scene = make_scene(spec, vis, noise_sigma=sigma, seed=seed)
    fr = render_frame(scene, 0.0)
    cad = transform_cloud(scene.cad, fr.truth_pose)
    return fr, scene, progress_from_scan(fr.points, cad, spec.xi)


def test_contour_height_recovers_powder_plane():
    fr, scene, est = _sim_estimate("cube", 1 / 3, 0.001)
    assert est.h_pow == pytest.approx(scene.powder_height, abs=0.001)


@pytest.mark.parametrize("part", ["cube", "owl"])
def test_lowering_powder_raises_eta_proportionally(part):
    _, s1, e1 = _sim_estimate(part, 0.4, 0.001)
    _, s2, e2 = _sim_estimate(part, 0.6, 0.001)
    span = e1.extent.span
    expected = (s1.powder_height - s2.powder_height) / span
    assert e2.eta - e1.eta == pytest.approx(expected, abs=0.02)


@pytest.mark.parametrize("part", ["cube", "cup", "propeller", "owl", "pipe"])
def test_segmentation_agrees_with_simulator_labels(part):
    from depowder.geometry import transform_cloud
    from depowder.simulator.parts import get_part
    from depowder.simulator.scene import LABEL_PART, make_scene, render_frame
    spec = get_part(part)
    scene = make_scene(spec, 0.6, noise_sigma=spec.xi / 100 / 4)
    fr = render_frame(scene, 0.0)
    seg = segment_scan(fr.points, transform_cloud(scene.cad, fr.truth_pose), spec.xi)
    agreement = np.mean(seg.part_mask == (fr.truth_labels == LABEL_PART))
    assert agreement >= 0.99, f"{part}: {agreement:.4f}"
