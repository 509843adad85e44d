import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from depowder.config import TrackerConfig
from depowder.geometry import (
    DegenerateCorrespondences,
    GeometryError,
    NearestNeighborIndex,
    NoCorrespondences,
    RigidPose,
    as_cloud,
    compose,
    icp_register,
    kabsch_align,
    rotation_about,
    rotation_angle_between,
    transform_cloud,
    translation_distance,
)

unit = st.floats(-1.0, 1.0, allow_nan=False)
angles = st.floats(-179.0, 179.0, allow_nan=False)
offsets = st.floats(-0.5, 0.5, allow_nan=False)


@st.composite
def poses(draw):
    axis = np.array([draw(unit), draw(unit), draw(unit)])
    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([0.0, 0.0, 1.0])
    t = [draw(offsets) for _ in range(3)]
    return RigidPose(rotation_about(axis, draw(angles)), t)


def test_rotation_about_z_quarter_turn():
    R = rotation_about((0, 0, 1), 90)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_transform_cloud_example():
    pose = RigidPose(rotation_about((0, 0, 1), 90), [1, 2, 3])
    out = transform_cloud(np.array([[1.0, 0, 0], [0, 0, 1]]), pose)
    np.testing.assert_allclose(out, [[1, 3, 3], [1, 2, 4]], atol=1e-12)


def test_compose_applies_right_operand_first():
    a = RigidPose(np.eye(3), [1, 0, 0])
    b = RigidPose(rotation_about((0, 0, 1), 90))
    p = np.array([[1.0, 0, 0]])
    np.testing.assert_allclose(transform_cloud(p, compose(a, b)), [[1, 1, 0]], atol=1e-12)
    np.testing.assert_allclose(transform_cloud(p, compose(b, a)), [[0, 2, 0]], atol=1e-12)


def test_rotation_angle_examples():
    assert rotation_angle_between(np.eye(3), rotation_about((1, 0, 0), 30)) == pytest.approx(30.0)
    assert rotation_angle_between(np.eye(3), rotation_about((0, 1, 0), 180)) == pytest.approx(180.0)
    assert rotation_angle_between(np.eye(3), np.eye(3)) == 0.0


def test_translation_distance_example():
    assert translation_distance(RigidPose.identity(), RigidPose(np.eye(3), [3, 4, 0])) == pytest.approx(5.0)


def test_pose_rejects_non_rotation():
    with pytest.raises(GeometryError):
        RigidPose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(GeometryError):
        RigidPose(2 * np.eye(3))


def test_as_cloud_validation():
    assert as_cloud([]).shape == (0, 3)
    with pytest.raises(GeometryError):
        as_cloud(np.zeros((4, 2)))
    with pytest.raises(GeometryError):
        as_cloud([[0.0, np.nan, 0.0]])


@given(poses(), poses(), poses())
def test_compose_is_associative(a, b, c):
    left = compose(compose(a, b), c).as_matrix()
    right = compose(a, compose(b, c)).as_matrix()
    np.testing.assert_allclose(left, right, atol=1e-9)


@given(poses())
def test_inverse_roundtrip(p):
    np.testing.assert_allclose(compose(p, p.inverse()).as_matrix(), np.eye(4), atol=1e-9)


@given(poses(), st.integers(1, 200))
def test_long_composition_stays_orthonormal(p, n):
    acc = RigidPose.identity()
    for _ in range(n):
        acc = compose(p, acc)
    R = acc.rotation
    assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


@given(poses())
def test_rotation_angle_matches_scipy(p):
    ref = np.degrees(Rotation.from_matrix(p.rotation).magnitude())
    assert rotation_angle_between(np.eye(3), p.rotation) == pytest.approx(ref, abs=1e-6)


@given(poses(), st.integers(0, 2**31 - 1))
def test_kabsch_recovers_exact_transform(p, seed):
    src = np.random.default_rng(seed).normal(size=(30, 3))
    est = kabsch_align(src, transform_cloud(src, p))
    np.testing.assert_allclose(est.as_matrix(), p.as_matrix(), atol=1e-8)


def test_kabsch_never_returns_reflection():
    src = np.random.default_rng(1).normal(size=(20, 3))
    mirrored = src * [1, 1, -1]
    est = kabsch_align(src, mirrored)
    assert np.linalg.det(est.rotation) == pytest.approx(1.0)


def test_kabsch_degenerate_inputs():
    with pytest.raises(DegenerateCorrespondences):
        kabsch_align(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 0, 0])
    with pytest.raises(DegenerateCorrespondences):
        kabsch_align(line, line)


def test_nearest_neighbor_matches_brute_force(rng):
    tgt = rng.uniform(-1, 1, (300, 3))
    q = rng.uniform(-1, 1, (100, 3))
    index = NearestNeighborIndex(tgt)
    nearest, sq = index.query(q)
    d2 = ((q[:, None, :] - tgt[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(sq, d2.min(1), atol=1e-12)
    np.testing.assert_allclose(nearest, tgt[d2.argmin(1)])
    dist, idx = index.query_within(q, 0.1)
    inside = np.sqrt(d2.min(1)) <= 0.1
    assert np.array_equal(np.isfinite(dist), inside)
    assert np.all(idx[~inside] == len(tgt))


def _cloud(seed, n=400):
    return np.random.default_rng(seed).uniform(-0.05, 0.05, (n, 3))


def test_icp_identity_on_identical_clouds():
    pts = _cloud(0)
    res = icp_register(pts, pts, RigidPose.identity(), TrackerConfig())
    np.testing.assert_allclose(res.relative_pose.as_matrix(), np.eye(4), atol=1e-12)
    assert res.final_rmse == 0.0
    assert res.converged


@given(st.floats(-10, 10), st.floats(-0.005, 0.005), st.floats(-0.005, 0.005), st.integers(0, 1000))
def test_icp_recovers_small_offset(deg, dx, dy, seed):
    pts = _cloud(seed)
    truth = RigidPose(rotation_about((0, 0, 1), deg), [dx, dy, 0.0])
    target = transform_cloud(pts, truth)
    res = icp_register(pts, target, RigidPose.identity(), TrackerConfig(max_iterations=200))
    # ICP may stall in a local minimum on a random cloud; it must never get worse
    start = np.sqrt(np.mean(np.minimum(((pts - target) ** 2).sum(1), 0.02 ** 2)))
    assert res.final_rmse <= start + 1e-12


def test_icp_recovers_known_transform():
    pts = _cloud(3, 600)
    truth = RigidPose(rotation_about((0, 0, 1), 4), [0.003, -0.002, 0.001])
    res = icp_register(pts, transform_cloud(pts, truth), RigidPose.identity(), TrackerConfig(max_iterations=200))
    assert rotation_angle_between(res.relative_pose, truth) < 0.05
    assert translation_distance(res.relative_pose, truth) < 1e-4


@given(st.integers(0, 500))
def test_icp_rmse_trace_is_non_increasing(seed):
    rng = np.random.default_rng(seed)
    src = rng.uniform(-0.05, 0.05, (200, 3))
    tgt = transform_cloud(src, RigidPose(rotation_about((1, 1, 0), 8), [0.004, 0, -0.003]))
    tgt = tgt + rng.normal(0, 0.002, tgt.shape)
    res = icp_register(src, tgt, RigidPose.identity(), TrackerConfig())
    assert all(b <= a + 1e-12 for a, b in zip(res.rmse_trace, res.rmse_trace[1:]))
    assert res.iterations_used <= TrackerConfig().max_iterations


def test_icp_raises_without_correspondences():
    src = _cloud(1)
    with pytest.raises(NoCorrespondences) as err:
        icp_register(src, src + 1.0, RigidPose.identity(), TrackerConfig())
    assert err.value.result is not None and err.value.result.inlier_count == 0


def test_icp_prior_is_respected():
    pts = _cloud(2)
    prior = RigidPose(rotation_about((0, 0, 1), 20), [0.1, 0, 0])
    res = icp_register(pts, transform_cloud(pts, prior), prior, TrackerConfig())
    np.testing.assert_allclose(res.relative_pose.as_matrix(), np.eye(4), atol=1e-12)


@given(poses(), st.integers(0, 1000))
def test_transform_preserves_distances_and_roundtrips(p, seed):
    pts = np.random.default_rng(seed).normal(size=(100, 3))
    out = transform_cloud(pts, p)
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(out[:, None] - out[None], axis=-1)
    np.testing.assert_allclose(d1, d0, atol=1e-9)
    np.testing.assert_allclose(transform_cloud(out, p.inverse()), pts, atol=1e-9)


def test_transform_does_not_modify_input():
    pts = np.ones((4, 3))
    transform_cloud(pts, RigidPose(np.eye(3), [1, 2, 3]))
    assert np.all(pts == 1)
    assert transform_cloud(np.zeros((0, 3)), RigidPose.identity()).shape == (0, 3)


@given(st.integers(0, 10_000))
def test_kabsch_beats_random_candidates(seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(25, 3))
    tgt = transform_cloud(src, RigidPose(rotation_about(rng.normal(size=3), 40), rng.normal(size=3)))
    tgt = tgt + rng.normal(0, 0.2, tgt.shape)
    best = kabsch_align(src, tgt)

    def residual(p):
        return float(((transform_cloud(src, p) - tgt) ** 2).sum())

    r_best = residual(best)
    for _ in range(100):
        cand = RigidPose(rotation_about(rng.normal(size=3), rng.uniform(0, 180)), rng.normal(size=3))
        assert r_best <= residual(cand) + 1e-9
    # small perturbations of the optimum are no better either
    for _ in range(20):
        nudge = RigidPose(rotation_about(rng.normal(size=3), 0.5), rng.normal(0, 0.01, 3))
        assert r_best <= residual(compose(nudge, best)) + 1e-9


@given(poses(), poses(), poses())
def test_rotation_angle_symmetric_and_triangle(a, b, c):
    ab = rotation_angle_between(a, b)
    assert ab == pytest.approx(rotation_angle_between(b, a), abs=1e-6)
    assert 0.0 <= ab <= 180.0
    assert rotation_angle_between(a, c) <= ab + rotation_angle_between(b, c) + 1e-6


def test_icp_recovers_five_mm_two_degrees():
    rng = np.random.default_rng(7)
    # a structured cloud: three orthogonal planes
    n = 500
    pts = np.vstack([np.c_[rng.uniform(0, 0.06, (n, 2)), np.zeros(n)],
                     np.c_[rng.uniform(0, 0.06, n), np.zeros(n), rng.uniform(0, 0.06, n)],
                     np.c_[np.zeros(n), rng.uniform(0, 0.06, (n, 2))]])
    truth = RigidPose(rotation_about((0, 0, 1), 2), [0.005, 0, 0])
    res = icp_register(pts, transform_cloud(pts, truth), RigidPose.identity(), TrackerConfig())
    assert translation_distance(res.relative_pose, truth) < 0.001
    assert rotation_angle_between(res.relative_pose, truth) < 0.5
    assert res.converged


def test_icp_is_deterministic():
    pts = _cloud(9)
    tgt = transform_cloud(pts, RigidPose(rotation_about((0, 1, 0), 3), [0.002, 0, 0]))
    a = icp_register(pts, tgt, RigidPose.identity(), TrackerConfig())
    b = icp_register(pts, tgt, RigidPose.identity(), TrackerConfig())
    assert a.rmse_trace == b.rmse_trace
    np.testing.assert_array_equal(a.relative_pose.as_matrix(), b.relative_pose.as_matrix())
