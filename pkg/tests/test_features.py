import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_sequence
from gaitgraph.features import (DEFAULT_LAYOUT, FeatureLayout, ShapeError, acceleration_features, angle,
                                assemble_batch, assemble_single, bone_features, bone_neighbors, frame_center,
                                joint_features, read_feature_dump, sequence_features, wrap_angle,
                                write_feature_dump)
from gaitgraph.pose_io import PoseSequence
from gaitgraph.skeleton import COCO17, OPENPOSE18, SkeletonDef
from oracles import ref_features

PATH2 = SkeletonDef("path2", 2, ((0, 1),))


def seq_from_xy(xy, skeleton=PATH2):
    xy = np.asarray(xy, dtype=float)
    frames = np.concatenate([xy, np.ones(xy.shape[:2] + (1,))], axis=-1)
    return PoseSequence("s", 0, "", skeleton, frames)


def test_frame_center_examples():
    assert frame_center(np.array([[1.0, 2.0]])) == (1.0, 2.0)
    assert frame_center(np.array([[0.0, 0.0], [2.0, 0.0]])) == (1.0, 0.0)
    assert frame_center(np.array([[0.0, 0.0], [6.0, 8.0]])) == (3.0, 4.0)


def test_angle_examples():
    assert angle(0.0, 1.0) == 0.0
    assert angle(2.0, 0.0) == pytest.approx(math.pi / 2)
    assert angle(0.0, 0.0) == 0.0
    assert angle(-0.0, -1.0) == pytest.approx(math.pi)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_angle_range(dy, dx):
    a = float(angle(dy, dx))
    assert -math.pi < a <= math.pi


@given(st.floats(-50, 50))
def test_wrap_angle_range_and_congruence(a):
    w = float(wrap_angle(a))
    assert -math.pi < w <= math.pi
    k = (a - w) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9


def test_joint_features_examples():
    f = joint_features(seq_from_xy([[[0, 0], [2, 0]]]))
    np.testing.assert_allclose(f[0, :, 0], [1, 1])
    np.testing.assert_allclose(f[0, :, 1], [math.pi, 0])
    f = joint_features(seq_from_xy([[[5, 5], [5, 5]]]))
    assert np.all(f == 0)
    f = joint_features(seq_from_xy([[[0, 0], [6, 8]]]))
    assert f[0, 0, 0] == pytest.approx(5.0)
    assert f[0, 0, 1] == pytest.approx(angle(-4.0, -3.0))
    assert f[0, 0, 1] == pytest.approx(-2.2143, abs=1e-4)


def test_acceleration_stationary_and_uniform():
    assert np.all(acceleration_features(seq_from_xy(np.full((10, 2, 2), 3.0))) == 0)
    t = np.arange(10.0)
    xy = np.zeros((10, 2, 2))
    xy[..., 0] = t[:, None]
    f = acceleration_features(seq_from_xy(xy))
    assert np.all(f == 0)


def test_acceleration_quadratic():
    t = np.arange(12.0)
    xy = np.zeros((12, 2, 2))
    xy[..., 0] = (t ** 2)[:, None]
    f = acceleration_features(seq_from_xy(xy))
    # channel pair 2-3 of the Ts=1 block is a(t, 1); Ts=2 second difference of t^2 is 8
    np.testing.assert_allclose(f[5, :, 2:4], [[2, 0], [2, 0]])
    np.testing.assert_allclose(f[5, :, 8:10], [[8, 0], [8, 0]])
    np.testing.assert_allclose(f[5, :, 0:2], [[2, 0], [2, 0]])


def test_acceleration_boundary_zero_fill():
    s = random_sequence(3, T=9)
    f = acceleration_features(s)
    for ts in (1, 2):
        base = 0 if ts == 1 else 6
        centre = f[..., base + 2:base + 4]
        assert np.all(centre[:ts] == 0) and np.all(centre[-ts:] == 0)
        assert np.all(f[:2 * ts, :, base:base + 2] == 0)
        assert np.all(f[-2 * ts:, :, base + 4:base + 6] == 0)
        assert np.any(centre[ts:-ts] != 0)


def test_bone_static_example():
    f = bone_features(seq_from_xy([[[0, 0], [0, 2]]] * 4))
    assert f[0, 0, 0] == 2.0
    assert f[0, 0, 1] == pytest.approx(-math.pi / 2)
    assert np.all(f[:, :, 2:] == 0)


def test_bone_rigid_rotation_and_wrap():
    for start in (0.3, math.pi - 0.05):
        th = start + 0.1 * np.arange(6)
        xy = np.zeros((6, 2, 2))
        # joint 1 at the origin, joint 0 on the unit circle: bone of joint 0 points at angle th
        xy[:, 0, 0], xy[:, 0, 1] = np.cos(th), np.sin(th)
        f = bone_features(seq_from_xy(xy))
        np.testing.assert_allclose(f[1:, 0, 3], 0.1, atol=1e-12)
        np.testing.assert_allclose(f[2:, 0, 5], 0.2, atol=1e-12)
        np.testing.assert_allclose(f[1:, 0, 2], 0.0, atol=1e-12)
        assert f[0, 0, 3] == 0.0


def test_bone_neighbor_tie_goes_to_lowest_index():
    star = SkeletonDef("star", 3, ((0, 1), (0, 2)))
    s = seq_from_xy([[[0, 0], [1, 0], [-1, 0]]], skeleton=star)
    nb = bone_neighbors(s)
    assert nb[0, 0] == 1


def test_bone_neighbor_picks_closest():
    star = SkeletonDef("star", 3, ((0, 1), (0, 2)))
    s = seq_from_xy([[[0, 0], [3, 0], [0, 1]], [[0, 0], [1, 0], [0, 3]]], skeleton=star)
    assert bone_neighbors(s)[:, 0].tolist() == [2, 1]


def test_layout_contract():
    assert DEFAULT_LAYOUT.channels == 20
    assert DEFAULT_LAYOUT.slice("joint") == slice(0, 2)
    assert DEFAULT_LAYOUT.slice("acceleration") == slice(2, 14)
    assert DEFAULT_LAYOUT.slice("bone") == slice(14, 20)
    assert FeatureLayout(("bone",)).channels == 6
    with pytest.raises(ValueError):
        FeatureLayout(("joint", "joint"))


def test_assemble_batch_shape_and_labels():
    s1 = random_sequence(1, T=64, subject="A")
    s2 = random_sequence(2, T=64, subject="A")
    ft = assemble_batch([(s1, s2)])
    assert ft.data.shape == (2, 20, 64, 18)
    assert ft.labels == ["A", "A"] and ft.copy_index == [1, 2]
    np.testing.assert_array_equal(ft.data[0, 0], joint_features(s1)[..., 0])
    np.testing.assert_array_equal(ft.data[1, 0], joint_features(s2)[..., 0])
    assert np.all(np.isfinite(ft.data))


def test_assemble_rejects_mismatch():
    with pytest.raises(ShapeError):
        assemble_batch([(random_sequence(1, T=10), random_sequence(2, T=11))])
    with pytest.raises(ShapeError):
        assemble_single([random_sequence(1, T=10), random_sequence(2, T=10, skeleton=COCO17)])
    with pytest.raises(ShapeError):
        assemble_single([])


@pytest.mark.parametrize("seed", range(5))
def test_matches_scalar_oracle(seed):
    s = random_sequence(seed, T=12)
    ref = np.array(ref_features(s.coords.tolist(), OPENPOSE18.edges))
    got = sequence_features(s)
    assert np.max(np.abs(got - ref)) <= 1e-12


def test_missing_joints_participate_unmodified():
    s = random_sequence(4, T=6)
    f = s.frames.copy()
    f[:, 3] = 0.0
    s0 = s.with_frames(f)
    ref = np.array(ref_features(s0.coords.tolist(), OPENPOSE18.edges))
    np.testing.assert_allclose(sequence_features(s0), ref, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-500, 500), st.floats(-500, 500))
def test_translation_invariance_property(seed, dx, dy):
    s = random_sequence(seed, T=8)
    f = s.frames.copy()
    f[..., 0] += dx
    f[..., 1] += dy
    np.testing.assert_allclose(sequence_features(s.with_frames(f)), sequence_features(s), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 20))
def test_scale_equivariance_property(seed, scale):
    s = random_sequence(seed, T=8)
    f = s.frames.copy()
    f[..., :2] *= scale
    a, b = sequence_features(s), sequence_features(s.with_frames(f))
    metric = [0] + list(range(2, 14)) + [14, 16, 18]
    angular = [1, 15, 17, 19]
    np.testing.assert_allclose(b[metric], scale * a[metric], rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(b[angular], a[angular], atol=1e-9)


def test_feature_dump_roundtrip(tmp_path):
    ft = assemble_batch([(random_sequence(1, T=8), random_sequence(2, T=8))])
    path = tmp_path / "f.ggf"
    sidecar = write_feature_dump(ft, path)
    raw = path.read_bytes()
    assert raw[:4] == b"GGF1"
    assert struct.unpack("<4I", raw[4:20]) == (2, 20, 8, 18)
    assert len(raw) == 20 + 4 * ft.data.size
    back = read_feature_dump(path)
    np.testing.assert_array_equal(back.data, ft.data.astype(np.float32))
    assert back.labels == ft.labels and back.copy_index == [1, 2]
    assert sidecar.exists()
