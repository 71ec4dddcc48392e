import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_sequence
from gaitgraph.augment import AugmentPolicy, augment, mirror, two_views


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentPolicy(temporal_crop_len=4)
    with pytest.raises(ValueError):
        AugmentPolicy(mirror_prob=1.5)
    with pytest.raises(ValueError):
        AugmentPolicy(coord_jitter_sigma=-1)


def test_same_seed_same_output():
    seq = random_sequence(0, T=80)
    policy = AugmentPolicy(temporal_crop_len=32, coord_jitter_sigma=1.0, mirror_prob=0.5, resample_periods=(1, 2))
    a = augment(seq, policy, [3, 4])
    b = augment(seq, policy, [3, 4])
    c = augment(seq, policy, [3, 5])
    np.testing.assert_array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, c.frames)


def test_crop_is_contiguous_window():
    seq = random_sequence(1, T=40)
    out = augment(seq, AugmentPolicy(temporal_crop_len=16), 9)
    starts = [s for s in range(25) if np.array_equal(seq.frames[s:s + 16], out.frames)]
    assert len(starts) == 1


def test_resample_stride_two():
    seq = random_sequence(2, T=40)
    for seed in range(10):
        out = augment(seq, AugmentPolicy(temporal_crop_len=16, resample_periods=(2,)), seed)
        sub = seq.frames[::2]
        assert any(np.array_equal(sub[s:s + 16], out.frames) for s in range(len(sub) - 15))


def test_short_sequence_rejected():
    with pytest.raises(ValueError):
        augment(random_sequence(0, T=10), AugmentPolicy(temporal_crop_len=16), 0)


def test_jitter_statistics_and_missing_joints():
    seq = random_sequence(3, T=64)
    f = seq.frames.copy()
    f[:, 5] = 0.0
    seq = seq.with_frames(f)
    out = augment(seq, AugmentPolicy(temporal_crop_len=64, coord_jitter_sigma=2.0), 0)
    d = out.frames[..., :2] - seq.frames[..., :2]
    assert np.all(d[:, 5] == 0)
    present = np.delete(d, 5, axis=1)
    assert abs(present.std() - 2.0) < 0.1
    np.testing.assert_array_equal(out.frames[..., 2], seq.frames[..., 2])


def test_two_views_labels_and_independence():
    seq = random_sequence(4, T=64, subject="X", view=30)
    a, b = two_views(seq, AugmentPolicy(temporal_crop_len=32, coord_jitter_sigma=1.0), 11)
    assert a.subject_id == b.subject_id == "X" and a.view == b.view == 30
    assert not np.array_equal(a.frames, b.frames)


def test_mirror_swaps_sides_and_is_involution_on_integer_grid():
    rng = np.random.default_rng(0)
    seq = random_sequence(5, T=6)
    f = seq.frames.copy()
    f[..., :2] = rng.integers(-100, 100, f[..., :2].shape)
    f[..., 2] = 1.0
    f[0, 0, 0] -= f[..., 0].sum() % f[..., 0].size  # integer mean keeps every reflection exact
    seq = seq.with_frames(f)
    m = mirror(seq)
    # right shoulder (2) becomes the reflected left shoulder (5)
    mean_x = f[..., 0].mean()
    assert m.frames[0, 2, 0] == 2 * mean_x - f[0, 5, 0]
    assert m.frames[0, 2, 1] == f[0, 5, 1]
    np.testing.assert_array_equal(mirror(m).frames, seq.frames)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_mirror_twice_identity_property(seed):
    seq = random_sequence(seed, T=5)
    np.testing.assert_allclose(mirror(mirror(seq)).frames, seq.frames, atol=1e-12)
