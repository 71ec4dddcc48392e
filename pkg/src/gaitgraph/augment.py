"""Two-copy augmentation of pose sequences for siamese training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pose_io import PoseSequence


@dataclass(frozen=True)
class AugmentPolicy:
    temporal_crop_len: int = 64
    coord_jitter_sigma: float = 0.0
    mirror_prob: float = 0.0
    resample_periods: tuple[int, ...] = (1,)

    def __post_init__(self) -> None:
        if self.temporal_crop_len < 5:
            raise ValueError("temporal_crop_len must be at least 5")
        if self.coord_jitter_sigma < 0:
            raise ValueError("coord_jitter_sigma must be non-negative")
        if not 0.0 <= self.mirror_prob <= 1.0:
            raise ValueError("mirror_prob must lie in [0, 1]")
        periods = tuple(sorted({int(p) for p in self.resample_periods})) or (1,)
        if periods[0] < 1:
            raise ValueError("resample periods must be positive integers")
        object.__setattr__(self, "resample_periods", periods)


def mirror(seq: PoseSequence) -> PoseSequence:
    """Reflect x about the mean x of the present joints and swap left/right roles."""
    frames = seq.frames.copy()
    present = frames[..., 2] > 0
    if not present.any():
        return seq
    mean_x = frames[..., 0][present].mean()
    frames[..., 0] = np.where(present, 2.0 * mean_x - frames[..., 0], frames[..., 0])
    frames = frames[:, seq.skeleton.mirror_permutation()]
    return seq.with_frames(frames)


def augment(seq: PoseSequence, policy: AugmentPolicy, seed) -> PoseSequence:
    """Resample, crop, maybe mirror, then jitter; deterministic for a given seed.

    The resampling stride is drawn among ``policy.resample_periods`` that still
    leave at least ``temporal_crop_len`` frames.
    """
    crop = policy.temporal_crop_len
    if seq.T < crop:
        raise ValueError(f"sequence has {seq.T} frames, shorter than crop length {crop}")
    rng = np.random.default_rng(seed)
    frames = seq.frames

    strides = [p for p in policy.resample_periods if len(range(0, seq.T, p)) >= crop] or [1]
    stride = strides[int(rng.integers(len(strides)))] if len(strides) > 1 else strides[0]
    if stride != 1:
        frames = frames[::stride]

    start = int(rng.integers(frames.shape[0] - crop + 1))
    out = seq.with_frames(frames[start:start + crop].copy())

    if policy.mirror_prob > 0 and rng.random() < policy.mirror_prob:
        out = mirror(out)

    if policy.coord_jitter_sigma > 0:
        jittered = out.frames.copy()
        noise = rng.normal(0.0, policy.coord_jitter_sigma, size=jittered[..., :2].shape)
        present = jittered[..., 2:3] > 0
        jittered[..., :2] += np.where(present, noise, 0.0)
        out = out.with_frames(jittered)
    return out


def two_views(seq: PoseSequence, policy: AugmentPolicy, seed) -> tuple[PoseSequence, PoseSequence]:
    """Two independently augmented copies carrying the original labels."""
    base = np.atleast_1d(np.asarray(seed, dtype=np.uint64)).tolist()
    return augment(seq, policy, base + [1]), augment(seq, policy, base + [2])
