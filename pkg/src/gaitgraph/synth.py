"""Planar kinematic walker producing labelled synthetic pose sequences.

Hip, knee, shoulder and elbow angles are sinusoids of the stride frequency.
The 3-D walker (x forward, y up, z lateral) is projected onto the image
plane for a camera at ``view`` degrees (90 = side view).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .pose_io import PoseSequence
from .skeleton import OPENPOSE18, SkeletonDef

BODY_HEIGHT_PX = 200.0


@dataclass(frozen=True)
class GaitParams:
    stride_freq: float = 1.0  # Hz
    hip_amp: float = 0.35  # rad
    knee_amp: float = 0.9
    shoulder_amp: float = 0.3
    elbow_amp: float = 0.4
    knee_phase: float = 1.2  # rad, relative to the hip
    shoulder_phase: float = 0.0
    elbow_phase: float = 0.6
    body_scale: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def joint_angles(params: GaitParams, T: int, frame_rate: float = 25.0, start_phase: float = 0.0) -> dict[str, np.ndarray]:
    """Per-frame joint angles (radians) for the right and left limbs."""
    t = np.arange(T) / frame_rate
    w = 2.0 * np.pi * params.stride_freq * t + start_phase
    out = {}
    for side, off in (("r", 0.0), ("l", np.pi)):
        out[f"{side}_hip"] = params.hip_amp * np.sin(w + off)
        out[f"{side}_knee"] = 0.5 * params.knee_amp * (1.0 + np.sin(w + off + params.knee_phase))
        out[f"{side}_shoulder"] = -params.shoulder_amp * np.sin(w + off + params.shoulder_phase)
        out[f"{side}_elbow"] = 0.5 * params.elbow_amp * (1.0 + np.sin(w + off + params.elbow_phase))
    out["phase"] = w
    return out


def _walker_points(params: GaitParams, T: int, frame_rate: float, start_phase: float) -> dict[str, np.ndarray]:
    """3-D points (T, 3) keyed by joint name, in pixels."""
    H = BODY_HEIGHT_PX * params.body_scale
    thigh, shank = 0.245 * H, 0.246 * H
    upper_arm, forearm = 0.186 * H, 0.146 * H
    torso, hip_w, shoulder_w = 0.30 * H, 0.09 * H, 0.18 * H
    leg = thigh + shank

    ang = joint_angles(params, T, frame_rate, start_phase)
    t = np.arange(T) / frame_rate
    speed = 4.0 * leg * np.sin(params.hip_amp) * params.stride_freq
    bob = 0.1 * leg * np.sin(params.hip_amp) ** 2 * np.cos(2.0 * ang["phase"])
    zeros = np.zeros(T)
    pelvis = np.stack([speed * t, leg + bob, zeros], axis=1)
    neck = pelvis + np.array([0.02 * H, torso, 0.0])

    def seg(origin, angle, length):
        return origin + length * np.stack([np.sin(angle), -np.cos(angle), zeros], axis=1)

    pts: dict[str, np.ndarray] = {"neck": neck}
    for side, sign in (("r", -1.0), ("l", 1.0)):
        hip = pelvis + np.array([0.0, 0.0, sign * hip_w])
        knee = seg(hip, ang[f"{side}_hip"], thigh)
        ankle = seg(knee, ang[f"{side}_hip"] - ang[f"{side}_knee"], shank)
        shoulder = neck + np.array([0.0, 0.0, sign * shoulder_w])
        elbow = seg(shoulder, ang[f"{side}_shoulder"], upper_arm)
        wrist = seg(elbow, ang[f"{side}_shoulder"] + ang[f"{side}_elbow"], forearm)
        pts.update({f"{side}_hip": hip, f"{side}_knee": knee, f"{side}_ankle": ankle,
                    f"{side}_shoulder": shoulder, f"{side}_elbow": elbow, f"{side}_wrist": wrist})
        pts[f"{side}_eye"] = neck + np.array([0.05 * H, 0.12 * H, sign * 0.02 * H])
        pts[f"{side}_ear"] = neck + np.array([0.0, 0.11 * H, sign * 0.045 * H])
    pts["nose"] = neck + np.array([0.07 * H, 0.10 * H, 0.0])
    return pts


def synth_gait(params: GaitParams, T: int, seed, *, frame_rate: float = 25.0, view: int = 90,
               noise_sigma: float = 0.0, skeleton: SkeletonDef = OPENPOSE18,
               subject_id: str = "synthetic", condition: str = "nm") -> PoseSequence:
    """Generate one walking sequence; identical inputs give bit-identical output.

    The seed draws the starting gait phase, the image position and the
    optional pixel noise.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if params.body_scale <= 0:
        raise ValueError("body_scale must be positive")
    rng = np.random.default_rng(seed)
    start_phase = rng.uniform(0.0, 2.0 * np.pi)
    origin = np.array([rng.uniform(300.0, 500.0), rng.uniform(700.0, 800.0)])

    pts = _walker_points(params, T, frame_rate, start_phase)
    phi = np.deg2rad(view)
    names = skeleton.joint_names
    frames = np.zeros((T, skeleton.joint_count, 3))
    for j, name in enumerate(names):
        if name not in pts:
            continue
        p = pts[name]
        frames[:, j, 0] = origin[0] + p[:, 0] * np.sin(phi) + p[:, 2] * np.cos(phi)
        frames[:, j, 1] = origin[1] - p[:, 1]
        frames[:, j, 2] = 1.0
    if noise_sigma > 0:
        frames[..., :2] += rng.normal(0.0, noise_sigma, size=(T, skeleton.joint_count, 2))
    return PoseSequence(subject_id, int(view), condition, skeleton, frames)


def random_class_params(rng: np.random.Generator) -> GaitParams:
    """Draw an identity: a distinct rhythm, limb amplitudes and phase lags."""
    return GaitParams(
        stride_freq=rng.uniform(0.7, 1.5),
        hip_amp=rng.uniform(0.25, 0.45),
        knee_amp=rng.uniform(0.6, 1.2),
        shoulder_amp=rng.uniform(0.15, 0.45),
        elbow_amp=rng.uniform(0.2, 0.7),
        knee_phase=rng.uniform(0.6, 1.8),
        shoulder_phase=rng.uniform(-0.5, 0.5),
        elbow_phase=rng.uniform(0.0, 1.2),
        body_scale=rng.uniform(0.95, 1.05),
    )


def _jitter(params: GaitParams, rng: np.random.Generator, rel: float) -> GaitParams:
    d = params.to_dict()
    for key in ("stride_freq", "hip_amp", "knee_amp", "shoulder_amp", "elbow_amp"):
        d[key] *= 1.0 + rng.uniform(-rel, rel)
    # apparent size varies with camera distance, so body scale carries little identity
    d["body_scale"] *= 1.0 + rng.uniform(-0.08, 0.08)
    return GaitParams(**d)


def make_synthetic_dataset(n_classes: int, seqs_per_class: int, T: int, seed: int, *,
                           views=(90,), frame_rate: float = 25.0, noise_sigma: float = 1.0,
                           within_class_jitter: float = 0.03,
                           skeleton: SkeletonDef = OPENPOSE18) -> tuple[list[PoseSequence], dict[str, GaitParams]]:
    """Sequences for ``n_classes`` identities, cycling through ``views``.

    Returns the sequences (class-major order) and the per-class parameters.
    """
    root = np.random.SeedSequence(seed)
    class_seeds = root.spawn(n_classes)
    sequences: list[PoseSequence] = []
    classes: dict[str, GaitParams] = {}
    for c, cseed in enumerate(class_seeds):
        crng = np.random.default_rng(cseed)
        params = random_class_params(crng)
        subject = f"S{c:03d}"
        classes[subject] = params
        for k in range(seqs_per_class):
            view = int(views[k % len(views)])
            seq_params = _jitter(params, crng, within_class_jitter)
            sequences.append(synth_gait(
                seq_params, T, [seed, c, k], frame_rate=frame_rate, view=view,
                noise_sigma=noise_sigma, skeleton=skeleton,
                subject_id=subject, condition=f"nm-{k // len(views):02d}",
            ))
    return sequences, classes
