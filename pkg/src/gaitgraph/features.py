"""Joint, acceleration and bone local features and batch assembly.

Per joint and frame the default layout emits 20 channels:

==========  ========  ===================================================
stream      channels  contents
==========  ========  ===================================================
joint       0-1       distance and angle to the frame's mean joint
accel       2-13      a(t-Ts), a(t), a(t+Ts) as (x, y) for Ts = 1, 2
bone        14-19     l, theta, dl(1), dtheta(1), dl(2), dtheta(2)
==========  ========  ===================================================

Inter-frame terms that would reference a frame outside the sequence are
zero.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pose_io import PoseSequence
from .skeleton import SkeletonDef

STREAM_WIDTHS = {"joint": 2, "acceleration": 12, "bone": 6}
SAMPLING_PERIODS = (1, 2)


class ShapeError(ValueError):
    """Sequences in a batch disagree on length or skeleton."""


@dataclass(frozen=True)
class FeatureLayout:
    streams: tuple[str, ...] = ("joint", "acceleration", "bone")
    offsets: dict[str, tuple[int, int]] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        offsets, pos = {}, 0
        for name in self.streams:
            if name not in STREAM_WIDTHS:
                raise ValueError(f"unknown feature stream {name!r}")
            if name in offsets:
                raise ValueError(f"stream {name!r} listed twice")
            offsets[name] = (pos, pos + STREAM_WIDTHS[name])
            pos += STREAM_WIDTHS[name]
        object.__setattr__(self, "offsets", offsets)

    @property
    def channels(self) -> int:
        return sum(STREAM_WIDTHS[s] for s in self.streams)

    def slice(self, stream: str) -> slice:
        lo, hi = self.offsets[stream]
        return slice(lo, hi)

    def to_json(self) -> dict:
        return {"channels": self.channels,
                "streams": [{"name": s, "offset": self.offsets[s][0], "width": STREAM_WIDTHS[s]}
                            for s in self.streams]}


DEFAULT_LAYOUT = FeatureLayout()


@dataclass
class FeatureTensor:
    data: np.ndarray  # (B, C, T, N)
    layout: FeatureLayout
    labels: list[str]
    copy_index: list[int]
    views: list[int] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def angle(dy, dx):
    """Full-quadrant angle in (-pi, pi] with angle(0, 0) = 0."""
    dy = np.asarray(dy, dtype=np.float64)
    dx = np.asarray(dx, dtype=np.float64)
    out = np.arctan2(dy, dx)
    out = np.where(out == -np.pi, np.pi, out)
    out = np.where((dx == 0) & (dy == 0), 0.0, out)
    return out if out.ndim else float(out)


def wrap_angle(a):
    """Map angles onto (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)


def frame_center(frame: np.ndarray) -> tuple[float, float]:
    frame = np.asarray(frame, dtype=np.float64)
    c = frame[:, :2].mean(axis=0)
    return float(c[0]), float(c[1])


def joint_features(seq: PoseSequence) -> np.ndarray:
    """(T, N, 2): distance and angle from each joint to its frame center."""
    p = seq.coords
    offset = p - p.mean(axis=1, keepdims=True)
    return np.stack([np.hypot(offset[..., 0], offset[..., 1]),
                     angle(offset[..., 1], offset[..., 0])], axis=-1)


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    """``out[t] = x[t + k]`` along axis 0 with zeros beyond the ends."""
    out = np.zeros_like(x)
    T = x.shape[0]
    if k >= 0:
        if k < T:
            out[:T - k] = x[k:]
    elif -k < T:
        out[-k:] = x[:T + k]
    return out


def _acceleration(p: np.ndarray, ts: int) -> np.ndarray:
    """(T, N, 2) second differences at period ``ts``; zero where undefined."""
    T = p.shape[0]
    a = np.zeros_like(p)
    if T > 2 * ts:
        mid = p[ts:T - ts]
        a[ts:T - ts] = (p[2 * ts:] - mid) - (mid - p[:T - 2 * ts])
    return a


def acceleration_features(seq: PoseSequence) -> np.ndarray:
    """(T, N, 12): accelerations around each frame at sampling periods 1 and 2."""
    p = seq.coords
    blocks = []
    for ts in SAMPLING_PERIODS:
        a = _acceleration(p, ts)
        blocks += [_shift(a, -ts), a, _shift(a, ts)]
    return np.concatenate(blocks, axis=-1)


def bone_neighbors(seq: PoseSequence, skeleton: SkeletonDef | None = None) -> np.ndarray:
    """(T, N) index of the closest connected joint per frame; -1 for isolated joints."""
    skeleton = skeleton or seq.skeleton
    p = seq.coords
    T, N = p.shape[:2]
    width = max((len(c) for c in skeleton.neighbor_candidates), default=0)
    if width == 0:
        return np.full((T, N), -1)
    cand = np.full((N, width), -1)
    for i, c in enumerate(skeleton.neighbor_candidates):
        cand[i, :len(c)] = c
    diff = p[:, :, None, :] - p[:, cand.clip(0), :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    dist = np.where(cand[None] >= 0, dist, np.inf)
    choice = np.argmin(dist, axis=2)
    nb = cand[np.arange(N)[None, :], choice]
    return nb


def bone_features(seq: PoseSequence, skeleton: SkeletonDef | None = None) -> np.ndarray:
    """(T, N, 6): bone length and angle plus their changes at periods 1 and 2."""
    skeleton = skeleton or seq.skeleton
    if skeleton.joint_count != seq.N:
        raise ShapeError(f"skeleton has {skeleton.joint_count} joints, sequence has {seq.N}")
    p = seq.coords
    nb = bone_neighbors(seq, skeleton)
    t_idx = np.arange(seq.T)[:, None]
    bone = np.where((nb >= 0)[..., None], p - p[t_idx, nb.clip(0)], 0.0)
    length = np.hypot(bone[..., 0], bone[..., 1])
    theta = angle(bone[..., 1], bone[..., 0])
    chans = [length, theta]
    for ts in SAMPLING_PERIODS:
        dl = np.zeros_like(length)
        dth = np.zeros_like(theta)
        dl[ts:] = length[ts:] - length[:-ts]
        dth[ts:] = wrap_angle(theta[ts:] - theta[:-ts])
        chans += [dl, dth]
    return np.stack(chans, axis=-1)


_STREAM_FUNCS = {
    "joint": joint_features,
    "acceleration": acceleration_features,
    "bone": bone_features,
}


def sequence_features(seq: PoseSequence, layout: FeatureLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """(C, T, N) feature block for one sequence."""
    parts = [_STREAM_FUNCS[name](seq) for name in layout.streams]
    return np.ascontiguousarray(np.concatenate(parts, axis=-1).transpose(2, 0, 1))


def _check_compatible(seqs) -> None:
    first = seqs[0]
    for s in seqs[1:]:
        if s.T != first.T:
            raise ShapeError(f"sequence lengths differ: {first.T} vs {s.T}")
        if s.skeleton != first.skeleton:
            raise ShapeError(f"skeletons differ: {first.skeleton.name} vs {s.skeleton.name}")


def assemble_batch(pairs, layout: FeatureLayout = DEFAULT_LAYOUT) -> FeatureTensor:
    """Stack two-copy pairs as adjacent batch entries sharing one label."""
    pairs = list(pairs)
    if not pairs:
        raise ShapeError("empty batch")
    flat = [s for pair in pairs for s in pair]
    _check_compatible(flat)
    data = np.stack([sequence_features(s, layout) for s in flat])
    return FeatureTensor(
        data=data, layout=layout,
        labels=[s.subject_id for s in flat],
        copy_index=[1, 2] * len(pairs),
        views=[s.view for s in flat],
    )


def assemble_single(seqs, layout: FeatureLayout = DEFAULT_LAYOUT) -> FeatureTensor:
    """One batch entry per sequence, as used for gallery and probe embedding."""
    seqs = list(seqs)
    if not seqs:
        raise ShapeError("empty batch")
    _check_compatible(seqs)
    data = np.stack([sequence_features(s, layout) for s in seqs])
    return FeatureTensor(data=data, layout=layout, labels=[s.subject_id for s in seqs],
                         copy_index=[1] * len(seqs), views=[s.view for s in seqs])


FEATURE_MAGIC = b"GGF1"


def write_feature_dump(tensor: FeatureTensor, path: str | Path) -> Path:
    """Write ``GGF1`` + B,C,T,N (uint32 LE) + row-major float32 LE data and a JSON sidecar.

    Returns the sidecar path (``<path>.json``).
    """
    path = Path(path)
    data = np.ascontiguousarray(tensor.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<4I", *data.shape))
        fh.write(data.tobytes())
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps({
        "layout": tensor.layout.to_json(),
        "shape": list(data.shape),
        "labels": tensor.labels,
        "copy_index": tensor.copy_index,
        "views": tensor.views,
    }, indent=1), encoding="utf-8")
    return sidecar


def read_feature_dump(path: str | Path) -> FeatureTensor:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a GGF1 feature file")
    shape = struct.unpack("<4I", raw[4:20])
    data = np.frombuffer(raw[20:], dtype="<f4").reshape(shape).astype(np.float64)
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
    streams = tuple(s["name"] for s in meta.get("layout", {}).get("streams", [])) or DEFAULT_LAYOUT.streams
    B = shape[0]
    return FeatureTensor(data=data, layout=FeatureLayout(streams),
                         labels=meta.get("labels", [""] * B),
                         copy_index=meta.get("copy_index", [1] * B),
                         views=meta.get("views", []))
