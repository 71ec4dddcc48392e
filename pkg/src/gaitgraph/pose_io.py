"""Pose-sequence data model and on-disk formats.

Supported inputs: OpenPose per-frame JSON directories, a long-format CSV
(``t,joint,x,y,conf``) and a JSON dataset index listing sequences with their
subject, view and condition labels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .skeleton import SkeletonDef, get_skeleton


class PoseDataError(ValueError):
    """Malformed or inconsistent pose data on disk."""


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """``frames`` has shape (T, N, 3) holding (x, y, confidence) per joint.

    Missing joints are stored as (0, 0, 0).
    """

    subject_id: str
    view: int
    condition: str
    skeleton: SkeletonDef
    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise PoseDataError(f"frames must have shape (T, N, 3), got {frames.shape}")
        if frames.shape[0] < 1:
            raise PoseDataError("a pose sequence needs at least one frame")
        if frames.shape[1] != self.skeleton.joint_count:
            raise PoseDataError(
                f"frames have {frames.shape[1]} joints but skeleton {self.skeleton.name} "
                f"has {self.skeleton.joint_count}"
            )
        conf = frames[..., 2]
        if np.any(conf < 0) or np.any(conf > 1) or not np.all(np.isfinite(frames)):
            raise PoseDataError("confidence must lie in [0, 1] and coordinates must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def N(self) -> int:
        return self.frames.shape[1]

    @property
    def coords(self) -> np.ndarray:
        return self.frames[..., :2]

    def with_frames(self, frames: np.ndarray) -> PoseSequence:
        return replace(self, frames=frames)


def parse_openpose_json(directory: str | Path, skeleton: SkeletonDef, *, subject_id: str = "",
                        view: int = 0, condition: str = "") -> PoseSequence:
    """Read one sequence from a directory of OpenPose per-frame JSON files.

    Files are taken in lexicographic order. The first detected person in a
    frame is used; frames without people become all-zero joints.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix == ".json")
    if not files:
        raise PoseDataError(f"{directory}: no per-frame JSON files")
    n = skeleton.joint_count
    frames = np.zeros((len(files), n, 3))
    for t, path in enumerate(files):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PoseDataError(f"{path.name}: malformed JSON ({exc})") from exc
        people = doc.get("people", []) if isinstance(doc, dict) else None
        if people is None:
            raise PoseDataError(f"{path.name}: expected an object with a 'people' array")
        if not people:
            continue
        keypoints = people[0].get("pose_keypoints_2d", [])
        if len(keypoints) != 3 * n:
            raise PoseDataError(f"{path.name}: expected {3 * n} keypoint values, got {len(keypoints)}")
        frames[t] = np.asarray(keypoints, dtype=np.float64).reshape(n, 3)
    return PoseSequence(subject_id, int(view), condition, skeleton, frames)


def read_csv_sequence(path: str | Path, skeleton: SkeletonDef, *, subject_id: str = "",
                      view: int = 0, condition: str = "") -> PoseSequence:
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "joint", "x", "y", "conf"]:
            raise PoseDataError(f"{path}: line 1: expected header t,joint,x,y,conf")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, j = int(row[0]), int(row[1])
                rows.append((t, j, float(row[2]), float(row[3]), float(row[4])))
            except (ValueError, IndexError) as exc:
                raise PoseDataError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise PoseDataError(f"{path}: no pose rows")
    n = skeleton.joint_count
    t_count = max(r[0] for r in rows) + 1
    frames = np.zeros((t_count, n, 3))
    for t, j, x, y, c in rows:
        if not (0 <= j < n) or t < 0:
            raise PoseDataError(f"{path}: joint {j} at frame {t} out of range for {n} joints")
        frames[t, j] = (x, y, c)
    return PoseSequence(subject_id, int(view), condition, skeleton, frames)


def write_csv_sequence(seq: PoseSequence, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "joint", "x", "y", "conf"])
        for t in range(seq.T):
            for j in range(seq.N):
                x, y, c = seq.frames[t, j]
                writer.writerow([t, j, repr(float(x)), repr(float(y)), repr(float(c))])


@dataclass(frozen=True)
class IndexEntry:
    subject_id: str
    view: int
    condition: str
    path: str


def read_index(path: str | Path) -> list[IndexEntry]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return [IndexEntry(str(e["subject_id"]), int(e["view"]), str(e.get("condition", "")), str(e["path"]))
                for e in doc]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise PoseDataError(f"{path}: cannot read dataset index ({exc})") from exc


def write_index(entries, path: str | Path) -> None:
    doc = [{"subject_id": e.subject_id, "view": e.view, "condition": e.condition, "path": e.path}
           for e in entries]
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_sequence(entry: IndexEntry, skeleton: SkeletonDef, root: str | Path = ".") -> PoseSequence:
    """Load the sequence an index entry points to (CSV file or OpenPose directory)."""
    p = Path(entry.path)
    if not p.is_absolute():
        p = Path(root) / p
    labels = dict(subject_id=entry.subject_id, view=entry.view, condition=entry.condition)
    if p.is_dir():
        return parse_openpose_json(p, skeleton, **labels)
    if not p.exists():
        raise PoseDataError(f"{p}: sequence file not found")
    return read_csv_sequence(p, skeleton, **labels)


def load_dataset(index_path: str | Path, skeleton: SkeletonDef | str = "openpose18") -> list[PoseSequence]:
    """Load every sequence of an index; relative paths resolve against the index directory."""
    if not isinstance(skeleton, SkeletonDef):
        skeleton = get_skeleton(skeleton)
    root = Path(index_path).parent
    return [load_sequence(e, skeleton, root) for e in read_index(index_path)]


def pad_or_crop(seq: PoseSequence, t_fixed: int) -> PoseSequence:
    """Central crop when too long, cyclic repetition when too short."""
    if t_fixed < 1:
        raise ValueError("t_fixed must be positive")
    T = seq.T
    if T == t_fixed:
        return seq
    if T > t_fixed:
        start = (T - t_fixed) // 2
        return seq.with_frames(seq.frames[start:start + t_fixed].copy())
    idx = np.arange(t_fixed) % T
    return seq.with_frames(seq.frames[idx])
