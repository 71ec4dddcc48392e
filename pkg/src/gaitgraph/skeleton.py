"""Skeleton topologies and the normalized adjacency used by graph convolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SkeletonError(ValueError):
    """Raised when a skeleton definition violates its invariants."""


@dataclass(frozen=True)
class SkeletonDef:
    """Joint set, undirected bone edges and left/right mirror pairs.

    ``neighbor_candidates[i]`` lists the joints connected to ``i`` in
    ascending index order; bone features pick the closest one per frame.
    """

    name: str
    joint_count: int
    edges: tuple[tuple[int, int], ...]
    mirror_pairs: tuple[tuple[int, int], ...] = ()
    joint_names: tuple[str, ...] = ()
    neighbor_candidates: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        n = int(self.joint_count)
        if n < 1:
            raise SkeletonError(f"{self.name}: joint_count must be positive, got {n}")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        seen: set[frozenset[int]] = set()
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise SkeletonError(f"{self.name}: edge ({i}, {j}) has an endpoint outside [0, {n})")
            if i == j:
                raise SkeletonError(f"{self.name}: edge ({i}, {j}) is a self-loop")
            key = frozenset((i, j))
            if key in seen:
                raise SkeletonError(f"{self.name}: edge ({i}, {j}) is duplicated")
            seen.add(key)
        mirrors = tuple((int(a), int(b)) for a, b in self.mirror_pairs)
        used: set[int] = set()
        for a, b in mirrors:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise SkeletonError(f"{self.name}: invalid mirror pair ({a}, {b})")
            if a in used or b in used:
                raise SkeletonError(f"{self.name}: mirror pair ({a}, {b}) reuses a joint")
            used.update((a, b))
        if self.joint_names and len(self.joint_names) != n:
            raise SkeletonError(f"{self.name}: {len(self.joint_names)} joint names for {n} joints")

        neighbors: list[list[int]] = [[] for _ in range(n)]
        for i, j in edges:
            neighbors[i].append(j)
            neighbors[j].append(i)
        object.__setattr__(self, "joint_count", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "mirror_pairs", mirrors)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "neighbor_candidates", tuple(tuple(sorted(nb)) for nb in neighbors))
        if not _is_connected(self.neighbor_candidates):
            raise SkeletonError(f"{self.name}: edge graph is not connected")

    @property
    def N(self) -> int:
        return self.joint_count

    def mirror_permutation(self) -> np.ndarray:
        """Index array mapping each joint to its mirrored counterpart."""
        perm = np.arange(self.joint_count)
        for a, b in self.mirror_pairs:
            perm[a], perm[b] = b, a
        return perm

    def permuted(self, perm) -> SkeletonDef:
        """Relabel joints so that old joint ``perm[k]`` becomes new joint ``k``."""
        perm = np.asarray(perm)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        names = tuple(self.joint_names[p] for p in perm) if self.joint_names else ()
        return SkeletonDef(
            name=f"{self.name}-permuted",
            joint_count=self.joint_count,
            edges=tuple((int(inverse[i]), int(inverse[j])) for i, j in self.edges),
            mirror_pairs=tuple((int(inverse[a]), int(inverse[b])) for a, b in self.mirror_pairs),
            joint_names=names,
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "joints": list(self.joint_names) or [str(i) for i in range(self.joint_count)],
            "edges": [list(e) for e in self.edges],
            "mirror_pairs": [list(p) for p in self.mirror_pairs],
        }

    @classmethod
    def from_json(cls, doc: dict) -> SkeletonDef:
        try:
            joints = [str(j) for j in doc["joints"]]
            return cls(
                name=str(doc.get("name", "custom")),
                joint_count=len(joints),
                edges=tuple(tuple(e) for e in doc["edges"]),
                mirror_pairs=tuple(tuple(p) for p in doc.get("mirror_pairs", [])),
                joint_names=tuple(joints),
            )
        except (KeyError, TypeError) as exc:
            raise SkeletonError(f"malformed skeleton document: {exc}") from exc


def _is_connected(neighbors) -> bool:
    n = len(neighbors)
    seen = {0}
    stack = [0]
    while stack:
        for j in neighbors[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def load_skeleton(path: str | Path) -> SkeletonDef:
    with open(path, encoding="utf-8") as fh:
        return SkeletonDef.from_json(json.load(fh))


def build_adjacency(skeleton: SkeletonDef) -> np.ndarray:
    """Binary symmetric adjacency with a zero diagonal."""
    n = skeleton.joint_count
    a = np.zeros((n, n), dtype=np.float64)
    for i, j in skeleton.edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise SkeletonError(f"invalid edge ({i}, {j}) for {n} joints")
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """Return D^-1/2 (A + I) D^-1/2 where D is the degree matrix of A + I.

    Each entry is formed as ``d_i * A~_ij * d_j`` so the result is symmetric
    bit for bit whenever ``a`` is.
    """
    a = np.asarray(a, dtype=np.float64)
    a_tilde = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return (d[:, None] * a_tilde) * d[None, :]


def normalized_adjacency(skeleton: SkeletonDef) -> np.ndarray:
    return normalize_adjacency(build_adjacency(skeleton))


_OPENPOSE18_NAMES = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
)

OPENPOSE18 = SkeletonDef(
    name="openpose18",
    joint_count=18,
    edges=(
        (1, 2), (2, 3), (3, 4), (1, 5), (5, 6), (6, 7),
        (1, 8), (8, 9), (9, 10), (1, 11), (11, 12), (12, 13),
        (1, 0), (0, 14), (14, 16), (0, 15), (15, 17),
    ),
    mirror_pairs=((2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13), (14, 15), (16, 17)),
    joint_names=_OPENPOSE18_NAMES,
)

_COCO17_NAMES = (
    "nose", "l_eye", "r_eye", "l_ear", "r_ear", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
)

COCO17 = SkeletonDef(
    name="coco17",
    joint_count=17,
    edges=(
        (1, 0), (2, 0), (3, 1), (4, 2), (5, 0), (6, 0), (7, 5), (8, 6),
        (9, 7), (10, 8), (11, 5), (12, 6), (13, 11), (14, 12), (15, 13), (16, 14),
    ),
    mirror_pairs=((1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)),
    joint_names=_COCO17_NAMES,
)

BUILTIN_SKELETONS = {s.name: s for s in (OPENPOSE18, COCO17)}


def get_skeleton(name_or_path: str | Path) -> SkeletonDef:
    """Resolve a built-in skeleton name or load a JSON definition from disk."""
    if str(name_or_path) in BUILTIN_SKELETONS:
        return BUILTIN_SKELETONS[str(name_or_path)]
    return load_skeleton(name_or_path)
