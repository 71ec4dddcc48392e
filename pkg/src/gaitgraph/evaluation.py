"""Gallery/probe rank-1 identification and cross-view reports."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import DEFAULT_LAYOUT, FeatureLayout, assemble_single
from .model import Embedding, STGCNEmbedder, embed
from .pose_io import PoseSequence, pad_or_crop

log = logging.getLogger(__name__)


def _vec(e) -> np.ndarray:
    return np.asarray(e.vector if isinstance(e, Embedding) else e, dtype=np.float64)


def euclidean_distance(a, b) -> float:
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise ValueError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.sum(d * d)))


def distance_matrix(probes: np.ndarray, gallery: np.ndarray, chunk: int = 256) -> np.ndarray:
    """(P, G) Euclidean distances computed from explicit differences."""
    probes, gallery = np.atleast_2d(probes), np.atleast_2d(gallery)
    if probes.shape[1] != gallery.shape[1]:
        raise ValueError(f"embedding dimensions differ: {probes.shape[1]} vs {gallery.shape[1]}")
    out = np.empty((len(probes), len(gallery)))
    for lo in range(0, len(probes), chunk):
        d = probes[lo:lo + chunk, None, :] - gallery[None, :, :]
        out[lo:lo + chunk] = np.sqrt(np.sum(d * d, axis=-1))
    return out


def rank1_identify(probe, gallery: Sequence[Embedding]) -> str:
    """Label of the nearest gallery embedding; ties go to the lowest gallery index."""
    if not gallery:
        raise ValueError("rank1_identify needs a non-empty gallery")
    d = distance_matrix(_vec(probe)[None], np.stack([_vec(g) for g in gallery]))[0]
    return gallery[int(np.argmin(d))].label


@dataclass
class EvalReport:
    """Rows are probe views, columns gallery views; undefined cells are NaN."""

    views: list[int]
    rank1: np.ndarray
    counts: np.ndarray
    correct: np.ndarray

    @property
    def overall_mean(self) -> float:
        n = self.counts.sum()
        return float(self.correct.sum() / n) if n else float("nan")

    def probe_view_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.correct.sum(axis=1) / self.counts.sum(axis=1)

    def gallery_view_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.correct.sum(axis=0) / self.counts.sum(axis=0)

    def mean_excluding_identical_view(self) -> float:
        off = ~np.eye(len(self.views), dtype=bool)
        n = self.counts[off].sum()
        return float(self.correct[off].sum() / n) if n else float("nan")

    def to_json(self) -> dict:
        def clean(a):
            return [[None if np.isnan(v) else float(v) for v in row] for row in a]

        return {
            "views": self.views,
            "rank1_matrix": clean(self.rank1),
            "counts": self.counts.astype(int).tolist(),
            "correct": self.correct.astype(int).tolist(),
            "probe_view_means": [None if np.isnan(v) else float(v) for v in self.probe_view_means()],
            "gallery_view_means": [None if np.isnan(v) else float(v) for v in self.gallery_view_means()],
            "overall_mean": self.overall_mean,
            "axes": {"rows": "probe view", "columns": "gallery view"},
        }

    @classmethod
    def from_json(cls, doc: dict) -> EvalReport:
        rank1 = np.array([[np.nan if v is None else v for v in row] for row in doc["rank1_matrix"]], dtype=float)
        return cls(views=[int(v) for v in doc["views"]], rank1=rank1,
                   counts=np.array(doc["counts"], dtype=int), correct=np.array(doc["correct"], dtype=int))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["probe\\gallery"] + self.views + ["mean"])
        for i, v in enumerate(self.views):
            w.writerow([v] + ["" if np.isnan(x) else repr(float(x)) for x in self.rank1[i]]
                       + [repr(float(self.probe_view_means()[i]))])
        return buf.getvalue()

    def to_text(self) -> str:
        head = "probe\\gallery " + " ".join(f"{v:>7d}" for v in self.views) + "    mean"
        lines = [head]
        means = self.probe_view_means()
        for i, v in enumerate(self.views):
            cells = " ".join("      -" if np.isnan(x) else f"{100 * x:7.2f}" for x in self.rank1[i])
            lines.append(f"{v:>13d} {cells} {100 * means[i]:7.2f}")
        lines.append(f"overall mean (count-weighted): {100 * self.overall_mean:.2f}%")
        return "\n".join(lines)

    def save(self, out_dir: str | Path, stem: str = "report") -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.json").write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")
        (out_dir / f"{stem}.csv").write_text(self.to_csv(), encoding="utf-8")
        (out_dir / f"{stem}.txt").write_text(self.to_text() + "\n", encoding="utf-8")


def evaluate_embeddings(gallery: Sequence[Embedding], probes: Sequence[Embedding]) -> EvalReport:
    """Rank-1 accuracy per (probe view, gallery view) cell against the gallery of that view."""
    views = sorted({e.view for e in gallery} | {e.view for e in probes})
    V = len(views)
    counts = np.zeros((V, V), dtype=int)
    correct = np.zeros((V, V), dtype=int)
    g_vecs = np.stack([_vec(e) for e in gallery]) if gallery else np.zeros((0, 0))
    g_labels = np.array([e.label for e in gallery])
    g_views = np.array([e.view for e in gallery])
    p_labels = np.array([e.label for e in probes])
    p_views = np.array([e.view for e in probes])
    p_vecs = np.stack([_vec(e) for e in probes]) if probes else np.zeros((0, 0))
    for i, pv in enumerate(views):
        p_sel = np.flatnonzero(p_views == pv)
        for j, gv in enumerate(views):
            g_sel = np.flatnonzero(g_views == gv)
            if len(p_sel) == 0 or len(g_sel) == 0:
                continue
            d = distance_matrix(p_vecs[p_sel], g_vecs[g_sel])
            pred = g_labels[g_sel][np.argmin(d, axis=1)]
            counts[i, j] = len(p_sel)
            correct[i, j] = int(np.sum(pred == p_labels[p_sel]))
    with np.errstate(invalid="ignore", divide="ignore"):
        rank1 = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    undefined = [(views[i], views[j]) for i, j in zip(*np.nonzero(counts == 0))]
    if undefined:
        log.warning("%d undefined (probe view, gallery view) cells excluded from means: %s",
                    len(undefined), undefined)
    return EvalReport(views, rank1, counts, correct)


def prepare_eval_sequences(seqs: Sequence[PoseSequence], t_fixed: int) -> list[PoseSequence]:
    return [pad_or_crop(s, t_fixed) for s in seqs]


def embed_sequences(seqs: Sequence[PoseSequence], model: STGCNEmbedder, t_fixed: int = 64,
                    layout: FeatureLayout = DEFAULT_LAYOUT, batch_size: int = 64) -> list[Embedding]:
    out: list[Embedding] = []
    fixed = prepare_eval_sequences(seqs, t_fixed)
    for lo in range(0, len(fixed), batch_size):
        out += embed(assemble_single(fixed[lo:lo + batch_size], layout), model, batch_size)
    return out


def cross_view_eval(gallery_set: Sequence[PoseSequence], probe_set: Sequence[PoseSequence],
                    model: STGCNEmbedder, t_fixed: int = 64, layout: FeatureLayout = DEFAULT_LAYOUT) -> EvalReport:
    gallery = embed_sequences(gallery_set, model, t_fixed, layout)
    probes = embed_sequences(probe_set, model, t_fixed, layout)
    return evaluate_embeddings(gallery, probes)


def split_gallery_probe(seqs: Sequence[PoseSequence]) -> tuple[list[PoseSequence], list[PoseSequence]]:
    """First sequence of each (subject, view) goes to the gallery, the rest to the probe set."""
    seen: set[tuple[str, int]] = set()
    gallery, probe = [], []
    for s in seqs:
        key = (s.subject_id, s.view)
        if key in seen:
            probe.append(s)
        else:
            seen.add(key)
            gallery.append(s)
    return gallery, probe


def apply_temporal_order(seqs: Sequence[PoseSequence], mode: str, seed) -> list[PoseSequence]:
    """``sort`` leaves frame order alone; ``shuffle`` permutes the frames of each sequence."""
    if mode == "sort":
        return list(seqs)
    if mode != "shuffle":
        raise ValueError(f"temporal order must be 'sort' or 'shuffle', got {mode!r}")
    base = list(np.atleast_1d(seed))
    out = []
    for i, s in enumerate(seqs):
        perm = np.random.default_rng(base + [i]).permutation(s.T)
        out.append(s.with_frames(s.frames[perm]))
    return out


def temporal_control(train: Sequence[PoseSequence], test: Sequence[PoseSequence], mode_train: str,
                     mode_test: str, seed) -> tuple[list[PoseSequence], list[PoseSequence]]:
    """Sorted or shuffled copies of the train and test sets (independent seeds per phase)."""
    base = list(np.atleast_1d(seed))
    return (apply_temporal_order(train, mode_train, base + [0]),
            apply_temporal_order(test, mode_test, base + [1]))
