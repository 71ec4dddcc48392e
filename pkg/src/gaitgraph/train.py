"""Siamese training: two-copy batches, one-cycle schedule, Adam, checkpoints."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .augment import AugmentPolicy, two_views
from .checkpoint import read_checkpoint, write_checkpoint
from .features import DEFAULT_LAYOUT, FeatureLayout, assemble_batch
from .loss import supcon_loss
from .model import ModelConfig, STGCNEmbedder, build_model, siamese_forward
from .pose_io import PoseSequence, pad_or_crop
from .skeleton import SkeletonDef

log = logging.getLogger(__name__)


class TrainConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 1000
    max_lr: float = 1e-3
    pct_start: float = 0.3
    div_start: float = 25.0
    div_final: float = 1e4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    temperature: float = 0.07
    grad_clip: float | None = None
    seed: int = 0
    t_fixed: int = 64
    jitter_sigma: float = 1.0
    mirror_prob: float = 0.0
    resample_periods: tuple[int, ...] = (1, 2)
    checkpoint_every: int = 0
    workers: int = 1
    float64: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 2 or self.batch_size % 2:
            raise TrainConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise TrainConfigError("epochs must be at least 1")
        if not 0.0 < self.pct_start < 1.0:
            raise TrainConfigError("pct_start must lie in (0, 1)")
        object.__setattr__(self, "resample_periods", tuple(int(p) for p in self.resample_periods))

    @property
    def dtype(self):
        return np.float64 if self.float64 else np.float32

    def augment_policy(self) -> AugmentPolicy:
        return AugmentPolicy(temporal_crop_len=self.t_fixed, coord_jitter_sigma=self.jitter_sigma,
                             mirror_prob=self.mirror_prob, resample_periods=self.resample_periods)

    def to_json(self) -> dict:
        d = asdict(self)
        d["resample_periods"] = list(self.resample_periods)
        return d


def onecycle_lr(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Cosine one-cycle: max_lr/div_start -> max_lr -> max_lr/div_final.

    The peak falls on step ``round(pct_start * total_steps) - 1``.
    """
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    start, peak_lr, end = cfg.max_lr / cfg.div_start, cfg.max_lr, cfg.max_lr / cfg.div_final
    if total_steps == 1:
        return start
    peak = min(max(int(round(cfg.pct_start * total_steps)) - 1, 1), total_steps - 2)
    if step <= peak:
        return _cos_anneal(start, peak_lr, step / peak)
    return _cos_anneal(peak_lr, end, (step - peak) / (total_steps - 1 - peak))


def _cos_anneal(a: float, b: float, frac: float) -> float:
    if frac >= 1.0:
        return b
    return b + (a - b) / 2.0 * (1.0 + math.cos(math.pi * frac))


class Adam:
    def __init__(self, params: Sequence, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)


def clip_grad_norm(params, max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        for g in grads:
            g *= max_norm / (total + 1e-12)
    return total


class BatchSampler:
    """Epoch permutations of source sequences split into ``batch_size / 2`` sources per batch."""

    def __init__(self, n_sequences: int, batch_size: int, seed: int):
        if n_sequences < batch_size // 2:
            raise TrainConfigError(f"dataset has {n_sequences} sequences; batch_size {batch_size} "
                                   f"needs at least {batch_size // 2}")
        self.n, self.per_batch, self.seed = n_sequences, batch_size // 2, seed

    def __len__(self) -> int:
        return math.ceil(self.n / self.per_batch)

    def epoch(self, epoch: int) -> list[np.ndarray]:
        perm = np.random.default_rng([self.seed, epoch]).permutation(self.n)
        return [perm[i:i + self.per_batch] for i in range(0, self.n, self.per_batch)]


def _fixed_length(seq: PoseSequence, t_fixed: int) -> PoseSequence:
    return seq if seq.T >= t_fixed else pad_or_crop(seq, t_fixed)


def sample_batch(dataset: Sequence[PoseSequence], indices, cfg: TrainConfig, seed,
                 executor: ThreadPoolExecutor | None = None) -> list[tuple[PoseSequence, PoseSequence]]:
    """One two-copy pair per source index; every label therefore occurs at least twice."""
    policy = cfg.augment_policy()
    base = list(np.atleast_1d(seed))

    def make(k_idx):
        k, idx = k_idx
        return two_views(_fixed_length(dataset[int(idx)], cfg.t_fixed), policy, base + [k])

    items = list(enumerate(indices))
    if executor is not None:
        return list(executor.map(make, items))
    return [make(it) for it in items]


@dataclass
class StepRecord:
    epoch: int
    step: int
    lr: float
    loss: float


def train_step(model: STGCNEmbedder, optimizer: Adam, pairs, cfg: TrainConfig, step: int, total_steps: int,
               layout: FeatureLayout = DEFAULT_LAYOUT) -> tuple[float, float]:
    """Forward both copies, SupCon loss, backward and one Adam update. Returns (loss, lr)."""
    batch = assemble_batch(pairs, layout)
    model.train()
    out = siamese_forward(batch, model, rng=np.random.default_rng([cfg.seed, 1_000_003, step]))
    loss = supcon_loss(out.embeddings, out.labels, cfg.temperature)
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericalError(
            f"non-finite loss {value} at step {step}: features min={batch.data.min():.4g} "
            f"max={batch.data.max():.4g} mean={batch.data.mean():.4g}; "
            f"finite embeddings={np.isfinite(out.embeddings.data).all()}")
    model.zero_grad()
    loss.backward()
    if cfg.grad_clip is not None:
        clip_grad_norm(model.parameters(), cfg.grad_clip)
    lr = onecycle_lr(step, total_steps, cfg)
    optimizer.step(lr)
    return value, lr


@dataclass
class FitResult:
    model: STGCNEmbedder
    history: list[StepRecord] = field(default_factory=list)
    checkpoint: Path | None = None

    def epoch_losses(self) -> np.ndarray:
        epochs = sorted({r.epoch for r in self.history})
        return np.array([np.mean([r.loss for r in self.history if r.epoch == e]) for e in epochs])


def save_training_checkpoint(path, model: STGCNEmbedder, optimizer: Adam | None = None,
                             train_state: dict | None = None) -> Path:
    header = {
        "model_config": model.config.to_json(),
        "skeleton": model.skeleton.to_json(),
        "dtype": np.dtype(model.dtype).name,
        "train_state": train_state or {},
    }
    tensors = {f"param/{k}": p.data for k, p in model.named_parameters()}
    tensors.update({f"buffer/{k}": b for k, b in model.named_buffers()})
    if optimizer is not None:
        names = [k for k, _ in model.named_parameters()]
        tensors.update({f"adam.m/{k}": m for k, m in zip(names, optimizer.m)})
        tensors.update({f"adam.v/{k}": v for k, v in zip(names, optimizer.v)})
        header["train_state"] = dict(header["train_state"], adam_t=optimizer.t)
    return write_checkpoint(path, header, tensors)


def load_model(path) -> tuple[STGCNEmbedder, dict, dict]:
    """Rebuild a model from a checkpoint. Returns (model, header, raw tensors)."""
    header, tensors = read_checkpoint(path)
    config = ModelConfig.from_json(header["model_config"])
    skeleton = SkeletonDef.from_json(header["skeleton"])
    model = build_model(config, skeleton, seed=0, dtype=np.dtype(header.get("dtype", "float32")))
    state = {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith(("param/", "buffer/"))}
    model.load_state_dict(state)
    return model, header, tensors


def write_history_csv(history: Sequence[StepRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "step", "lr", "loss"])
        for r in history:
            w.writerow([r.epoch, r.step, repr(r.lr), repr(r.loss)])


def read_history_csv(path) -> list[StepRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "step", "lr", "loss"]:
            raise ValueError(f"{path}: line 1: expected header epoch,step,lr,loss")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(StepRecord(int(row[0]), int(row[1]), float(row[2]), float(row[3])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return out


def fit(dataset: Sequence[PoseSequence], cfg: TrainConfig, model_cfg: ModelConfig, skeleton: SkeletonDef, *,
        out_dir: str | Path | None = None, resume: str | Path | None = None,
        layout: FeatureLayout = DEFAULT_LAYOUT, max_epochs: int | None = None,
        on_epoch: Callable[[int, float], None] | None = None) -> FitResult:
    """Train an embedder on ``dataset``.

    Every random draw is keyed by (seed, epoch, step), so a run resumed from
    an epoch-boundary checkpoint continues exactly like an uninterrupted one.
    ``max_epochs`` stops early (the schedule still spans ``cfg.epochs``).
    """
    if model_cfg.input_channels != layout.channels:
        raise TrainConfigError(f"model expects {model_cfg.input_channels} input channels, "
                               f"layout provides {layout.channels}")
    sampler = BatchSampler(len(dataset), cfg.batch_size, cfg.seed)
    steps_per_epoch = len(sampler)
    total_steps = cfg.epochs * steps_per_epoch
    model = build_model(model_cfg, skeleton, seed=cfg.seed, dtype=cfg.dtype)
    optimizer = Adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
    history: list[StepRecord] = []
    start_epoch = 0
    if resume is not None:
        model, header, tensors = load_model(resume)
        optimizer = Adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
        names = [k for k, _ in model.named_parameters()]
        for i, k in enumerate(names):
            optimizer.m[i][...] = tensors[f"adam.m/{k}"]
            optimizer.v[i][...] = tensors[f"adam.v/{k}"]
        state = header.get("train_state", {})
        optimizer.t = int(state.get("adam_t", 0))
        start_epoch = int(state.get("epochs_done", 0))
        history = [StepRecord(**r) for r in state.get("history", [])]

    out_dir = Path(out_dir) if out_dir is not None else None
    last_ckpt = None
    stop = cfg.epochs if max_epochs is None else min(cfg.epochs, max_epochs)
    executor = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(start_epoch, stop):
            losses = []
            for b, indices in enumerate(sampler.epoch(epoch)):
                step = epoch * steps_per_epoch + b
                pairs = sample_batch(dataset, indices, cfg, [cfg.seed, epoch, b], executor)
                loss, lr = train_step(model, optimizer, pairs, cfg, step, total_steps, layout)
                history.append(StepRecord(epoch, step, lr, loss))
                losses.append(loss)
            mean_loss = float(np.mean(losses))
            log.info("epoch %d/%d loss %.6f lr %.3g", epoch + 1, cfg.epochs, mean_loss, history[-1].lr)
            if on_epoch is not None:
                on_epoch(epoch, mean_loss)
            done = epoch + 1
            if out_dir is not None and (done == stop or (cfg.checkpoint_every and done % cfg.checkpoint_every == 0)):
                state = {"epochs_done": done, "history": [asdict(r) for r in history],
                         "train_config": cfg.to_json()}
                last_ckpt = save_training_checkpoint(out_dir / f"epoch{done:04d}.ckpt", model, optimizer, state)
    finally:
        if executor is not None:
            executor.shutdown()
    if out_dir is not None:
        write_history_csv(history, out_dir / "history.csv")
        if last_ckpt is not None:
            final = out_dir / "model.ckpt"
            final.write_bytes(last_ckpt.read_bytes())
            last_ckpt = final
    return FitResult(model, history, last_ckpt)
