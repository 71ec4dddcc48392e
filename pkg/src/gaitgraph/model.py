"""Spatio-temporal graph-convolutional embedding network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .autodiff import (ConfigError, Tensor, batch_norm, conv_temporal, dropout, graph_conv, l2_normalize,
                       linear, mean_pool, no_grad, relu)
from .features import FeatureTensor
from .skeleton import SkeletonDef, normalized_adjacency

# (output channels, temporal stride) for the eight ST-GCN rows of the reference stack
FULL_BLOCKS = ((64, 1), (64, 1), (64, 1), (128, 2), (128, 1), (128, 1), (256, 2), (256, 1))
REDUCED_BLOCKS = ((64, 1), (64, 1), (128, 2), (256, 2))


@dataclass(frozen=True)
class BlockConfig:
    in_channels: int
    out_channels: int
    temporal_stride: int = 1
    residual: bool | None = None  # None: identity residual whenever shapes allow

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("block channel counts must be positive")
        if self.temporal_stride not in (1, 2):
            raise ConfigError(f"temporal stride must be 1 or 2, got {self.temporal_stride}")
        fits = self.in_channels == self.out_channels and self.temporal_stride == 1
        if self.residual is None:
            object.__setattr__(self, "residual", fits)
        elif self.residual and not fits:
            raise ConfigError("identity residual needs in == out channels and stride 1")


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int = 20
    blocks: tuple[tuple[int, int], ...] = FULL_BLOCKS
    embedding_dim: int = 256
    dropout: float = 0.5
    temporal_kernel: int = 9
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple((int(c), int(s)) for c, s in self.blocks))
        if self.embedding_dim < 1 or self.input_channels < 1:
            raise ConfigError("embedding_dim and input_channels must be positive")
        if self.temporal_kernel % 2 == 0:
            raise ConfigError(f"temporal kernel size must be odd, got {self.temporal_kernel}")
        if not self.blocks:
            raise ConfigError("at least one ST-GCN block is required")
        self.block_configs()

    def block_configs(self) -> list[BlockConfig]:
        cfgs, c_in = [], self.input_channels
        for c_out, stride in self.blocks:
            cfgs.append(BlockConfig(c_in, c_out, stride))
            c_in = c_out
        return cfgs

    def to_json(self) -> dict:
        d = asdict(self)
        d["blocks"] = [list(b) for b in self.blocks]
        return d

    @classmethod
    def from_json(cls, doc: dict) -> ModelConfig:
        doc = dict(doc)
        doc["blocks"] = tuple(tuple(b) for b in doc.get("blocks", FULL_BLOCKS))
        return cls(**doc)

    def parameter_count(self) -> int:
        """Closed-form learnable parameter count (no conv biases; BN has scale and shift)."""
        k = self.temporal_kernel
        total = 2 * self.input_channels
        for b in self.block_configs():
            total += b.in_channels * b.out_channels + 2 * b.out_channels
            total += b.out_channels * b.out_channels * k + 2 * b.out_channels
        last = self.blocks[-1][0]
        return total + last * self.embedding_dim + self.embedding_dim


@dataclass
class Embedding:
    vector: np.ndarray
    label: str
    view: int = 0


class Module:
    """Holds named parameters, running buffers and child modules."""

    def __init__(self) -> None:
        self.training = True
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} does not match {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)
        for name, b in buffers.items():
            b[...] = state[name]

    def astype(self, dtype) -> Module:
        """Cast all parameters (buffers stay 64-bit)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self._params["weight"] = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self._params["bias"] = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self._buffers["running_mean"] = np.zeros(channels)
        self._buffers["running_var"] = np.ones(channels)

    def __call__(self, x: Tensor) -> Tensor:
        return batch_norm(x, self._params["weight"], self._params["bias"], self._buffers["running_mean"],
                          self._buffers["running_var"], self.training, self.momentum, self.eps)


def spatial_gcn(x: Tensor, adjacency: np.ndarray, weight: Tensor) -> Tensor:
    """Graph convolution core ``A_hat X_t W`` for every frame; activation is left to the caller."""
    if x.ndim != 4:
        raise ConfigError(f"spatial_gcn expects (B, C, T, N) input, got shape {x.shape}")
    return graph_conv(x, adjacency, weight)


class STGCNBlock(Module):
    """spatial GCN -> BN -> ReLU -> dropout -> temporal conv -> BN, (+ residual) -> ReLU."""

    def __init__(self, cfg: BlockConfig, adjacency: np.ndarray, *, kernel: int = 9, dropout_rate: float = 0.5,
                 bn_momentum: float = 0.1, bn_eps: float = 1e-5, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.adjacency = adjacency
        self.dropout_rate = dropout_rate
        c_in, c_out = cfg.in_channels, cfg.out_channels
        self._params["gcn_weight"] = Tensor(rng.normal(0.0, np.sqrt(2.0 / c_in), (c_in, c_out)),
                                           requires_grad=True, dtype=dtype)
        self._params["tcn_weight"] = Tensor(rng.normal(0.0, np.sqrt(2.0 / (c_out * kernel)), (c_out, c_out, kernel)),
                                           requires_grad=True, dtype=dtype)
        self._children["bn1"] = BatchNorm(c_out, bn_momentum, bn_eps, dtype)
        self._children["bn2"] = BatchNorm(c_out, bn_momentum, bn_eps, dtype)

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        if x.shape[1] != self.cfg.in_channels:
            raise ConfigError(f"block expects {self.cfg.in_channels} channels, got {x.shape[1]}")
        h = spatial_gcn(x, self.adjacency, self._params["gcn_weight"])
        h = relu(self._children["bn1"](h))
        h = dropout(h, self.dropout_rate, rng, self.training)
        h = conv_temporal(h, self._params["tcn_weight"], self.cfg.temporal_stride)
        h = self._children["bn2"](h)
        if self.cfg.residual:
            h = h + x
        return relu(h)


class STGCNEmbedder(Module):
    """input BN -> ST-GCN blocks -> mean over (T, N) -> linear -> unit-norm embedding."""

    def __init__(self, config: ModelConfig, skeleton: SkeletonDef, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.config = config
        self.skeleton = skeleton
        self.adjacency = normalized_adjacency(skeleton)
        rng = np.random.default_rng(seed)
        self._children["input_bn"] = BatchNorm(config.input_channels, config.bn_momentum, config.bn_eps, dtype)
        for i, bcfg in enumerate(config.block_configs()):
            self._children[f"block{i + 1}"] = STGCNBlock(
                bcfg, self.adjacency, kernel=config.temporal_kernel, dropout_rate=config.dropout,
                bn_momentum=config.bn_momentum, bn_eps=config.bn_eps, rng=rng, dtype=dtype)
        last = config.blocks[-1][0]
        bound = 1.0 / np.sqrt(last)
        self._params["fc_weight"] = Tensor(rng.uniform(-bound, bound, (last, config.embedding_dim)),
                                          requires_grad=True, dtype=dtype)
        self._params["fc_bias"] = Tensor(np.zeros(config.embedding_dim), requires_grad=True, dtype=dtype)
        self.temporal_trace: list[int] = []

    @property
    def dtype(self):
        return self._params["fc_weight"].dtype

    @property
    def blocks(self) -> list[STGCNBlock]:
        return [m for name, m in self._children.items() if name.startswith("block")]

    def __call__(self, x, rng: np.random.Generator | None = None) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x), dtype=self.dtype)
        elif x.dtype != self.dtype:
            x = Tensor(x.data, dtype=self.dtype)
        if x.ndim != 4:
            raise ConfigError(f"expected (B, C, T, N) features, got shape {x.shape}")
        if x.shape[1] != self.config.input_channels:
            raise ConfigError(f"model expects C_in={self.config.input_channels}, features have {x.shape[1]}")
        if x.shape[3] != self.skeleton.joint_count:
            raise ConfigError(f"model skeleton has {self.skeleton.joint_count} joints, features have {x.shape[3]}")
        h = self._children["input_bn"](x)
        trace = [h.shape[2]]
        for block in self.blocks:
            h = block(h, rng)
            trace.append(h.shape[2])
        self.temporal_trace = trace
        h = mean_pool(h)
        h = linear(h, self._params["fc_weight"], self._params["fc_bias"])
        return l2_normalize(h, axis=-1)


def build_model(config: ModelConfig, skeleton: SkeletonDef, seed: int = 0, dtype=np.float32) -> STGCNEmbedder:
    return STGCNEmbedder(config, skeleton, seed=seed, dtype=dtype)


def embed(features: FeatureTensor, model: STGCNEmbedder, batch_size: int = 64) -> list[Embedding]:
    """Eval-mode embeddings, one per batch entry, carrying each entry's label and view."""
    if features.data.shape[1] != model.config.input_channels:
        raise ConfigError(f"model expects C_in={model.config.input_channels}, "
                          f"features have {features.data.shape[1]}")
    was_training = model.training
    model.eval()
    vectors = []
    try:
        with no_grad():
            for lo in range(0, features.data.shape[0], batch_size):
                vectors.append(model(features.data[lo:lo + batch_size]).data)
    finally:
        model.train(was_training)
    z = np.concatenate(vectors, axis=0)
    views = features.views or [0] * len(z)
    return [Embedding(z[i], features.labels[i], int(views[i])) for i in range(len(z))]


@dataclass
class SiameseOutput:
    embeddings: Tensor  # (B, D_E), copy 1 and copy 2 of each pair adjacent
    labels: list[str] = field(default_factory=list)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        z = self.embeddings.data
        return z[0::2], z[1::2]


def siamese_forward(pair_batch: FeatureTensor, model: STGCNEmbedder,
                    rng: np.random.Generator | None = None) -> SiameseOutput:
    """Run both copies of every pair through the one shared parameter set."""
    if len(pair_batch.labels) % 2:
        raise ConfigError("a pair batch needs an even number of entries")
    z = model(pair_batch.data, rng)
    return SiameseOutput(z, list(pair_batch.labels))
