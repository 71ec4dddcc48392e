"""Neural-network operations over (B, C, T, N) tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor


class ConfigError(ValueError):
    """Invalid layer configuration (kernel size, stride, channel counts)."""


def conv_temporal(x: Tensor, weight: Tensor, stride: int = 1) -> Tensor:
    """1-D convolution along T, independently for each joint.

    ``weight`` has shape (C_out, C, k) with odd k; the input is zero padded
    by (k - 1) / 2 frames on both ends so the output has ceil(T / stride)
    frames.
    """
    B, C, T, N = x.shape
    O, Cw, k = weight.shape
    if k % 2 == 0:
        raise ConfigError(f"temporal kernel size must be odd, got {k}")
    if stride not in (1, 2):
        raise ConfigError(f"temporal stride must be 1 or 2, got {stride}")
    if Cw != C:
        raise ConfigError(f"conv_temporal: input has {C} channels, kernel expects {Cw}")
    pad = (k - 1) // 2
    t_out = (T - 1) // stride + 1
    span = stride * (t_out - 1) + 1
    w = weight.data
    taps = np.ascontiguousarray(w.transpose(2, 1, 0))  # (k, C, O)

    # time-major, channels-last padded copy: each tap is one contiguous GEMM
    xt = np.zeros((T + 2 * pad, B, N, C), dtype=x.dtype)
    xt[pad:pad + T] = x.data.transpose(2, 0, 3, 1)
    out = np.zeros((t_out * B * N, O), dtype=x.dtype)
    for j in range(k):
        rows = xt[j:j + span:stride].reshape(-1, C)
        out += rows @ taps[j]
    y = out.reshape(t_out, B, N, O).transpose(1, 3, 0, 2)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(2, 0, 3, 1)).reshape(-1, O)
        gw = gx = None
        if weight.requires_grad:
            gtaps = np.empty_like(taps)
            for j in range(k):
                gtaps[j] = xt[j:j + span:stride].reshape(-1, C).T @ g2
            gw = gtaps.transpose(2, 1, 0)
        if x.requires_grad:
            gxt = np.zeros_like(xt)
            for j in range(k):
                gxt[j:j + span:stride] += (g2 @ taps[j].T).reshape(t_out, B, N, C)
            gx = gxt[pad:pad + T].transpose(1, 3, 0, 2)
        return gx, gw

    return Tensor._from_op(y, (x, weight), backward)


def graph_conv(x: Tensor, adjacency: np.ndarray, weight: Tensor) -> Tensor:
    """Per-frame ``A @ X_t @ W`` for X of shape (B, C, T, N) and W of shape (C, C_out).

    ``adjacency`` is a constant (N, N) matrix.
    """
    B, C, T, N = x.shape
    if adjacency.shape != (N, N):
        raise ConfigError(f"graph_conv: adjacency {adjacency.shape} does not match N={N} joints")
    if weight.shape[0] != C:
        raise ConfigError(f"graph_conv: input has C={C} channels, weight expects {weight.shape[0]}")
    O = weight.shape[1]
    a = np.asarray(adjacency, dtype=x.dtype)
    w = weight.data
    # aggregate over joints first, then mix channels (channels-last rows)
    agg = (x.data.reshape(-1, N) @ a.T).reshape(B, C, T, N)
    agg_cl = np.ascontiguousarray(agg.transpose(0, 2, 3, 1)).reshape(-1, C)
    y = (agg_cl @ w).reshape(B, T, N, O).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, O)
        gw = agg_cl.T @ g2 if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gagg = (g2 @ w.T).reshape(B, T, N, C).transpose(0, 3, 1, 2)
            gx = (np.ascontiguousarray(gagg).reshape(-1, N) @ a).reshape(B, C, T, N)
        return gx, gw

    return Tensor._from_op(y, (x, weight), backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over (B, T, N) of a (B, C, T, N) tensor.

    In training mode batch statistics are used and the running buffers are
    updated in place as ``(1 - momentum) * old + momentum * batch`` (the
    variance buffer tracks the unbiased estimate).
    """
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if training:
        count = x.data.size // x.shape[1]
        if count < 2:
            raise ConfigError("batch_norm in training mode needs at least 2 values per channel")
        mu = x.data.mean(axis=axes)
        centered = x.data - mu.reshape(shape)
        var = (centered * centered).mean(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mu = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)
        centered = x.data - mu.reshape(shape)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = centered * inv_std.reshape(shape)
    y = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward(g):
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gb = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(shape)
            if training:
                m1 = gxhat.mean(axis=axes).reshape(shape)
                m2 = (gxhat * xhat).mean(axis=axes).reshape(shape)
                gx = (gxhat - m1 - xhat * m2) * inv_std.reshape(shape)
            else:
                gx = gxhat * inv_std.reshape(shape)
        return gx, gg, gb

    return Tensor._from_op(y, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity in eval mode or when ``rate`` is 0."""
    if not training or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ConfigError("dropout rate must be below 1")
    if rng is None:
        raise ConfigError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,))


def mean_pool(x: Tensor) -> Tensor:
    """Global mean over the (T, N) axes: (B, C, T, N) -> (B, C)."""
    B, C, T, N = x.shape
    scale = 1.0 / (T * N)

    def backward(g):
        return (np.broadcast_to((g * scale)[:, :, None, None], x.shape).astype(x.dtype),)

    return Tensor._from_op(x.data.mean(axis=(2, 3)), (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` for x of shape (B, in) and weight of shape (in, out)."""
    y = x @ weight
    return y + bias if bias is not None else y


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale each vector along ``axis`` to unit Euclidean norm; zero vectors are an error."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    if np.any(norm == 0):
        raise ValueError("l2_normalize: zero vector has no direction")
    y = x.data / norm

    def backward(g):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)

    return Tensor._from_op(y, (x,), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    return x * as_tensor(factor, like=x)
