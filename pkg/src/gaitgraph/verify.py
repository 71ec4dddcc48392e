"""Gradient-check suite covering every differentiable operation and the full model + loss."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import (Tensor, batch_norm, conv_temporal, dropout, exp, grad_check, graph_conv, l2_normalize,
                       linear, log, logsumexp, matmul, mean_pool, relu)
from .loss import supcon_loss
from .model import ModelConfig, build_model
from .skeleton import OPENPOSE18, normalized_adjacency

GRAD_TOLERANCE = 1e-4


def _param(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, shape), requires_grad=True, dtype=np.float64)


def _away_from_zero(rng, *shape, margin=0.05) -> np.ndarray:
    x = rng.normal(0.0, 1.0, shape)
    return np.where(np.abs(x) < margin, np.sign(x) * margin + x, x)


def _unit_rows(rng, b, d) -> Tensor:
    z = rng.normal(size=(b, d))
    return Tensor(z / np.linalg.norm(z, axis=1, keepdims=True), requires_grad=True, dtype=np.float64)


def _cases(rng: np.random.Generator) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    cases = {}
    # scalar-valued wrappers use a fixed random projection so every output coordinate matters
    def project(y: Tensor, seed: int) -> Tensor:
        w = np.random.default_rng(seed).normal(size=y.shape)
        return (y * Tensor(w, dtype=np.float64)).sum()

    a, b = _param(rng, 3, 4), _param(rng, 3, 4)
    cases["add"] = (lambda: project(a + b, 1), [a, b])
    cases["multiply"] = (lambda: project(a * b, 2), [a, b])
    cases["scalar_multiply"] = (lambda: project(a * 0.37, 3), [a])
    m1, m2 = _param(rng, 3, 5), _param(rng, 5, 2)
    cases["matmul"] = (lambda: project(matmul(m1, m2), 4), [m1, m2])
    e = _param(rng, 2, 3, scale=0.5)
    cases["exp"] = (lambda: project(exp(e), 5), [e])
    pos = Tensor(rng.uniform(0.5, 2.0, (2, 3)), requires_grad=True, dtype=np.float64)
    cases["log"] = (lambda: project(log(pos), 6), [pos])

    r = Tensor(_away_from_zero(rng, 4, 5), requires_grad=True, dtype=np.float64)
    cases["relu"] = (lambda: project(relu(r), 7), [r])

    A = normalized_adjacency(OPENPOSE18)
    gx, gw = _param(rng, 2, 3, 4, 18), _param(rng, 3, 5)
    cases["graph_conv"] = (lambda: project(graph_conv(gx, A, gw), 8), [gx, gw])

    cx, cw1, cw2 = _param(rng, 2, 3, 7, 2), _param(rng, 4, 3, 3), _param(rng, 4, 3, 5)
    cases["conv_temporal_s1"] = (lambda: project(conv_temporal(cx, cw1, 1), 9), [cx, cw1])
    cases["conv_temporal_s2"] = (lambda: project(conv_temporal(cx, cw2, 2), 10), [cx, cw2])

    bx = _param(rng, 2, 3, 4, 2)
    gamma = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True, dtype=np.float64)
    beta = _param(rng, 3)
    cases["batch_norm_train"] = (
        lambda: project(batch_norm(bx, gamma, beta, np.zeros(3), np.ones(3), True), 11), [bx, gamma, beta])
    rm, rv = rng.normal(size=3), rng.uniform(0.5, 2.0, 3)
    cases["batch_norm_eval"] = (
        lambda: project(batch_norm(bx, gamma, beta, rm.copy(), rv.copy(), False), 12), [bx, gamma, beta])

    dx = _param(rng, 3, 4, 5)
    cases["dropout"] = (lambda: project(dropout(dx, 0.5, np.random.default_rng(13), True), 14), [dx])

    px = _param(rng, 2, 3, 4, 5)
    cases["mean_pool"] = (lambda: project(mean_pool(px), 15), [px])
    lx, lw, lb = _param(rng, 4, 6), _param(rng, 6, 3), _param(rng, 3)
    cases["linear"] = (lambda: project(linear(lx, lw, lb), 16), [lx, lw, lb])
    nx = _param(rng, 4, 6)
    cases["l2_normalize"] = (lambda: project(l2_normalize(nx), 17), [nx])
    sx = _param(rng, 4, 5)
    mask = rng.random((4, 5)) > 0.3
    mask[:, 0] = True
    cases["logsumexp"] = (lambda: project(logsumexp(sx, axis=1, mask=mask), 18), [sx])

    z = _unit_rows(rng, 6, 5)
    labels = np.array([0, 0, 1, 1, 2, 2])
    cases["supcon_loss"] = (lambda: supcon_loss(l2_normalize(z), labels, 0.5), [z])
    return cases


def composite_case(seed: int = 0, batch: int = 4, frames: int = 8):
    """Full embedding network (reference block stack) with SupCon loss on a small batch."""
    rng = np.random.default_rng(seed)
    model = build_model(ModelConfig(), OPENPOSE18, seed=seed, dtype=np.float64)
    model.train()
    x = Tensor(rng.normal(size=(batch, 20, frames, 18)), requires_grad=True, dtype=np.float64)
    labels = np.arange(batch) // 2

    def f() -> Tensor:
        z = model(x, rng=np.random.default_rng(seed + 1))
        return supcon_loss(z, labels, temperature=0.5)

    return f, [x] + model.parameters()


def run_grad_checks(seed: int = 0, h: float = 1e-5, composite: bool = True,
                    composite_coords: int = 3) -> dict[str, float]:
    """Max relative error per operation (and ``embed+supcon`` for the whole stack)."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, (f, inputs) in _cases(rng).items():
        results[name] = grad_check(f, inputs, h=h, skip_kinks=True).max_rel_error
    if composite:
        f, inputs = composite_case(seed)
        # stencils straddling a ReLU kink measure a one-sided slope, not the gradient
        results["embed+supcon"] = grad_check(f, inputs, h=h, max_coords=composite_coords,
                                             rng=np.random.default_rng(seed), skip_kinks=True).max_rel_error
    return results
