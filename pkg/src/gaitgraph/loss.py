"""Supervised contrastive loss over unit-norm embeddings."""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from .autodiff import Tensor, as_tensor, logsumexp, matmul, transpose, tsum


class NoPositivesWarning(UserWarning):
    """No anchor in the batch had a same-label partner; the loss is defined as 0."""


def supcon_loss(z: Tensor, labels: Sequence, temperature: float = 0.07, check_norm: bool = True) -> Tensor:
    """Mean over anchors with positives of

        -1/|P(i)| * sum_{p in P(i)} log( exp(z_i.z_p / tau) / sum_{a != i} exp(z_i.z_a / tau) )

    ``z`` is (B, D) with unit-norm rows.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError(f"supcon_loss needs a (B >= 2, D) batch, got shape {z.shape}")
    labels = np.asarray(labels)
    B = z.shape[0]
    if labels.shape != (B,):
        raise ValueError(f"{labels.shape[0] if labels.ndim else 0} labels for {B} embeddings")
    if check_norm:
        norms = np.linalg.norm(z.data, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("supcon_loss expects L2-normalized embeddings")

    not_self = ~np.eye(B, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & not_self
    n_pos = positives.sum(axis=1)
    anchors = n_pos > 0
    if not anchors.any():
        warnings.warn("no anchor has a positive; supcon loss is 0", NoPositivesWarning, stacklevel=2)
        return tsum(z * as_tensor(0.0, like=z))

    sim = matmul(z, transpose(z)) * (1.0 / temperature)
    log_denominator = logsumexp(sim, axis=1, mask=not_self)
    # sum_p log_prob(i, p) = sum_p sim_ip - |P(i)| * log_denominator_i
    weights = np.where(positives, 1.0 / np.maximum(n_pos, 1)[:, None], 0.0) / anchors.sum()
    pos_term = tsum(sim * as_tensor(weights, like=z))
    denom_term = tsum(log_denominator * as_tensor(anchors / anchors.sum(), like=z))
    return denom_term - pos_term
