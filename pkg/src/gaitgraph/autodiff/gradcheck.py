"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, record_kinks


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: tuple | None = None  # (input index, flat coordinate)
    checked: int = 0
    skipped: int = 0  # coordinates whose stencil crossed a ReLU kink
    nonfinite: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.nonfinite and np.isfinite(self.max_rel_error)

    def __float__(self) -> float:
        return self.max_rel_error


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def _masks_equal(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(f: Callable[[], Tensor], inputs: Tensor | Sequence[Tensor], h: float = 1e-5,
               max_coords: int | None = None, rng: np.random.Generator | None = None,
               skip_kinks: bool = False) -> GradCheckResult:
    """Compare the gradient of the scalar ``f()`` w.r.t. ``inputs`` with central differences.

    ``f`` is re-evaluated with one coordinate of one input moved by ``+-h``
    (inputs are perturbed in place and restored). ``max_coords`` caps the
    number of coordinates per input, drawn with ``rng``.

    With ``skip_kinks`` a coordinate whose stencil flips any ReLU mask is not
    differentiable there; it is skipped (counted in ``skipped``) and, when
    sampling, replaced by another coordinate.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    for x in inputs:
        if x.dtype != np.float64:
            raise TypeError("grad_check requires 64-bit tensors")
        x.grad = None
    with record_kinks() as base_masks:
        out = f()
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    def evaluate() -> tuple[float, bool]:
        if not skip_kinks:
            return float(f().data), True
        with record_kinks() as masks:
            value = float(f().data)
        return value, _masks_equal(masks, base_masks)

    rng = rng or np.random.default_rng(0)
    result = GradCheckResult(max_rel_error=0.0)
    for k, x in enumerate(inputs):
        flat = x.data.reshape(-1)
        coords = np.arange(flat.size)
        want = flat.size
        if max_coords is not None and flat.size > max_coords:
            coords = rng.permutation(flat.size)
            want = max_coords
        ga = analytic[k].reshape(-1)
        done = 0
        for c in coords:
            if done >= want:
                break
            orig = flat[c]
            flat[c] = orig + h
            fp, smooth_p = evaluate()
            flat[c] = orig - h
            fm, smooth_m = evaluate()
            flat[c] = orig
            if not (smooth_p and smooth_m):
                result.skipped += 1
                continue
            done += 1
            num = (fp - fm) / (2.0 * h)
            result.checked += 1
            if not (np.isfinite(num) and np.isfinite(ga[c])):
                result.nonfinite.append((k, int(c)))
                continue
            err = float(relative_error(ga[c], num))
            if err > result.max_rel_error:
                result.max_rel_error = err
                result.worst = (k, int(c))
    if result.nonfinite:
        result.max_rel_error = float("inf")
    return result
