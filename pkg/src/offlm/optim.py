"""Adam optimizer and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .autograd import Tensor
from .errors import ConfigError, ShapeError


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers plus the step counter.

    Buffers are keyed by parameter name and created lazily as zeros, so
    a fresh state (step_count == 0) has all-zero moments by definition.
    """

    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def buffers_for(self, name: str, like: np.ndarray):
        if name not in self.first_moment:
            self.first_moment[name] = np.zeros_like(like)
            self.second_moment[name] = np.zeros_like(like)
        return self.first_moment[name], self.second_moment[name]


def clip_global_norm(grads: Iterable[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the factor applied (1.0 when no clipping was needed).
    Tensors without a gradient buffer are ignored.
    """
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    tensors = [t for t in grads if t.grad is not None]
    total = np.sqrt(sum(float((t.grad.astype(np.float64) ** 2).sum()) for t in tensors))
    if total <= max_norm:
        return 1.0
    factor = max_norm / total
    for t in tensors:
        t.grad *= t.dtype.type(factor)
    return factor


def global_grad_norm(params: Iterable[Tensor]) -> float:
    tensors = [t for t in params if t.grad is not None]
    return float(np.sqrt(sum(float((t.grad.astype(np.float64) ** 2).sum()) for t in tensors)))


def adam_step(named_params: Sequence[tuple[str, Tensor]], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> None:
    """One bias-corrected Adam update over all parameters with gradients.

    The step counter increments once per call, before bias correction.
    Parameters whose grad is None are skipped (their moments still decay
    on the steps where they do have gradients, not here).
    """
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, param in named_params:
        if param.grad is None:
            continue
        if param.grad.shape != param.data.shape:
            raise ShapeError(
                f"gradient shape {param.grad.shape} does not match parameter "
                f"{name} of shape {param.data.shape}")
        m, v = state.buffers_for(name, param.data)
        g = param.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + epsilon)
        param.data -= param.dtype.type(lr) * update.astype(param.dtype)
