"""AdamW with decoupled weight decay, cosine schedule, global-norm clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs) -> "OptimizerState":
        state = cls(**kwargs)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adamw_step(params: list[Tensor], grads, state: OptimizerState, lr_t: float | None = None,
               decay_mask=None) -> OptimizerState:
    """One in-place AdamW update of ``params``.

    ``decay_mask`` (one bool per parameter) restricts weight decay; by
    default every parameter is decayed.
    """
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    lr = state.lr if lr_t is None else lr_t
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape or state.m[i].shape != p.data.shape:
            raise ValueError(f"shape mismatch for parameter {i}: {p.data.shape} vs {g.shape}")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        decay = state.weight_decay if decay_mask is None or decay_mask[i] else 0.0
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        # decoupled decay uses the pre-update parameter value
        p.data = p.data - lr * update - lr * decay * p.data
    return state


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return base_lr
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm <= 0 or total <= max_norm:
        return grads, total
    scale = max_norm / total
    return [g * scale for g in grads], total
