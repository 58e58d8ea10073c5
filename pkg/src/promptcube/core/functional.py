"""Fused differentiable building blocks: softmax, layer norm, GELU, attention."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, concat, getitem, matmul, reshape, swapaxes, tsum

_GELU_C = math.sqrt(2.0 / math.pi)


def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Numerically stable softmax; masked-out entries get exactly zero weight.

    ``mask`` is a boolean array broadcastable to ``x`` where True marks an
    entry that may receive weight.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax row is fully masked")
        z = np.where(mask, z, -np.inf)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), vjp, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def vjp(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), vjp, "log_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        gx = gg = gb = None
        lead = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gg = (g * xhat).sum(axis=lead)
        if bias.requires_grad:
            gb = g.sum(axis=lead)
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return Tensor._from_op(out, (x, gain, bias), vjp, "layer_norm")


def gelu(x) -> Tensor:
    """GELU, tanh approximation."""
    x = as_tensor(x)
    a = x.data
    a2 = a * a  # a ** 3 goes through the slow generic pow
    t = np.tanh(_GELU_C * (a + 0.044715 * a2 * a))
    out = 0.5 * a * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * a2)
        return (g * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * dinner),)

    return Tensor._from_op(out, (x,), vjp, "gelu")


def l2_normalize(x, axis: int = -1) -> Tensor:
    """Scale rows to unit length.  A zero-norm row is an error, never rescued."""
    x = as_tensor(x)
    sq = (x.data * x.data).sum(axis=axis, keepdims=True)
    if np.any(sq == 0):
        raise FloatingPointError("cannot normalize a zero-norm vector")
    norm = np.sqrt(sq)
    out = x.data / norm

    def vjp(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return Tensor._from_op(out, (x,), vjp, "l2_normalize")


def linear(x, weight, bias=None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else out + bias


@dataclass
class AttentionWeights:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return swapaxes(reshape(x, (*lead, n, heads, d // heads)), -2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, hd = x.shape
    return reshape(swapaxes(x, -2, -3), (*lead, n, h * hd))


def multi_head_attention(q, k, v, weights: AttentionWeights, heads: int, mask=None) -> Tensor:
    """Scaled dot-product attention over ``heads`` heads.

    ``q`` is ``[..., Nq, D]``, ``k``/``v`` are ``[..., Nk, D]``.  ``mask`` is a
    boolean ``[Nq, Nk]`` array (True = may attend).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if d % heads:
        raise ValueError(f"model width {d} is not divisible by {heads} heads")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (q.shape[-2], k.shape[-2]):
            raise ValueError(f"mask shape {mask.shape} != {(q.shape[-2], k.shape[-2])}")
        if not mask.any(axis=-1).all():
            raise ValueError("attention mask leaves a query with no visible key")
    qh = _split_heads(linear(q, weights.wq, weights.bq), heads)
    kh = _split_heads(linear(k, weights.wk, weights.bk), heads)
    vh = _split_heads(linear(v, weights.wv, weights.bv), heads)
    scores = matmul(qh, swapaxes(kh, -1, -2)) * (1.0 / math.sqrt(d // heads))
    attn = softmax(scores, axis=-1, mask=mask)
    return linear(_merge_heads(matmul(attn, vh)), weights.wo, weights.bo)


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def take_rows(table, ids) -> Tensor:
    """Embedding lookup: ``table[ids]`` with scatter-add backward."""
    return getitem(as_tensor(table), np.asarray(ids, dtype=np.int64))


def cross_entropy(logits, targets) -> Tensor:
    """Per-position negative log-likelihood of integer ``targets``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    logp = log_softmax(logits, axis=-1)
    lead = np.indices(targets.shape)
    return -getitem(logp, (*lead, targets))


__all__ = [
    "AttentionWeights",
    "causal_mask",
    "concat",
    "cross_entropy",
    "gelu",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log_softmax",
    "multi_head_attention",
    "softmax",
    "take_rows",
    "tsum",
]
