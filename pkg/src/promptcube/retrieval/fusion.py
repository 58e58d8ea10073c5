"""Temporal fusion strategies scoring text queries against multi-frame videos.

Every strategy exists twice: a block-wise numpy scorer used for ranking
and profiling, and a tape-aware version used when the strategy is trained
as the pooling head.  Frame and text vectors are assumed unit-norm.

* ``mean_pool``      y . x_v with x_v the normalized mean of frame vectors
* ``attention_pool`` sum_f softmax_f(s_f / T) s_f, s_f = y . f
* ``topk_pool``      mean of the k largest s_f
* ``xpool_style``    y . normalize(mean_f f + (sum_f a_f f Wv) Wo),
                     a = softmax_f((y Wq) . (f Wk) / sqrt(D))
* ``xclip_style``    word-level attention pool over frames, then a
                     softmax-weighted sum over the caption's words
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Tensor, getitem, l2_normalize, matmul, mean, reshape, softmax, swapaxes, tsum

STRATEGIES = ("mean_pool", "attention_pool", "topk_pool", "xpool_style", "xclip_style")
TEXT_AGNOSTIC = ("mean_pool",)
TRAINABLE = ("mean_pool", "attention_pool", "topk_pool", "xpool_style")


@dataclass
class FusionWeights:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor

    @classmethod
    def init(cls, f, dim: int, zero_output: bool = True) -> "FusionWeights":
        wo = f.zeros(dim, dim) if zero_output else f.matrix(dim, dim)
        return cls(f.matrix(dim, dim), f.matrix(dim, dim), f.matrix(dim, dim), wo)

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int) -> "FusionWeights":
        std = dim ** -0.5
        return cls(*(Tensor(rng.normal(0.0, std, size=(dim, dim))) for _ in range(4)))


@dataclass
class FusionParams:
    temperature: float = 0.1
    topk: int = 3
    weights: FusionWeights | None = None


def analytic_ops(strategy: str, nv: int, nt: int, nf: int, nw: int) -> int:
    """Number of D-dimensional similarity terms the score stage evaluates."""
    if strategy == "mean_pool":
        return nv * nt
    if strategy in ("attention_pool", "topk_pool", "xpool_style"):
        return nv * nt * nf
    if strategy == "xclip_style":
        return nv * nt * nf * nw
    raise ValueError(f"unknown strategy {strategy!r}")


# numpy block scorers ----------------------------------------------------------
# Each writes an (nq, Nv) block into ``out`` and returns nothing.  Temporaries
# are released as soon as they are dead so peak usage reflects the algorithm.

def _frame_sims(yb: np.ndarray, frames: np.ndarray) -> np.ndarray:
    nv, nf, d = frames.shape
    return (yb @ frames.reshape(nv * nf, d).T).reshape(len(yb), nv, nf)


def score_mean_pool(yb, pooled, out):
    np.matmul(yb, pooled.T, out=out)


def score_attention_pool(yb, frames, out, temperature):
    s = _frame_sims(yb, frames)
    m = s.max(axis=-1, keepdims=True)
    w = s - m
    del m
    w /= temperature
    np.exp(w, out=w)
    denom = w.sum(axis=-1)
    num = np.einsum("tvf,tvf->tv", w, s)
    np.divide(num, denom, out=out)


def score_topk_pool(yb, frames, out, k):
    s = _frame_sims(yb, frames)
    nf = s.shape[-1]
    if not 1 <= k <= nf:
        raise ValueError(f"top-k needs 1 <= k <= {nf}, got {k}")
    idx = np.argpartition(s, nf - k, axis=-1)[..., nf - k:]
    top = np.take_along_axis(s, idx, axis=-1)
    np.mean(top, axis=-1, out=out)


def xpool_keys_values(frames, weights: FusionWeights):
    return frames @ weights.wk.data, frames @ weights.wv.data, frames.mean(axis=1)


def score_xpool(yb, keys, values, centers, weights: FusionWeights, out):
    d = yb.shape[-1]
    q = yb @ weights.wq.data
    logits = np.einsum("td,vfd->tvf", q, keys, optimize=True)
    logits -= logits.max(axis=-1, keepdims=True)
    logits /= math.sqrt(d)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=-1, keepdims=True)
    pooled = np.matmul(logits.transpose(1, 0, 2), values)  # (Nv, nq, D)
    del logits
    z = pooled @ weights.wo.data
    del pooled
    z += centers[:, None, :]
    norms = np.sqrt(np.einsum("vtd,vtd->vt", z, z))
    np.divide(np.einsum("td,vtd->tv", yb, z), norms.T, out=out)


def score_xclip(tb, tmask, frames, out, temperature):
    nq, nw, d = tb.shape
    nv, nf, _ = frames.shape
    s = (tb.reshape(nq * nw, d) @ frames.reshape(nv * nf, d).T).reshape(nq, nw, nv, nf)
    m = s.max(axis=-1, keepdims=True)
    w = s - m
    del m
    w /= temperature
    np.exp(w, out=w)
    denom = w.sum(axis=-1)
    word = np.einsum("twvf,twvf->twv", w, s)
    del w, s
    word /= denom
    del denom
    if not tmask.any(axis=1).all():
        raise ValueError("every text query needs at least one word token")
    logits = np.where(tmask[:, :, None], word / temperature, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    np.einsum("twv,twv->tv", logits, word, out=out)


# differentiable versions (training) -----------------------------------------

def _tensor_frame_sims(y: Tensor, frames: Tensor) -> Tensor:
    # (Nv, Nf, D) @ (D, Nt) -> (Nv, Nf, Nt) -> (Nt, Nv, Nf)
    s = matmul(frames, swapaxes(y, -1, -2))
    return swapaxes(swapaxes(s, 0, 2), 1, 2)


def similarity_tensor(y: Tensor, frames: Tensor, strategy: str, params: FusionParams) -> Tensor:
    """Differentiable ``(Nt, Nv)`` similarity for unit-norm ``y`` and ``frames``."""
    if strategy == "mean_pool":
        x = l2_normalize(mean(frames, axis=1), axis=-1)
        return matmul(y, swapaxes(x, 0, 1))
    if strategy == "attention_pool":
        s = _tensor_frame_sims(y, frames)
        w = softmax(s * (1.0 / params.temperature), axis=-1)
        return tsum(w * s, axis=-1)
    if strategy == "topk_pool":
        s = _tensor_frame_sims(y, frames)
        idx = np.argsort(-s.data, axis=-1, kind="stable")[..., : params.topk]
        t, v = np.indices(idx.shape[:2])
        return mean(getitem(s, (t[..., None], v[..., None], idx)), axis=-1)
    if strategy == "xpool_style":
        w = params.weights
        d = y.shape[-1]
        nv, nf, _ = frames.shape
        q = matmul(y, w.wq)  # (Nt, D)
        keys = matmul(frames, w.wk)  # (Nv, Nf, D)
        values = matmul(frames, w.wv)
        logits = _tensor_frame_sims(q, keys) * (1.0 / math.sqrt(d))  # (Nt, Nv, Nf)
        a = softmax(logits, axis=-1)
        pooled = matmul(swapaxes(a, 0, 1), values)  # (Nv, Nt, D)
        z = matmul(pooled, w.wo) + reshape(mean(frames, axis=1), (nv, 1, d))
        z = l2_normalize(z, axis=-1)
        sims = tsum(z * reshape(y, (1, *y.shape)), axis=-1)  # (Nv, Nt)
        return swapaxes(sims, 0, 1)
    raise ValueError(f"strategy {strategy!r} cannot be used as a trainable pooling head")
