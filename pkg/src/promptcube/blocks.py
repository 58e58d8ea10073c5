"""Shared transformer blocks and parameter bookkeeping."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import (
    AttentionWeights,
    Tensor,
    gelu,
    layer_norm,
    linear,
    multi_head_attention,
)

INIT_STD = 0.02


class ParamFactory:
    """Draws initial parameter values from one generator in call order."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def normal(self, *shape, std=INIT_STD) -> Tensor:
        return Tensor(self.rng.normal(0.0, std, size=shape), requires_grad=True)

    def matrix(self, fan_in: int, fan_out: int) -> Tensor:
        """Projection weights with variance 1/fan_in, so activations keep their scale."""
        return self.normal(fan_in, fan_out, std=fan_in ** -0.5)

    def zeros(self, *shape) -> Tensor:
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(self, *shape) -> Tensor:
        return Tensor(np.ones(shape), requires_grad=True)

    def attention(self, dim: int, zero_output=False) -> AttentionWeights:
        wo = self.zeros(dim, dim) if zero_output else self.matrix(dim, dim)
        return AttentionWeights(
            wq=self.matrix(dim, dim), bq=self.zeros(dim),
            wk=self.matrix(dim, dim), bk=self.zeros(dim),
            wv=self.matrix(dim, dim), bv=self.zeros(dim),
            wo=wo, bo=self.zeros(dim),
        )


@dataclass
class BlockWeights:
    """Pre-norm encoder block: attention then a GELU MLP, both residual."""

    ln1_g: Tensor
    ln1_b: Tensor
    attn: AttentionWeights
    ln2_g: Tensor
    ln2_b: Tensor
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    @classmethod
    def init(cls, f: ParamFactory, dim: int, mlp_ratio: int = 4) -> "BlockWeights":
        hidden = dim * mlp_ratio
        return cls(
            ln1_g=f.ones(dim), ln1_b=f.zeros(dim), attn=f.attention(dim),
            ln2_g=f.ones(dim), ln2_b=f.zeros(dim),
            fc1_w=f.matrix(dim, hidden), fc1_b=f.zeros(hidden),
            fc2_w=f.matrix(hidden, dim), fc2_b=f.zeros(dim),
        )


def mlp(x, w1, b1, w2, b2) -> Tensor:
    return linear(gelu(linear(x, w1, b1)), w2, b2)


def encoder_block(x, w: BlockWeights, heads: int, mask=None) -> Tensor:
    h = layer_norm(x, w.ln1_g, w.ln1_b)
    x = x + multi_head_attention(h, h, h, w.attn, heads, mask)
    h = layer_norm(x, w.ln2_g, w.ln2_b)
    return x + mlp(h, w.fc1_w, w.fc1_b, w.fc2_w, w.fc2_b)


@dataclass
class DecoderBlockWeights:
    ln1_g: Tensor
    ln1_b: Tensor
    self_attn: AttentionWeights
    ln2_g: Tensor
    ln2_b: Tensor
    cross_attn: AttentionWeights
    ln3_g: Tensor
    ln3_b: Tensor
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    @classmethod
    def init(cls, f: ParamFactory, dim: int, mlp_ratio: int = 4) -> "DecoderBlockWeights":
        hidden = dim * mlp_ratio
        return cls(
            ln1_g=f.ones(dim), ln1_b=f.zeros(dim), self_attn=f.attention(dim),
            ln2_g=f.ones(dim), ln2_b=f.zeros(dim), cross_attn=f.attention(dim),
            ln3_g=f.ones(dim), ln3_b=f.zeros(dim),
            fc1_w=f.matrix(dim, hidden), fc1_b=f.zeros(hidden),
            fc2_w=f.matrix(hidden, dim), fc2_b=f.zeros(dim),
        )


def decoder_block(x, memory, w: DecoderBlockWeights, heads: int, self_mask) -> Tensor:
    h = layer_norm(x, w.ln1_g, w.ln1_b)
    x = x + multi_head_attention(h, h, h, w.self_attn, heads, self_mask)
    h = layer_norm(x, w.ln2_g, w.ln2_b)
    x = x + multi_head_attention(h, memory, memory, w.cross_attn, heads)
    h = layer_norm(x, w.ln3_g, w.ln3_b)
    return x + mlp(h, w.fc1_w, w.fc1_b, w.fc2_w, w.fc2_b)


def named_parameters(obj, prefix: str = "", _seen=None) -> dict[str, Tensor]:
    """Flatten nested dataclasses / lists of Tensors into ``{dotted.name: Tensor}``.

    A tensor reachable along several paths is listed once, under the first.
    """
    seen = set() if _seen is None else _seen
    out: dict[str, Tensor] = {}
    if isinstance(obj, Tensor):
        if id(obj) not in seen:
            seen.add(id(obj))
            out[prefix] = obj
    elif dataclasses.is_dataclass(obj):
        for fld in dataclasses.fields(obj):
            if fld.metadata.get("shared"):
                continue
            name = f"{prefix}.{fld.name}" if prefix else fld.name
            out.update(named_parameters(getattr(obj, fld.name), name, seen))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.update(named_parameters(item, f"{prefix}.{i}", seen))
    return out
