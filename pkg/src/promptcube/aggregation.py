"""CLS-guided readout of the prompt cube and normalized mean pooling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AttentionWeights, Tensor, concat, getitem, l2_normalize, layer_norm, mean, multi_head_attention, reshape
from .video import EncoderConfig, EncoderWeights, PROMPT_SWITCH, VideoClip, encode_video


@dataclass
class AggregationWeights:
    attn: AttentionWeights
    # the encoder's final LN, shared rather than copied
    ln_g: Tensor = field(metadata={"shared": True})
    ln_b: Tensor = field(metadata={"shared": True})

    @classmethod
    def init(cls, f, encoder: EncoderWeights, dim: int) -> "AggregationWeights":
        return cls(attn=f.attention(dim, zero_output=True), ln_g=encoder.ln_post_g, ln_b=encoder.ln_post_b)


def aggregate_frames(cls: Tensor, cube: Tensor, weights: AggregationWeights, heads: int) -> Tensor:
    """Per-frame prompt vectors ``LN(c_i + MHA(c_i, P_flat, P_flat))``.

    ``cls`` is ``(..., Nf, D)`` and ``cube`` ``(..., Nf, Nf, D)``; the cube is
    flattened over its first two axes to form keys and values.
    """
    *lead, nf, d = cls.shape
    if cube.shape[-3:] != (nf, nf, d):
        raise ValueError(f"cube shape {cube.shape} does not match CLS rows {cls.shape}")
    flat = reshape(cube, (*lead, nf * nf, d))
    return layer_norm(cls + multi_head_attention(cls, flat, flat, weights.attn, heads), weights.ln_g, weights.ln_b)


def plain_prompts(cls: Tensor, ln_g: Tensor, ln_b: Tensor) -> Tensor:
    """The unaggregated path: final LN applied to each CLS row."""
    return layer_norm(cls, ln_g, ln_b)


def sample_frame_indices(batch: int, num_frames: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct frame indices per video, uniform over all k-subsets."""
    if not 1 <= k <= num_frames:
        raise ValueError(f"k={k} must be in [1, {num_frames}]")
    return np.stack([np.sort(rng.choice(num_frames, size=k, replace=False)) for _ in range(batch)])


def pool_video(prompts: Tensor, k: int | None = None, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
    """Average of unit-normalized prompt rows over the frame axis (-2).

    When ``training`` a random subset of ``k`` rows per video is used;
    otherwise all rows are averaged and ``k`` is ignored.
    """
    unit = l2_normalize(prompts, axis=-1)
    if not training:
        return mean(unit, axis=-2)
    nf = prompts.shape[-2]
    if k is None or not 1 <= k <= nf:
        raise ValueError(f"k={k} must be in [1, {nf}]")
    if k == nf:
        return mean(unit, axis=-2)
    if rng is None:
        raise ValueError("training-time pooling needs an rng")
    squeeze = unit.ndim == 2
    if squeeze:
        unit = reshape(unit, (1, *unit.shape))
    idx = sample_frame_indices(unit.shape[0], nf, k, rng)
    picked = getitem(unit, (np.arange(unit.shape[0])[:, None], idx))
    pooled = mean(picked, axis=-2)
    return reshape(pooled, pooled.shape[1:]) if squeeze else pooled


def interval_chunks(num_frames: int, chunk: int) -> list[np.ndarray]:
    """Strided chunks: chunk c takes frames c, c+n, c+2n, ... with n chunks."""
    if num_frames % chunk:
        raise ValueError(f"{num_frames} frames cannot be split into chunks of {chunk}")
    n = num_frames // chunk
    return [np.arange(c, num_frames, n) for c in range(n)]


def chunked_inference(clip, encoder: EncoderWeights, aggregation: AggregationWeights | None,
                      cfg: EncoderConfig, mode: str = PROMPT_SWITCH, chunks: int = 2) -> Tensor:
    """Video vector for a clip with ``chunks * Nf`` frames.

    Each interleaved chunk is encoded and aggregated separately, then all
    prompt vectors are pooled together.
    """
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    nf = cfg.num_frames
    if frames.shape[-4] != chunks * nf:
        raise ValueError(f"expected {chunks * nf} frames, got {frames.shape[-4]}")
    prompts = chunk_prompts(frames, encoder, aggregation, cfg, mode)
    return pool_video(prompts)


def chunk_prompts(frames: np.ndarray, encoder: EncoderWeights, aggregation: AggregationWeights | None,
                  cfg: EncoderConfig, mode: str = PROMPT_SWITCH) -> Tensor:
    """Prompt vectors ``(..., F, D)`` for ``F`` frames, encoded ``Nf`` at a time.

    Rows come back chunk by chunk (chunk 0 first), not in frame order.
    """
    total = frames.shape[-4]
    parts = []
    for idx in interval_chunks(total, cfg.num_frames):
        cls, cube = encode_video(np.take(frames, idx, axis=-4), encoder, cfg, mode)
        if aggregation is not None and cube is not None:
            parts.append(aggregate_frames(cls, cube, aggregation, cfg.heads))
        else:
            parts.append(plain_prompts(cls, encoder.ln_post_g, encoder.ln_post_b))
    return parts[0] if len(parts) == 1 else concat(parts, axis=-2)
