"""Frame patchification and the ViT encoder with a switched prompt cube."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockWeights, ParamFactory, encoder_block
from .core import Tensor, broadcast_to, concat, getitem, linear, reshape, swapaxes, transpose

BASELINE = "baseline"
PROMPT_SWITCH = "prompt_switch"
MODES = (BASELINE, PROMPT_SWITCH)

PIXEL_MEAN = 0.5
PIXEL_STD = 0.5


@dataclass
class VideoClip:
    frames: np.ndarray  # (Nf, H, W, C) uint8
    clip_id: str = ""

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[0] == 0:
            raise ValueError(f"clip frames must be (Nf>0, H, W, C), got {self.frames.shape}")


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    heads: int = 4
    layers: int = 4
    patch: int = 8
    height: int = 32
    width: int = 32
    channels: int = 3
    num_frames: int = 6
    mlp_ratio: int = 4

    @property
    def num_patches(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def seq_len(self) -> int:
        return self.num_patches + 1


@dataclass
class EncoderWeights:
    patch_w: Tensor  # (patch*patch*C, D)
    patch_b: Tensor
    cls: Tensor
    pos: Tensor  # (L, D)
    layers: list
    cube: Tensor  # (Nf, Nf, D)
    ln_post_g: Tensor
    ln_post_b: Tensor

    @classmethod
    def init(cls, f: ParamFactory, cfg: EncoderConfig) -> "EncoderWeights":
        if cfg.layers < 2:
            raise ValueError("the encoder needs at least two layers")
        d = cfg.dim
        return cls(
            patch_w=f.matrix(cfg.patch * cfg.patch * cfg.channels, d),
            patch_b=f.zeros(d),
            cls=f.normal(d),
            pos=f.normal(cfg.seq_len, d),
            layers=[BlockWeights.init(f, d, cfg.mlp_ratio) for _ in range(cfg.layers)],
            cube=f.normal(cfg.num_frames, cfg.num_frames, d),
            ln_post_g=f.ones(d),
            ln_post_b=f.zeros(d),
        )


@dataclass
class FrameBundle:
    patches: Tensor  # V: (..., Nf, L, D)
    cube: Tensor | None  # (..., Nf, Nf, D)
    layer: int = 0


def cube_parameter_count(num_frames: int, dim: int) -> int:
    return num_frames * num_frames * dim


def normalize_pixels(frames) -> Tensor:
    """uint8 pixels -> [0, 1] -> standardized with mean/std 0.5."""
    if isinstance(frames, VideoClip):
        frames = frames.frames
    arr = np.asarray(frames, dtype=np.float64) / 255.0
    return Tensor((arr - PIXEL_MEAN) / PIXEL_STD)


def patchify(frames, weights: EncoderWeights, cfg: EncoderConfig) -> Tensor:
    """Embed frames into ``(..., Nf, L, D)`` token rows (CLS first).

    ``frames`` is a clip, a raw uint8 array ``(..., Nf, H, W, C)``, or a
    Tensor of already-standardized pixels (used for sensitivity probes).
    """
    pixels = frames if isinstance(frames, Tensor) else normalize_pixels(frames)
    *lead, h, w, c = pixels.shape
    p = cfg.patch
    if h % p or w % p:
        raise ValueError(f"frame size {h}x{w} is not divisible by patch size {p}")
    gh, gw = h // p, w // p
    n = len(lead)
    grid = reshape(pixels, (*lead, gh, p, gw, p, c))
    axes = list(range(n)) + [n, n + 2, n + 1, n + 3, n + 4]
    flat = reshape(transpose(grid, axes), (*lead, gh * gw, p * p * c))
    tokens = linear(flat, weights.patch_w, weights.patch_b)
    cls = broadcast_to(weights.cls, (*lead, 1, cfg.dim))
    seq = concat([cls, tokens], axis=-2)
    return seq + weights.pos


def prompt_switch(cube: Tensor) -> Tensor:
    """Exchange the temporal and spatial axes of the cube: out[i, j] = in[j, i]."""
    if cube.shape[-3] != cube.shape[-2]:
        raise ValueError(f"prompt cube must be square in its first two axes, got {cube.shape}")
    return swapaxes(cube, -3, -2)


def _cube_blind_mask(seq_len: int, num_frames: int) -> np.ndarray:
    total = seq_len + num_frames
    mask = np.ones((total, total), dtype=bool)
    mask[:seq_len, seq_len:] = False
    return mask


def encoder_layer(bundle: FrameBundle, w: BlockWeights, mode: str, heads: int,
                  mask_cube: bool = False) -> FrameBundle:
    """One encoder block.

    In ``prompt_switch`` mode the cube is transposed, appended to every
    frame's token rows and attended jointly within that frame.
    ``mask_cube`` hides the cube columns from the patch rows; it exists for
    the equivalence check against the baseline path.
    """
    v = bundle.patches
    if mode == BASELINE:
        return FrameBundle(encoder_block(v, w, heads), None, bundle.layer + 1)
    if mode != PROMPT_SWITCH:
        raise ValueError(f"unknown encoder mode {mode!r}")
    cube = prompt_switch(bundle.cube)
    seq_len = v.shape[-2]
    nf = cube.shape[-2]
    mask = _cube_blind_mask(seq_len, nf) if mask_cube else None
    out = encoder_block(concat([v, cube], axis=-2), w, heads, mask)
    lead = (slice(None),) * (out.ndim - 2)
    new_v = getitem(out, (*lead, slice(0, seq_len)))
    new_cube = getitem(out, (*lead, slice(seq_len, seq_len + nf)))
    return FrameBundle(new_v, new_cube, bundle.layer + 1)


def encode_video(frames, weights: EncoderWeights, cfg: EncoderConfig, mode: str = PROMPT_SWITCH,
                 mask_cube: bool = False) -> tuple[Tensor, Tensor | None]:
    """Return per-frame CLS rows ``(..., Nf, D)`` and the final cube."""
    v = patchify(frames, weights, cfg)
    nf = v.shape[-3]
    cube = None
    if mode == PROMPT_SWITCH:
        if nf != weights.cube.shape[0]:
            raise ValueError(f"clip has {nf} frames but the prompt cube expects {weights.cube.shape[0]}")
        cube = broadcast_to(weights.cube, (*v.shape[:-3], nf, nf, cfg.dim))
    bundle = FrameBundle(v, cube)
    for w in weights.layers:
        bundle = encoder_layer(bundle, w, mode, cfg.heads, mask_cube)
    lead = (slice(None),) * (bundle.patches.ndim - 2)
    cls = getitem(bundle.patches, (*lead, 0))
    return cls, bundle.cube
