"""Auxiliary captioning decoder and its TF-IDF weighted teacher-forcing loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import DecoderBlockWeights, ParamFactory, decoder_block
from .core import Tensor, causal_mask, cross_entropy, getitem, layer_norm, linear, take_rows, tsum
from .text import BOS, PAD, TokenSequence, Vocabulary, pad_batch


@dataclass(frozen=True)
class CaptionConfig:
    dim: int = 64
    heads: int = 4
    layers: int = 3
    max_len: int = 16
    mlp_ratio: int = 4


@dataclass
class CaptionHeadWeights:
    tok_emb: Tensor
    pos: Tensor
    blocks: list
    ln_g: Tensor
    ln_b: Tensor
    out_w: Tensor
    out_b: Tensor

    @classmethod
    def init(cls, f: ParamFactory, cfg: CaptionConfig, vocab_size: int) -> "CaptionHeadWeights":
        if cfg.layers < 1:
            raise ValueError("the caption head needs at least one decoder block")
        d = cfg.dim
        return cls(
            tok_emb=f.normal(vocab_size, d),
            pos=f.normal(cfg.max_len, d, std=0.01),
            blocks=[DecoderBlockWeights.init(f, d, cfg.mlp_ratio) for _ in range(cfg.layers)],
            ln_g=f.ones(d),
            ln_b=f.zeros(d),
            out_w=f.matrix(d, vocab_size),
            out_b=f.zeros(vocab_size),
        )


@dataclass
class TokenWeightTable:
    weights: np.ndarray  # one nonnegative weight per vocabulary id

    def __post_init__(self):
        w = self.weights
        if w[PAD] != 0 or w[BOS] != 0 or np.any(w < 0) or not np.isfinite(w).all():
            raise ValueError("token weights must be finite, nonnegative, and zero for PAD/BOS")

    def lookup(self, ids, hard_mask: bool = False) -> np.ndarray:
        w = self.weights[np.asarray(ids)]
        return (w > 0).astype(np.float64) if hard_mask else w


def tfidf_weights(captions, vocab: Vocabulary) -> TokenWeightTable:
    """IDF over binary per-caption occurrence, max-normalized.

    Words found in every caption get exactly 0.  Ids that never occur in
    the corpus (EOS, UNK, unused words) get the maximum weight.
    """
    captions = list(captions)
    if not captions:
        raise ValueError("tf-idf needs a nonempty corpus")
    n = len(captions)
    df = np.zeros(len(vocab))
    for cap in captions:
        for tid in {vocab.id(w) for w in cap.lower().split()}:
            df[tid] += 1
    raw = np.zeros(len(vocab))
    seen = df > 0
    raw[seen] = np.log(n / df[seen])
    top = raw[seen].max() if seen.any() else 0.0
    raw[~seen] = top
    raw[PAD] = raw[BOS] = 0.0
    weights = raw / top if top > 0 else raw
    return TokenWeightTable(weights)


def caption_logits(ids, prompts: Tensor, head: CaptionHeadWeights, cfg: CaptionConfig) -> Tensor:
    """Next-token logits ``(B, T, V)`` for decoder inputs ``ids`` ``(B, T)``.

    ``prompts`` ``(B, Nf, D)`` are the cross-attention memory.
    """
    ids = np.asarray(ids, dtype=np.int64)
    t = ids.shape[1]
    if t > cfg.max_len:
        raise ValueError(f"caption length {t} exceeds max_len {cfg.max_len}")
    x = take_rows(head.tok_emb, ids) + getitem(head.pos, slice(0, t))
    mask = causal_mask(t)
    for blk in head.blocks:
        x = decoder_block(x, prompts, blk, cfg.heads, mask)
    x = layer_norm(x, head.ln_g, head.ln_b)
    return linear(x, head.out_w, head.out_b)


def caption_losses(ids, prompts: Tensor, head: CaptionHeadWeights, table: TokenWeightTable,
                   cfg: CaptionConfig, hard_mask: bool = False) -> tuple[Tensor, np.ndarray]:
    """Per-caption weighted teacher-forcing loss ``(B,)`` and a zero-weight flag per caption.

    The decoder reads the caption shifted right (starting at BOS) and each
    position is scored on the following token, weighted by that target's
    table entry; the weighted sum is divided by the weight sum.
    """
    ids = np.asarray(ids, dtype=np.int64)
    inputs, targets = ids[:, :-1], ids[:, 1:]
    nll = cross_entropy(caption_logits(inputs, prompts, head, cfg), targets)
    w = table.lookup(targets, hard_mask)
    total = w.sum(axis=1)
    empty = total == 0
    denom = np.where(empty, 1.0, total)
    return tsum(nll * (w / denom[:, None]), axis=1), empty


def caption_loss(tokens: TokenSequence, prompts: Tensor, head: CaptionHeadWeights, table: TokenWeightTable,
                 cfg: CaptionConfig, hard_mask: bool = False) -> tuple[Tensor, bool]:
    """Single-caption loss for prompts ``(Nf, D)``; returns ``(loss, all_weights_zero)``."""
    ids = pad_batch([tokens])
    mem = prompts if prompts.ndim == 3 else prompts.reshape(1, *prompts.shape)
    losses, empty = caption_losses(ids, mem, head, table, cfg, hard_mask)
    return losses.sum(), bool(empty[0])
