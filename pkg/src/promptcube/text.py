"""Closed-vocabulary tokenizer and the causal text encoder."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blocks import BlockWeights, ParamFactory, encoder_block
from .core import Tensor, causal_mask, getitem, l2_normalize, layer_norm, linear, take_rows

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocabulary:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens " + " ".join(RESERVED))
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def from_captions(cls, captions) -> "Vocabulary":
        words = sorted({w for c in captions for w in c.lower().split()})
        return cls(list(RESERVED) + [w for w in words if w not in RESERVED])

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)


@dataclass
class TokenSequence:
    ids: np.ndarray
    length: int

    def __post_init__(self):
        ids = self.ids
        if ids[0] != BOS or ids[self.length - 1] != EOS or np.any(ids[self.length:] != PAD):
            raise ValueError(f"malformed token sequence {ids.tolist()}")


def tokenize(caption: str, vocab: Vocabulary, max_len: int = 16) -> TokenSequence:
    if max_len < 2:
        raise ValueError("max_len must leave room for BOS and EOS")
    words = [vocab.id(w) for w in caption.lower().split()][: max_len - 2]
    ids = np.array([BOS, *words, EOS], dtype=np.int64)
    return TokenSequence(ids, len(ids))


def pad_batch(seqs, length: int | None = None) -> np.ndarray:
    length = length or max(s.length for s in seqs)
    out = np.full((len(seqs), length), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : s.length] = s.ids[: s.length]
    return out


@dataclass(frozen=True)
class TextConfig:
    dim: int = 64
    heads: int = 4
    layers: int = 2
    max_len: int = 16
    mlp_ratio: int = 4


@dataclass
class TextWeights:
    tok_emb: Tensor
    pos: Tensor
    layers: list
    ln_g: Tensor
    ln_b: Tensor
    proj: Tensor

    @classmethod
    def init(cls, f: ParamFactory, cfg: TextConfig, vocab_size: int) -> "TextWeights":
        d = cfg.dim
        return cls(
            tok_emb=f.normal(vocab_size, d),
            pos=f.normal(cfg.max_len, d, std=0.01),
            layers=[BlockWeights.init(f, d, cfg.mlp_ratio) for _ in range(cfg.layers)],
            ln_g=f.ones(d),
            ln_b=f.zeros(d),
            proj=f.matrix(d, d),
        )


def _as_ids(tokens) -> np.ndarray:
    if isinstance(tokens, TokenSequence):
        return tokens.ids[None, : tokens.length]
    if isinstance(tokens, (list, tuple)) and tokens and isinstance(tokens[0], TokenSequence):
        return pad_batch(tokens)
    ids = np.asarray(tokens, dtype=np.int64)
    return ids[None] if ids.ndim == 1 else ids


def text_hidden(ids: np.ndarray, weights: TextWeights, cfg: TextConfig) -> Tensor:
    """Final-LN hidden states ``(B, T, D)`` under a causal mask."""
    t = ids.shape[1]
    if t > cfg.max_len:
        raise ValueError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    x = take_rows(weights.tok_emb, ids) + getitem(weights.pos, slice(0, t))
    mask = causal_mask(t)
    for w in weights.layers:
        x = encoder_block(x, w, cfg.heads, mask)
    return layer_norm(x, weights.ln_g, weights.ln_b)


def eos_positions(ids: np.ndarray) -> np.ndarray:
    hits = ids == EOS
    if not hits.any(axis=1).all():
        raise ValueError("every sequence needs an EOS token")
    return hits.argmax(axis=1)


def encode_text(tokens, weights: TextWeights, cfg: TextConfig) -> Tensor:
    """Unit-norm text vectors ``(B, D)`` read out at each EOS position.

    Accepts one TokenSequence, a list of them, or a padded id array; the
    result always has a leading batch axis.
    """
    ids = _as_ids(tokens)
    h = text_hidden(ids, weights, cfg)
    rows = getitem(h, (np.arange(ids.shape[0]), eos_positions(ids)))
    return l2_normalize(linear(rows, weights.proj), axis=-1)


def encode_text_tokens(tokens, weights: TextWeights, cfg: TextConfig) -> tuple[Tensor, np.ndarray]:
    """Unit-norm per-token vectors ``(B, T, D)`` plus a mask of word positions."""
    ids = _as_ids(tokens)
    h = text_hidden(ids, weights, cfg)
    feats = l2_normalize(linear(h, weights.proj), axis=-1)
    mask = (ids != PAD) & (ids != BOS) & (ids != EOS)
    return feats, mask
