"""Offline retrieval index and online block-wise ranking."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fusion
from .fusion import STRATEGIES, TEXT_AGNOSTIC, FusionParams

QUERY_BLOCK = 64


@dataclass
class RetrievalIndex:
    strategy: str
    texts: np.ndarray  # (Nt, D)
    frames: np.ndarray | None = None  # (Nv, Nf, D)
    pooled: np.ndarray | None = None  # (Nv, D)
    tokens: np.ndarray | None = None  # (Nt, Nw, D)
    token_mask: np.ndarray | None = None  # (Nt, Nw)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if (self.pooled is not None) != (self.strategy in TEXT_AGNOSTIC):
            raise ValueError("pooled vectors are stored iff the strategy is text-agnostic")
        for name in ("texts", "frames", "pooled", "tokens"):
            arr = getattr(self, name)
            if arr is not None and not np.isfinite(arr).all():
                raise ValueError(f"index {name} contain non-finite values")

    @property
    def num_videos(self) -> int:
        return len(self.pooled) if self.pooled is not None else len(self.frames)

    @property
    def num_texts(self) -> int:
        return len(self.texts)

    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.texts, self.frames, self.pooled, self.tokens) if a is not None)


def pool_frames(frames: np.ndarray) -> np.ndarray:
    """Normalized mean of unit frame vectors, one row per video."""
    x = frames.mean(axis=1)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise FloatingPointError("pooled video vector has zero norm")
    return x / norms


def index_from_features(strategy: str, frames: np.ndarray, texts: np.ndarray,
                        tokens: np.ndarray | None = None, token_mask: np.ndarray | None = None) -> RetrievalIndex:
    """Keep exactly what ``strategy`` needs online; pooling happens here, offline."""
    if strategy in TEXT_AGNOSTIC:
        return RetrievalIndex(strategy, texts=texts, pooled=pool_frames(frames))
    if strategy == "xclip_style":
        if tokens is None:
            raise ValueError("xclip_style needs per-token text vectors")
        if token_mask is None:
            token_mask = np.ones(tokens.shape[:2], dtype=bool)
        return RetrievalIndex(strategy, texts=texts, frames=frames, tokens=tokens, token_mask=token_mask)
    return RetrievalIndex(strategy, texts=texts, frames=frames)


def score(index: RetrievalIndex, strategy: str, params: FusionParams | None = None,
          block: int = QUERY_BLOCK, out: np.ndarray | None = None, workers: int = 1) -> np.ndarray:
    """Similarity matrix ``(Nt, Nv)`` computed one query block at a time."""
    if index.strategy != strategy:
        raise ValueError(f"index was built for {index.strategy!r}, not {strategy!r}")
    params = params or FusionParams()
    nt, nv = index.num_texts, index.num_videos
    if out is None:
        out = np.empty((nt, nv))
    elif out.shape != (nt, nv):
        raise ValueError(f"output buffer must be {(nt, nv)}")

    if strategy == "mean_pool":
        def run(lo, hi):
            fusion.score_mean_pool(index.texts[lo:hi], index.pooled, out[lo:hi])
    elif strategy == "attention_pool":
        def run(lo, hi):
            fusion.score_attention_pool(index.texts[lo:hi], index.frames, out[lo:hi], params.temperature)
    elif strategy == "topk_pool":
        def run(lo, hi):
            fusion.score_topk_pool(index.texts[lo:hi], index.frames, out[lo:hi], params.topk)
    elif strategy == "xpool_style":
        if params.weights is None:
            raise ValueError("xpool_style needs projection weights")
        keys, values, centers = fusion.xpool_keys_values(index.frames, params.weights)

        def run(lo, hi):
            fusion.score_xpool(index.texts[lo:hi], keys, values, centers, params.weights, out[lo:hi])
    else:
        def run(lo, hi):
            fusion.score_xclip(index.tokens[lo:hi], index.token_mask[lo:hi], index.frames, out[lo:hi],
                               params.temperature)

    spans = [(lo, min(lo + block, nt)) for lo in range(0, nt, block)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda s: run(*s), spans))
    else:
        for lo, hi in spans:
            run(lo, hi)
    return out


def order_candidates(sim: np.ndarray) -> np.ndarray:
    """Candidate ids per query by descending score; ties go to the lower id."""
    return np.argsort(-sim, axis=1, kind="stable")


def rank(index: RetrievalIndex, strategy: str, params: FusionParams | None = None,
         block: int = QUERY_BLOCK, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    sim = score(index, strategy, params, block=block, workers=workers)
    return sim, order_candidates(sim)
