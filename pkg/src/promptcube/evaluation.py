"""Embedding videos and captions with a trained model, and scoring retrieval.

Nothing here touches the caption head: it is a training signal only.
"""

from __future__ import annotations

import numpy as np

from .core import no_grad
from .model import Model
from .retrieval import FusionParams, RetrievalIndex, index_from_features, retrieval_summary, score
from .retrieval.fusion import TEXT_AGNOSTIC
from .text import TextConfig, TextWeights, Vocabulary, encode_text, encode_text_tokens, pad_batch, tokenize
from .video import VideoClip

EMBED_BATCH = 16


def _frames_array(videos) -> np.ndarray:
    if isinstance(videos, np.ndarray):
        return videos
    return np.stack([v.frames if isinstance(v, VideoClip) else np.asarray(v) for v in videos])


def embed_videos(model: Model, videos, batch: int = EMBED_BATCH) -> np.ndarray:
    """Unit-norm prompt vectors ``(N, F, D)``; ``F`` may be any multiple of ``Nf``."""
    frames = _frames_array(videos)
    out = []
    with no_grad():
        for lo in range(0, len(frames), batch):
            p = model.video.prompts_chunked(frames[lo:lo + batch]).data
            out.append(p / np.linalg.norm(p, axis=-1, keepdims=True))
    return np.concatenate(out)


def token_ids(captions, vocab: Vocabulary, max_len: int) -> np.ndarray:
    return pad_batch([tokenize(c, vocab, max_len) for c in captions])


def embed_texts(text: TextWeights, cfg: TextConfig, ids: np.ndarray, with_tokens: bool = False,
                batch: int = 256):
    """Unit-norm caption vectors ``(N, D)``; optionally per-token vectors and word mask."""
    feats, toks, masks = [], [], []
    with no_grad():
        for lo in range(0, len(ids), batch):
            chunk = ids[lo:lo + batch]
            feats.append(encode_text(chunk, text, cfg).data)
            if with_tokens:
                t, m = encode_text_tokens(chunk, text, cfg)
                toks.append(t.data)
                masks.append(m)
    y = np.concatenate(feats)
    if not with_tokens:
        return y
    return y, np.concatenate(toks), np.concatenate(masks)


def fusion_params(model: Model) -> FusionParams:
    return FusionParams(weights=model.fusion)


def build_index(videos, texts, model: Model, strategy: str | None = None) -> RetrievalIndex:
    """Offline index for ``strategy`` (default: the model's own pooling).

    ``texts`` is a padded caption id array (see ``token_ids``).
    """
    strategy = strategy or model.config.pooling
    ids = np.asarray(texts)
    frames = embed_videos(model, videos)
    if strategy == "xclip_style":
        y, toks, mask = embed_texts(model.text, model.config.text, ids, with_tokens=True)
        return index_from_features(strategy, frames, y, toks, mask)
    y = embed_texts(model.text, model.config.text, ids)
    return index_from_features(strategy, frames, y)


def similarity(model: Model, videos, ids: np.ndarray, strategy: str | None = None) -> np.ndarray:
    """Text-by-video similarity matrix ``(Nt, Nv)``."""
    strategy = strategy or model.config.pooling
    if strategy == "xpool_style" and model.fusion is None:
        raise ValueError("xpool_style scoring needs a model trained with that pooling head")
    index = build_index(videos, ids, model, strategy)
    return score(index, strategy, fusion_params(model))


def evaluate(model: Model, videos, ids: np.ndarray, strategy: str | None = None) -> dict[str, float]:
    """Retrieval metrics for aligned (video i, caption i) pairs."""
    return retrieval_summary(similarity(model, videos, ids, strategy))


def is_text_agnostic(strategy: str) -> bool:
    return strategy in TEXT_AGNOSTIC
