"""Symmetric contrastive objective, the combined objective, and the training loop."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import pool_video, sample_frame_indices
from .caption import caption_losses, tfidf_weights
from .core import (
    OptimizerState,
    Tape,
    Tensor,
    adamw_step,
    backward,
    clip_grad_norm,
    cosine_lr,
    exp,
    getitem,
    l2_normalize,
    log_softmax,
    make_rng,
    matmul,
    mean,
    swapaxes,
    tsum,
)
from .evaluation import evaluate, token_ids
from .model import Model, ModelConfig, build_model
from .retrieval.fusion import similarity_tensor
from .retrieval import FusionParams


class TrainingError(RuntimeError):
    def __init__(self, message: str, batch_id: int | None = None):
        super().__init__(message)
        self.batch_id = batch_id


@dataclass
class TrainConfig:
    lam: float = 0.5
    k: int = 3
    num_frames: int = 6
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0
    data_seed: int = 0
    clip_norm: float = 1.0
    use_cube: bool = True
    use_aggregation: bool = True
    use_caption: bool = True
    hard_mask: bool = False
    eval_every: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 1 <= self.k <= self.num_frames:
            raise ValueError(f"k={self.k} must be in [1, {self.num_frames}]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")


@dataclass
class Batch:
    frames: np.ndarray  # (B, Nf, H, W, C) uint8
    ids: np.ndarray  # (B, T) padded token ids
    batch_id: int = 0

    def __post_init__(self):
        if len(self.frames) < 1 or len(self.frames) != len(self.ids):
            raise ValueError("a batch needs B >= 1 aligned (video, caption) pairs")


@dataclass
class LossParts:
    total: Tensor
    l_con: float
    l_cap: float


def _scale(tau=None, logit_scale=None):
    if logit_scale is not None:
        return exp(logit_scale)
    if tau is None or tau <= 0:
        raise ValueError("temperature must be positive")
    return 1.0 / tau


def infonce(sim, scale) -> Tensor:
    """Symmetric InfoNCE over a ``(B, B)`` video-by-text similarity matrix."""
    b = sim.shape[0]
    if b == 0:
        raise ValueError("contrastive loss needs B >= 1")
    logits = sim * scale
    diag = (np.arange(b), np.arange(b))
    l_v2t = -mean(getitem(log_softmax(logits, axis=1), diag))
    l_t2v = -mean(getitem(log_softmax(logits, axis=0), diag))
    return (l_v2t + l_t2v) * 0.5


def contrastive_loss(X, Y, tau: float | None = None, logit_scale: Tensor | None = None) -> Tensor:
    """Symmetric InfoNCE between video rows ``X`` and text rows ``Y``.

    Rows of ``X`` are re-normalized so the similarity is a cosine.  Pass
    either a fixed ``tau`` or a learnable ``logit_scale`` (1/tau = exp(s)).
    """
    if X.shape[0] == 0:
        raise ValueError("contrastive loss needs B >= 1")
    x = l2_normalize(X, axis=-1)
    return infonce(matmul(x, swapaxes(Y, 0, 1)), _scale(tau, logit_scale))


def _video_text_sims(prompts: Tensor, y: Tensor, model: Model, k: int, rng) -> Tensor:
    pooling = model.config.pooling
    if pooling == "mean_pool":
        x = pool_video(prompts, k, training=True, rng=rng)
        return matmul(l2_normalize(x, axis=-1), swapaxes(y, 0, 1))
    unit = l2_normalize(prompts, axis=-1)
    b, nf = unit.shape[0], unit.shape[1]
    if k < nf:
        idx = sample_frame_indices(b, nf, k, rng)
        unit = getitem(unit, (np.arange(b)[:, None], idx))
    params = FusionParams(weights=model.fusion)
    return swapaxes(similarity_tensor(y, unit, pooling, params), 0, 1)


def total_loss(batch: Batch, model: Model, config: TrainConfig, table=None,
               rng: np.random.Generator | None = None) -> LossParts:
    """L = L_con + lam * L_cap (exactly L_con when the caption loss is off)."""
    from .text import encode_text

    rng = rng if rng is not None else make_rng(config.seed, "pool", batch.batch_id)
    prompts = model.video.prompts(batch.frames)
    y = encode_text(batch.ids, model.text, model.config.text)
    l_con = infonce(_video_text_sims(prompts, y, model, config.k, rng), exp(model.logit_scale))
    if not (config.use_caption and model.head is not None):
        return LossParts(l_con, l_con.item(), 0.0)
    if table is None:
        raise ValueError("the caption loss needs a token weight table")
    per, _ = caption_losses(batch.ids, prompts, model.head, table, model.config.caption, config.hard_mask)
    l_cap = mean(per)
    return LossParts(l_con + l_cap * config.lam, l_con.item(), l_cap.item())


def sample_training_frames(frames: np.ndarray, num_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Interval sampling: every ``F // Nf``-th frame from a random start, per clip."""
    total = frames.shape[1]
    if total % num_frames:
        raise ValueError(f"{total} frames cannot be interval-sampled down to {num_frames}")
    stride = total // num_frames
    starts = rng.integers(0, stride, size=len(frames))
    idx = starts[:, None] + stride * np.arange(num_frames)[None, :]
    return frames[np.arange(len(frames))[:, None], idx]


def model_config_for(config: TrainConfig, vocab_size: int, base: ModelConfig | None = None) -> ModelConfig:
    base = base or ModelConfig()
    fields = base.to_dict()
    fields.update(vocab_size=vocab_size, num_frames=config.num_frames, use_cube=config.use_cube,
                  use_aggregation=config.use_aggregation, use_caption=config.use_caption)
    return ModelConfig(**fields)


@dataclass
class TrainResult:
    model: Model
    log: list = field(default_factory=list)
    checkpoint: Path | None = None


def _decay_mask(params: list[Tensor]) -> list[bool]:
    return [p.data.ndim >= 2 for p in params]


def train_step(model: Model, batch: Batch, config: TrainConfig, table, opt: OptimizerState,
               lr_t: float, rng) -> LossParts:
    named = model.parameters()
    params = list(named.values())
    try:
        with Tape() as tape:
            parts = total_loss(batch, model, config, table, rng)
        grads = backward(parts.total, tape, params)
        g = [grads[p] for p in params]
        if not all(np.isfinite(x).all() for x in g):
            raise FloatingPointError("non-finite gradient")
    except FloatingPointError as err:
        raise TrainingError(f"non-finite value in batch {batch.batch_id}: {err}", batch.batch_id) from err
    if config.clip_norm > 0:
        g, _ = clip_grad_norm(g, config.clip_norm)
    adamw_step(params, g, opt, lr_t=lr_t, decay_mask=_decay_mask(params))
    model.clamp_temperature()
    return parts


def train(config: TrainConfig, corpus, out_dir=None, model_config: ModelConfig | None = None,
          log_fn=None) -> TrainResult:
    """Seeded training loop; logs per-epoch losses and held-out R@1.

    ``corpus`` is a ``SyntheticCorpus``.  With ``out_dir`` the run writes
    ``metrics.jsonl`` and a final ``model.ckpt``.
    """
    if len(corpus.train_ids) == 0:
        raise ValueError("training split is empty")
    mcfg = model_config_for(config, len(corpus.vocab), model_config)
    model = build_model(mcfg, seed=config.seed)
    train_frames, train_caps = corpus.subset(corpus.train_ids)
    train_ids = token_ids(train_caps, corpus.vocab, mcfg.max_len)
    val_frames, val_caps = corpus.subset(corpus.val_ids)
    val_ids = token_ids(val_caps, corpus.vocab, mcfg.max_len) if len(val_caps) else None
    table = tfidf_weights(train_caps, corpus.vocab) if config.use_caption else None

    params = list(model.parameters().values())
    opt = OptimizerState.for_params(params, lr=config.lr, weight_decay=config.weight_decay)
    n = len(train_caps)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text("", encoding="utf-8")

    log = []
    step = 0
    for epoch in range(config.epochs):
        order = make_rng(config.seed, "shuffle", epoch).permutation(n)
        frame_rng = make_rng(config.seed, "frames", epoch)
        con, cap = [], []
        lr_t = config.lr
        for b in range(steps_per_epoch):
            sel = order[b * config.batch_size:(b + 1) * config.batch_size]
            frames = sample_training_frames(train_frames[sel], config.num_frames, frame_rng)
            ids = train_ids[sel]
            ids = ids[:, : int((ids != 0).sum(axis=1).max())]
            batch = Batch(frames, ids, batch_id=step)
            lr_t = cosine_lr(step, total_steps, config.lr)
            parts = train_step(model, batch, config, table, opt, lr_t, make_rng(config.seed, "pool", step))
            con.append(parts.l_con)
            cap.append(parts.l_cap)
            step += 1
        row = {"epoch": epoch + 1, "l_con": float(np.mean(con)), "l_cap": float(np.mean(cap)), "lr": lr_t,
               "r1_t2v": float("nan"), "r1_v2t": float("nan")}
        last = epoch + 1 == config.epochs
        if val_ids is not None and (last or (config.eval_every and (epoch + 1) % config.eval_every == 0)):
            m = evaluate(model, val_frames, val_ids)
            row["r1_t2v"], row["r1_v2t"] = m["t2v_r1"], m["v2t_r1"]
        log.append(row)
        if out is not None:
            with open(out / "metrics.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        if log_fn is not None:
            log_fn(row)

    ckpt = None
    if out is not None:
        ckpt = out / "model.ckpt"
        model.save(ckpt)
    return TrainResult(model, log, ckpt)


def train_config_dict(config: TrainConfig) -> dict:
    return asdict(config)
