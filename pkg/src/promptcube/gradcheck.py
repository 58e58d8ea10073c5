"""Central finite-difference check of the full training loss against autodiff."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .caption import tfidf_weights
from .core import Tape, backward, make_rng
from .corpus import generate_corpus
from .evaluation import token_ids
from .model import Model, ModelConfig, build_model
from .training import Batch, TrainConfig, sample_training_frames, total_loss

STEP = 1e-4
TOLERANCE = 1e-3
# Gradients smaller than this are compared in absolute terms; both routes
# agree to ~1e-9 there and a ratio would only measure rounding noise.
FLOOR = 1e-6


@dataclass
class GroupResult:
    name: str
    entries: int
    max_rel_err: float


def relative_error(analytic: float, numeric: float, floor: float = FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def toy_problem(seed: int = 0, pairs: int = 2, pooling: str = "mean_pool",
                base: ModelConfig | None = None) -> tuple[Model, Batch, TrainConfig, object]:
    """Full model (cube, aggregation, caption head) and a small batch.

    Zero-initialized output projections are perturbed so the paths behind
    them carry gradient and are actually checked.
    """
    corpus = generate_corpus(seed, 8, n_val=0)
    tcfg = TrainConfig(seed=seed)
    fields = (base or ModelConfig()).to_dict()
    fields.update(vocab_size=len(corpus.vocab), pooling=pooling)
    model = build_model(ModelConfig(**fields), seed=seed)
    rng = make_rng(seed, "gradcheck", "perturb")
    live = [model.video.aggregation.attn.wo, model.video.aggregation.attn.bo] if model.video.aggregation else []
    if model.fusion is not None:
        live.append(model.fusion.wo)
    for p in live:
        p.data = rng.normal(0.0, 0.02, size=p.data.shape)
    frames, caps = corpus.subset(range(pairs))
    frames = sample_training_frames(frames, tcfg.num_frames, make_rng(seed, "gradcheck", "frames"))
    batch = Batch(frames, token_ids(caps, corpus.vocab, fields["max_len"]))
    return model, batch, tcfg, tfidf_weights(corpus.captions, corpus.vocab)


def run_gradcheck(seed: int = 0, probes: int = 3, pooling: str = "mean_pool", step: float = STEP,
                  report=None) -> list[GroupResult]:
    """Compare autodiff and central differences on ``probes`` entries per parameter tensor.

    One probe is the entry with the largest analytic gradient; the rest are
    drawn at random.  The frame-subsampling rng is re-seeded for every
    evaluation so all loss calls see the same subset.
    """
    model, batch, tcfg, table = toy_problem(seed, pooling=pooling)
    named = model.parameters()

    def loss_value() -> float:
        return total_loss(batch, model, tcfg, table, make_rng(seed, "gradcheck", "pool")).total.item()

    with Tape() as tape:
        loss = total_loss(batch, model, tcfg, table, make_rng(seed, "gradcheck", "pool")).total
    grads = backward(loss, tape, list(named.values()))
    pick = make_rng(seed, "gradcheck", "entries")
    results = []
    for name, p in named.items():
        g = grads[p]
        flat = p.data.reshape(-1)
        chosen = {int(np.argmax(np.abs(g)))}
        extra = pick.choice(flat.size, size=min(probes - 1, flat.size), replace=False)
        chosen.update(int(i) for i in extra)
        worst = 0.0
        for i in sorted(chosen):
            old = flat[i]
            flat[i] = old + step
            up = loss_value()
            flat[i] = old - step
            down = loss_value()
            flat[i] = old
            worst = max(worst, relative_error(g.reshape(-1)[i], (up - down) / (2 * step)))
        results.append(GroupResult(name, len(chosen), worst))
        if report is not None:
            report(results[-1])
    return results
