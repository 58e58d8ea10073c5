"""Analytic and measured cost of the online scoring stage per fusion strategy."""

from __future__ import annotations

import gc
import statistics
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from ..core import make_rng
from .fusion import TEXT_AGNOSTIC, FusionParams, FusionWeights, analytic_ops
from .index import QUERY_BLOCK, RetrievalIndex, pool_frames, score


@dataclass
class CostReport:
    strategy: str
    Nv: int
    Nt: int
    Nf: int
    Nw: int
    analytic_ops: int
    time_ms: float
    peak_bytes: int
    index_bytes: int = 0
    D: int = 64
    trials: int = 1
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


class PeakAllocation:
    """Peak traced heap growth inside a ``with`` scope (numpy buffers included)."""

    def __init__(self):
        self.peak = 0

    def __enter__(self):
        gc.collect()
        self._started = not tracemalloc.is_tracing()
        if self._started:
            tracemalloc.start()
        tracemalloc.reset_peak()
        self._base = tracemalloc.get_traced_memory()[0]
        return self

    def __exit__(self, *exc):
        self.peak = max(0, tracemalloc.get_traced_memory()[1] - self._base)
        if self._started:
            tracemalloc.stop()
        return False


@contextmanager
def peak_allocation():
    scope = PeakAllocation()
    with scope:
        yield scope


def _unit(rng, *shape) -> np.ndarray:
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    return x


def synthetic_index(strategy: str, nv: int, nt: int, nf: int, nw: int, dim: int, seed: int = 0,
                    chunk: int = 1024) -> RetrievalIndex:
    """Random unit vectors in the layout ``strategy`` needs (cost is data-independent).

    Videos are generated in chunks so a text-agnostic index never holds the
    full ``Nv x Nf x D`` frame tensor.
    """
    rng = make_rng(seed, "synthetic-index")
    texts = _unit(rng, nt, dim)
    if strategy in TEXT_AGNOSTIC:
        pooled = np.concatenate([pool_frames(_unit(rng, min(chunk, nv - lo), nf, dim))
                                 for lo in range(0, nv, chunk)])
        return RetrievalIndex(strategy, texts=texts, pooled=pooled)
    frames = _unit(rng, nv, nf, dim)
    if strategy == "xclip_style":
        tokens = _unit(rng, nt, nw, dim)
        return RetrievalIndex(strategy, texts=texts, frames=frames, tokens=tokens,
                              token_mask=np.ones((nt, nw), dtype=bool))
    return RetrievalIndex(strategy, texts=texts, frames=frames)


def default_params(strategy: str, dim: int, seed: int = 0) -> FusionParams:
    weights = FusionWeights.random(make_rng(seed, "fusion-weights"), dim) if strategy == "xpool_style" else None
    return FusionParams(weights=weights)


def cost_profile(strategy: str, Nv: int, Nt: int, Nf: int, Nw: int = 10, D: int = 64, trials: int = 3,
                 seed: int = 0, workers: int = 1, block: int = QUERY_BLOCK,
                 measure: bool = True) -> CostReport:
    """Profile the scoring stage only; the index is built beforehand and excluded.

    Wall time is the median over ``trials`` untraced runs.  Peak bytes come
    from one extra traced run with the output matrix preallocated outside
    the scope, so only transient buffers are counted.
    """
    if min(Nv, Nt, Nf, Nw, D, trials) < 1:
        raise ValueError("all sizes and the trial count must be positive")
    ops = analytic_ops(strategy, Nv, Nt, Nf, Nw)
    if not measure:
        return CostReport(strategy, Nv, Nt, Nf, Nw, ops, 0.0, 0, 0, D, 0, workers)
    index = synthetic_index(strategy, Nv, Nt, Nf, Nw, D, seed)
    params = default_params(strategy, D, seed)
    out = np.empty((Nt, Nv))
    times = []
    for _ in range(trials):
        gc.collect()
        t0 = time.perf_counter()
        score(index, strategy, params, block=block, out=out, workers=workers)
        times.append((time.perf_counter() - t0) * 1e3)
    with peak_allocation() as mem:
        score(index, strategy, params, block=block, out=out, workers=workers)
    return CostReport(strategy, Nv, Nt, Nf, Nw, ops, statistics.median(times), mem.peak,
                      index.nbytes(), D, trials, workers)


def time_scoring(index: RetrievalIndex, strategy: str, params: FusionParams | None = None,
                 block: int = QUERY_BLOCK) -> float:
    out = np.empty((index.num_texts, index.num_videos))
    t0 = time.perf_counter()
    score(index, strategy, params, block=block, out=out)
    return (time.perf_counter() - t0) * 1e3
