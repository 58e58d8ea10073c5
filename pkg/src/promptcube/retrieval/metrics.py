"""Recall@K, mean rank and Meta Sum."""

from __future__ import annotations

import numpy as np

from .index import order_candidates


def gt_ranks(ranking: np.ndarray, ground_truth) -> np.ndarray:
    """1-based position of each query's ground-truth candidate in its ranking row."""
    ranking = np.asarray(ranking)
    gt = np.asarray(ground_truth)
    hits = ranking == gt[:, None]
    if not hits.any(axis=1).all():
        raise ValueError("a ground-truth id is missing from its ranking row")
    return hits.argmax(axis=1) + 1


def recall_at_k(ranking, ground_truth, k: int) -> float:
    return float(100.0 * np.mean(gt_ranks(ranking, ground_truth) <= k))


def mean_rank(ranking, ground_truth) -> float:
    return float(np.mean(gt_ranks(ranking, ground_truth)))


def meta_sum(t2v_r1, t2v_r5, t2v_r10, v2t_r1, v2t_r5, v2t_r10) -> float:
    vals = (t2v_r1, t2v_r5, t2v_r10, v2t_r1, v2t_r5, v2t_r10)
    if any(not 0.0 <= v <= 100.0 for v in vals):
        raise ValueError("recall values must lie in [0, 100]")
    return float(sum(vals))


def retrieval_summary(sim: np.ndarray) -> dict:
    """Both directions for a square similarity matrix with a diagonal ground truth.

    ``sim`` is ``(Nt, Nv)``; text i belongs to video i.
    """
    gt = np.arange(sim.shape[0])
    out = {}
    for name, mat in (("t2v", sim), ("v2t", sim.T)):
        ranking = order_candidates(mat)
        for k in (1, 5, 10):
            out[f"{name}_r{k}"] = recall_at_k(ranking, gt, k)
        out[f"{name}_mnr"] = mean_rank(ranking, gt)
    out["meta_sum"] = meta_sum(*(out[f"{d}_r{k}"] for d in ("t2v", "v2t") for k in (1, 5, 10)))
    return out
