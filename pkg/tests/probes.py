"""Sensitivity probes shared by unit and acceptance tests."""

import numpy as np

from promptcube.core import Tape, Tensor, backward, tsum
from promptcube.video import encode_video


def frame_connectivity(weights, cfg, mode, rng, layers=None) -> np.ndarray:
    """``C[i, j]`` = gradient norm of frame ``j``'s CLS output w.r.t. frame ``i``'s pixels."""
    nf = cfg.num_frames
    pixels = rng.normal(size=(nf, cfg.height, cfg.width, cfg.channels))
    probe = rng.normal(size=cfg.dim)
    saved = weights.layers
    if layers is not None:
        weights.layers = saved[:layers]
    try:
        conn = np.zeros((nf, nf))
        for j in range(nf):
            x = Tensor(pixels, requires_grad=True)
            with Tape() as tape:
                cls, _ = encode_video(x, weights, cfg, mode)
                out = tsum(cls[j] * probe)
            g = backward(out, tape, [x])[x]
            conn[:, j] = np.sqrt((g ** 2).reshape(nf, -1).sum(axis=1))
    finally:
        weights.layers = saved
    return conn
