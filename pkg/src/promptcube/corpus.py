"""Synthetic moving-shape videos with templated captions.

Each clip shows one colored shape crossing the frame in one direction at
one speed.  The path is centered, so a left-moving and a right-moving clip
visit the same set of positions and differ only in frame order.
"""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import make_rng
from .text import Vocabulary

SHAPES = ("circle", "square", "triangle")
COLORS = {"red": (255, 0, 0), "green": (0, 255, 0), "blue": (0, 0, 255)}
DIRECTIONS = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}
SPEEDS = {"slowly": 1, "quickly": 2}
HALF_SIZE = 4

VIDEO_MAGIC = b"PSVD"
_HEADER = struct.Struct("<4sIIII")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Attributes:
    color: str
    shape: str
    direction: str
    speed: str

    @property
    def caption(self) -> str:
        return f"a {self.color} {self.shape} moves {self.direction} {self.speed}"


ALL_COMBINATIONS = tuple(Attributes(c, s, d, v) for s, c, d, v in
                         itertools.product(SHAPES, COLORS, DIRECTIONS, SPEEDS))


def _shape_mask(shape: str, cy: float, cx: float, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    r = HALF_SIZE
    if shape == "circle":
        return dy * dy + dx * dx <= r * r
    if shape == "square":
        return (np.abs(dy) <= r - 0.5) & (np.abs(dx) <= r - 0.5)
    if shape == "triangle":
        return (dy <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    raise CorpusError(f"unknown shape {shape!r}")


def render_clip(attrs: Attributes, num_frames: int, height: int, width: int, offset: int = 0) -> np.ndarray:
    """uint8 frames ``(Nf, H, W, 3)``; ``offset`` shifts the path perpendicular to its direction."""
    dy, dx = DIRECTIONS[attrs.direction]
    step = SPEEDS[attrs.speed]
    reach = (num_frames - 1) / 2.0 * step + HALF_SIZE
    if reach > min(height, width) / 2.0 - 0.5:
        raise CorpusError(f"{num_frames} frames at speed {step} do not fit in {height}x{width}")
    cy0, cx0 = (height - 1) / 2.0, (width - 1) / 2.0
    cy0 += offset * abs(dx)
    cx0 += offset * abs(dy)
    frames = np.zeros((num_frames, height, width, 3), dtype=np.uint8)
    rgb = np.array(COLORS[attrs.color], dtype=np.uint8)
    for t in range(num_frames):
        along = (t - (num_frames - 1) / 2.0) * step
        frames[t][_shape_mask(attrs.shape, cy0 + dy * along, cx0 + dx * along, height, width)] = rgb
    return frames


def centroid_track(frames: np.ndarray) -> np.ndarray:
    """(row, col) centroid of the non-black pixels in every frame."""
    out = []
    for frame in frames:
        ys, xs = np.nonzero(frame.any(axis=-1))
        if len(ys) == 0:
            raise CorpusError("frame contains no shape")
        out.append((ys.mean(), xs.mean()))
    return np.array(out)


def write_video(path, frames: np.ndarray) -> None:
    nf, h, w, c = frames.shape
    Path(path).write_bytes(_HEADER.pack(VIDEO_MAGIC, nf, h, w, c) + frames.astype(np.uint8).tobytes())


def read_video(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, nf, h, w, c = _HEADER.unpack_from(blob, 0)
    if magic != VIDEO_MAGIC:
        raise CorpusError(f"{path}: not a video file")
    body = blob[_HEADER.size:]
    if len(body) != nf * h * w * c:
        raise CorpusError(f"{path}: payload size does not match header")
    return np.frombuffer(body, dtype=np.uint8).reshape(nf, h, w, c).copy()


@dataclass
class SyntheticCorpus:
    frames: np.ndarray  # (N, Nf, H, W, 3) uint8
    captions: list
    attributes: list
    train_ids: list
    val_ids: list
    vocab: Vocabulary
    seed: int

    def __len__(self):
        return len(self.captions)

    def subset(self, ids) -> tuple[np.ndarray, list]:
        ids = list(ids)
        return self.frames[ids], [self.captions[i] for i in ids]


def generate_corpus(seed: int, n_pairs: int, num_frames: int = 12, height: int = 32, width: int = 32,
                    n_val: int = 8, allow_duplicates: bool = False) -> SyntheticCorpus:
    if n_pairs < 2:
        raise CorpusError("a corpus needs at least two pairs")
    if not 0 <= n_val < n_pairs:
        raise CorpusError(f"n_val={n_val} must be in [0, {n_pairs})")
    n_combo = len(ALL_COMBINATIONS)
    if n_pairs > n_combo and not allow_duplicates:
        raise CorpusError(f"only {n_combo} distinct captions exist; pass allow_duplicates to exceed it")
    rng = make_rng(seed, "corpus", "attributes")
    order = []
    while len(order) < n_pairs:
        order.extend(rng.permutation(n_combo).tolist())
    attrs = [ALL_COMBINATIONS[i] for i in order[:n_pairs]]
    frames = np.stack([render_clip(a, num_frames, height, width) for a in attrs])
    captions = [a.caption for a in attrs]
    ids = list(range(n_pairs))
    return SyntheticCorpus(frames, captions, attrs, ids[: n_pairs - n_val], ids[n_pairs - n_val:],
                           Vocabulary.from_captions(captions), seed)


def save_corpus(corpus: SyntheticCorpus, root) -> Path:
    root = Path(root)
    (root / "videos").mkdir(parents=True, exist_ok=True)
    for vid, frames in enumerate(corpus.frames):
        write_video(root / "videos" / f"{vid:05d}.vid", frames)
    (root / "captions.tsv").write_text(
        "".join(f"{vid}\t{cap}\n" for vid, cap in enumerate(corpus.captions)), encoding="utf-8")
    corpus.vocab.save(root / "vocab.txt")
    nf, h, w, c = corpus.frames.shape[1:]
    split = {"seed": corpus.seed, "train": corpus.train_ids, "val": corpus.val_ids,
             "num_frames": nf, "height": h, "width": w, "channels": c}
    (root / "split.json").write_text(json.dumps(split, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root


def load_corpus(root) -> SyntheticCorpus:
    root = Path(root)
    split = json.loads((root / "split.json").read_text(encoding="utf-8"))
    lines = (root / "captions.tsv").read_text(encoding="utf-8").splitlines()
    captions = [line.split("\t", 1)[1] for line in lines]
    frames = np.stack([read_video(root / "videos" / f"{vid:05d}.vid") for vid in range(len(captions))])
    attrs = []
    for cap in captions:
        words = cap.split()
        attrs.append(Attributes(words[1], words[2], words[4], words[5]) if len(words) == 6 else None)
    return SyntheticCorpus(frames, captions, attrs, split["train"], split["val"],
                           Vocabulary.load(root / "vocab.txt"), split["seed"])
