"""Flat ``key = value`` run configuration and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _doc(default, text: str):
    return field(default=default, metadata={"doc": text})


@dataclass
class RunConfig:
    corpus: str = _doc("corpus", "directory written by `gencorpus`")
    out_dir: str = _doc("runs/default", "output directory for checkpoint, metrics and manifest")
    # training
    lam: float = _doc(0.5, "weight of the captioning loss")
    k: int = _doc(3, "frames sampled per video for pooling during training")
    num_frames: int = _doc(6, "frames per encoder pass (evaluation uses two interleaved chunks)")
    epochs: int = _doc(200, "passes over the training split; 0 writes the initial weights")
    batch_size: int = _doc(16, "pairs per optimizer step")
    lr: float = _doc(1e-3, "peak learning rate of the cosine schedule")
    weight_decay: float = _doc(0.01, "decoupled weight decay on matrices")
    seed: int = _doc(0, "seed for initialization, shuffling and frame sampling")
    clip_norm: float = _doc(1.0, "global gradient-norm clip (0 disables)")
    use_cube: bool = _doc(True, "attach the switched prompt cube to the frame encoder")
    use_aggregation: bool = _doc(True, "read frame vectors out of the cube with CLS-guided attention")
    use_caption: bool = _doc(True, "add the weighted captioning loss")
    hard_mask: bool = _doc(False, "zero the captioning weight of every non-keyword instead of tf-idf weighting")
    eval_every: int = _doc(1, "epochs between held-out evaluations")
    pooling: str = _doc("mean_pool", "fusion head used for training and evaluation")
    # model
    dim: int = _doc(64, "embedding width")
    heads: int = _doc(4, "attention heads")
    layers: int = _doc(4, "frame encoder blocks")
    patch: int = _doc(8, "patch side in pixels")
    text_layers: int = _doc(2, "text encoder blocks")
    caption_layers: int = _doc(3, "caption decoder blocks")
    max_len: int = _doc(16, "maximum caption length in tokens including BOS and EOS")
    tau_init: float = _doc(0.07, "initial contrastive temperature")

    def train_config(self) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def model_config(self, vocab_size: int, height: int = 32, width: int = 32, channels: int = 3) -> ModelConfig:
        return ModelConfig(dim=self.dim, heads=self.heads, layers=self.layers, patch=self.patch, height=height,
                           width=width, channels=channels, num_frames=self.num_frames,
                           text_layers=self.text_layers, caption_layers=self.caption_layers,
                           max_len=self.max_len, vocab_size=vocab_size, use_cube=self.use_cube,
                           use_aggregation=self.use_aggregation, use_caption=self.use_caption,
                           pooling=self.pooling, tau_init=self.tau_init)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"# {f.metadata['doc']}")
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return config_hash(self.to_dict())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(name: str, kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    conv = {"int": int, "float": float, "str": str}.get(kind, kind)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {getattr(conv, '__name__', conv)}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    kinds = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, kinds[key], raw)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def config_hash(values: dict) -> str:
    blob = json.dumps(values, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def source_digest() -> str:
    """SHA-256 over the package's own source files, in path order."""
    root = Path(__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def code_version() -> dict:
    from . import __version__

    return {"package": __version__, "source_sha256": source_digest()}


def write_manifest(out_dir, command: str, config: dict, seeds: dict, extra: dict | None = None) -> Path:
    """Record what produced a run directory; no timestamps, so reruns are byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": config, "config_hash": config_hash(config), "seeds": seeds,
                "code_version": code_version()}
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
