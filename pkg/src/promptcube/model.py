"""Full retrieval model: video tower, text tower, caption head, temperature."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .aggregation import AggregationWeights, aggregate_frames, chunk_prompts, plain_prompts
from .blocks import ParamFactory, named_parameters
from .caption import CaptionConfig, CaptionHeadWeights
from .core import Tensor, load_checkpoint, make_rng, save_checkpoint
from .retrieval.fusion import FusionWeights
from .text import TextConfig, TextWeights
from .video import BASELINE, PROMPT_SWITCH, EncoderConfig, EncoderWeights, encode_video


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    heads: int = 4
    layers: int = 4
    patch: int = 8
    height: int = 32
    width: int = 32
    channels: int = 3
    num_frames: int = 6
    mlp_ratio: int = 4
    text_layers: int = 2
    caption_layers: int = 3
    max_len: int = 16
    vocab_size: int = 32
    use_cube: bool = True
    use_aggregation: bool = True
    use_caption: bool = True
    pooling: str = "mean_pool"
    tau_init: float = 0.07
    max_logit_scale: float = 100.0

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.dim, self.heads, self.layers, self.patch, self.height, self.width,
                             self.channels, self.num_frames, self.mlp_ratio)

    @property
    def text(self) -> TextConfig:
        return TextConfig(self.dim, self.heads, self.text_layers, self.max_len, self.mlp_ratio)

    @property
    def caption(self) -> CaptionConfig:
        return CaptionConfig(self.dim, self.heads, self.caption_layers, self.max_len, self.mlp_ratio)

    @property
    def mode(self) -> str:
        return PROMPT_SWITCH if self.use_cube else BASELINE

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VideoTower:
    encoder: EncoderWeights
    aggregation: AggregationWeights | None
    cfg: EncoderConfig = field(metadata={"shared": True})
    mode: str = field(default=PROMPT_SWITCH, metadata={"shared": True})

    def prompts(self, frames) -> Tensor:
        """Per-frame prompt vectors ``(..., Nf, D)`` for exactly ``Nf`` frames."""
        cls, cube = encode_video(frames, self.encoder, self.cfg, self.mode)
        if self.aggregation is not None and cube is not None:
            return aggregate_frames(cls, cube, self.aggregation, self.cfg.heads)
        return plain_prompts(cls, self.encoder.ln_post_g, self.encoder.ln_post_b)

    def prompts_chunked(self, frames) -> Tensor:
        """Prompt vectors for any multiple of ``Nf`` frames via interval chunks."""
        return chunk_prompts(np.asarray(frames), self.encoder, self.aggregation, self.cfg, self.mode)


@dataclass
class Model:
    video: VideoTower
    text: TextWeights
    head: CaptionHeadWeights | None
    fusion: FusionWeights | None
    logit_scale: Tensor
    config: ModelConfig = field(metadata={"shared": True})

    def parameters(self) -> dict[str, Tensor]:
        return named_parameters(self)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch; missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in params.items():
            if state[name].shape != p.data.shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != {p.data.shape}")
            p.data = np.array(state[name], dtype=np.float64)

    def save(self, path) -> None:
        save_checkpoint(path, self.state_dict())

    def clamp_temperature(self) -> None:
        cap = math.log(self.config.max_logit_scale)
        if self.logit_scale.data.item() > cap:
            self.logit_scale.data = np.array(cap)


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    f = ParamFactory(make_rng(seed, "init"))
    enc_cfg = cfg.encoder
    encoder = EncoderWeights.init(f, enc_cfg)
    aggregation = None
    if cfg.use_cube and cfg.use_aggregation:
        aggregation = AggregationWeights.init(f, encoder, cfg.dim)
    text = TextWeights.init(f, cfg.text, cfg.vocab_size)
    head = CaptionHeadWeights.init(f, cfg.caption, cfg.vocab_size) if cfg.use_caption else None
    fusion = FusionWeights.init(f, cfg.dim) if cfg.pooling == "xpool_style" else None
    logit_scale = Tensor(np.array(math.log(1.0 / cfg.tau_init)), requires_grad=True)
    return Model(VideoTower(encoder, aggregation, enc_cfg, cfg.mode), text, head, fusion, logit_scale, cfg)


def load_model(path, cfg: ModelConfig) -> Model:
    model = build_model(cfg)
    model.load_state_dict(load_checkpoint(path))
    return model
