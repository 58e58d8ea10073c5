"""Prompt-cube video-text retrieval at toy scale, plus a retrieval cost harness."""

__version__ = "0.1.0"

from .model import Model, ModelConfig, build_model, load_model  # noqa: E402

__all__ = ["Model", "ModelConfig", "build_model", "load_model", "__version__"]
