import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from promptcube.blocks import ParamFactory  # noqa: E402
from promptcube.core import make_rng  # noqa: E402
from promptcube.model import ModelConfig  # noqa: E402

# Small enough that a forward pass takes milliseconds.
TINY = ModelConfig(dim=16, heads=2, layers=2, patch=8, height=16, width=16, num_frames=4, text_layers=2,
                   caption_layers=2, max_len=10, vocab_size=19)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def factory():
    return ParamFactory(make_rng(7, "test"))


@pytest.fixture
def tiny_cfg():
    return TINY
