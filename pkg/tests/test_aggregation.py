import itertools
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from promptcube.aggregation import (
    AggregationWeights,
    aggregate_frames,
    chunk_prompts,
    chunked_inference,
    interval_chunks,
    plain_prompts,
    pool_video,
    sample_frame_indices,
)
from promptcube.blocks import ParamFactory
from promptcube.core import Tape, Tensor, backward, make_rng, tsum
from promptcube.video import PROMPT_SWITCH, EncoderConfig, EncoderWeights, encode_video

CFG = EncoderConfig(dim=16, heads=2, layers=2, patch=8, height=16, width=16, num_frames=4)


@pytest.fixture
def parts():
    f = ParamFactory(make_rng(0, "agg-test"))
    enc = EncoderWeights.init(f, CFG)
    return enc, AggregationWeights.init(f, enc, CFG.dim)


def clip(rng, n=4, lead=()):
    return rng.integers(0, 256, size=(*lead, n, 16, 16, 3)).astype(np.uint8)


class TestAggregate:
    def test_zero_init_matches_plain_readout_bitwise(self, parts, rng):
        enc, agg = parts
        cls, cube = encode_video(clip(rng, lead=(2,)), enc, CFG)
        got = aggregate_frames(cls, cube, agg, CFG.heads).data
        want = plain_prompts(cls, enc.ln_post_g, enc.ln_post_b).data
        assert np.array_equal(got, want)

    def test_layer_norm_is_shared_with_encoder(self, parts):
        enc, agg = parts
        assert agg.ln_g is enc.ln_post_g and agg.ln_b is enc.ln_post_b

    def test_cube_influences_prompts_once_output_is_live(self, parts, rng):
        enc, agg = parts
        agg.attn.wo.data = rng.normal(0, 0.1, size=agg.attn.wo.shape)
        cls, cube = encode_video(clip(rng), enc, CFG)
        cube_t = Tensor(cube.data, requires_grad=True)
        with Tape() as tape:
            out = tsum(aggregate_frames(Tensor(cls.data), cube_t, agg, CFG.heads) * rng.normal(size=(4, 16)))
        assert np.abs(backward(out, tape, [cube_t])[cube_t]).sum() > 0

    def test_shape_mismatch(self, parts):
        _, agg = parts
        with pytest.raises(ValueError):
            aggregate_frames(Tensor(np.ones((4, 16))), Tensor(np.ones((3, 3, 16))), agg, 2)


class TestPool:
    def test_mean_of_unit_rows(self, rng):
        p = rng.normal(size=(5, 8))
        want = (p / np.linalg.norm(p, axis=1, keepdims=True)).mean(axis=0)
        np.testing.assert_allclose(pool_video(Tensor(p)).data, want, rtol=1e-14)
        assert np.linalg.norm(pool_video(Tensor(p)).data) <= 1.0

    def test_k_equal_nf_reduces_to_inference(self, rng):
        p = Tensor(rng.normal(size=(3, 5, 8)))
        np.testing.assert_array_equal(pool_video(p, 5, True, rng).data, pool_video(p).data)

    def test_subset_mean(self):
        p = np.eye(4)
        out = pool_video(Tensor(p), 2, True, make_rng(0, "pool")).data
        assert sorted(out.tolist()) == [0.0, 0.0, 0.5, 0.5]

    def test_invalid_k(self, rng):
        with pytest.raises(ValueError):
            pool_video(Tensor(np.ones((4, 3))), 5, True, rng)
        with pytest.raises(ValueError):
            pool_video(Tensor(np.ones((4, 3))), 0, True, rng)

    def test_sampling_is_uniform_over_subsets(self):
        """Chi-square goodness of fit over all C(6,3)=20 subsets."""
        idx = sample_frame_indices(4000, 6, 3, make_rng(5, "uniform"))
        assert all(len(set(r)) == 3 for r in idx.tolist())
        counts = Counter(tuple(r) for r in idx.tolist())
        observed = [counts.get(s, 0) for s in itertools.combinations(range(6), 3)]
        assert stats.chisquare(observed).pvalue > 1e-3


class TestChunks:
    def test_interval_chunks(self):
        assert [c.tolist() for c in interval_chunks(12, 6)] == [[0, 2, 4, 6, 8, 10], [1, 3, 5, 7, 9, 11]]
        with pytest.raises(ValueError):
            interval_chunks(10, 6)

    def test_chunked_inference_pools_both_chunks(self, parts, rng):
        enc, agg = parts
        x = clip(rng, n=8)
        prompts = chunk_prompts(x, enc, agg, CFG, PROMPT_SWITCH)
        assert prompts.shape == (8, 16)
        first = chunk_prompts(x[0::2], enc, agg, CFG, PROMPT_SWITCH).data
        np.testing.assert_array_equal(prompts.data[:4], first)
        np.testing.assert_array_equal(chunked_inference(x, enc, agg, CFG).data, pool_video(prompts).data)

    def test_wrong_length(self, parts, rng):
        enc, agg = parts
        with pytest.raises(ValueError):
            chunked_inference(clip(rng, n=4), enc, agg, CFG, chunks=2)
