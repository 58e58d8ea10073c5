import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from probes import frame_connectivity
from promptcube.blocks import ParamFactory
from promptcube.core import Tensor, make_rng
from promptcube.video import (
    BASELINE,
    PROMPT_SWITCH,
    EncoderConfig,
    EncoderWeights,
    VideoClip,
    cube_parameter_count,
    encode_video,
    normalize_pixels,
    patchify,
    prompt_switch,
)

CFG = EncoderConfig(dim=16, heads=2, layers=2, patch=8, height=16, width=16, num_frames=4)


@pytest.fixture
def weights():
    return EncoderWeights.init(ParamFactory(make_rng(0, "video-test")), CFG)


def frames(rng, n=4, lead=()):
    return rng.integers(0, 256, size=(*lead, n, 16, 16, 3)).astype(np.uint8)


class TestPatchify:
    def test_shape(self, weights, rng):
        assert patchify(frames(rng), weights, CFG).shape == (4, 5, 16)
        assert patchify(frames(rng, lead=(2,)), weights, CFG).shape == (2, 4, 5, 16)

    def test_zero_pixels_give_position_plus_bias(self, weights):
        out = patchify(Tensor(np.zeros((4, 16, 16, 3))), weights, CFG).data
        np.testing.assert_array_equal(out[:, 1:], np.broadcast_to(weights.pos.data[1:] + weights.patch_b.data, (4, 4, 16)))
        np.testing.assert_array_equal(out[:, 0], np.broadcast_to(weights.cls.data + weights.pos.data[0], (4, 16)))

    def test_patch_order_is_row_major(self, weights):
        px = np.zeros((1, 16, 16, 3))
        px[0, 8:, :8] = 1.0  # bottom-left patch = index 2
        out = patchify(Tensor(px), weights, CFG).data - patchify(Tensor(np.zeros((1, 16, 16, 3))), weights, CFG).data
        moved = np.abs(out[0]).sum(axis=-1) > 0
        assert moved.tolist() == [False, False, False, True, False]

    def test_indivisible_frame(self, weights):
        with pytest.raises(ValueError):
            patchify(np.zeros((1, 15, 16, 3), dtype=np.uint8), weights, CFG)

    def test_pixel_standardization(self):
        x = normalize_pixels(np.array([0, 255], dtype=np.uint8)).data
        np.testing.assert_array_equal(x, [-1.0, 1.0])


class TestPromptSwitch:
    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)).map(lambda t: (t[0], t[0], t[1])),
                      elements=st.floats(-1e6, 1e6)))
    @settings(max_examples=50, deadline=None)
    def test_involution_and_permutation(self, cube):
        once = prompt_switch(Tensor(cube)).data
        twice = prompt_switch(prompt_switch(Tensor(cube))).data
        assert np.array_equal(twice, cube)
        assert np.array_equal(np.sort(once, axis=None), np.sort(cube, axis=None))
        n = cube.shape[0]
        for i in range(n):
            for j in range(n):
                assert np.array_equal(once[i, j], cube[j, i])

    def test_non_square(self):
        with pytest.raises(ValueError):
            prompt_switch(Tensor(np.zeros((2, 3, 4))))

    def test_cube_parameter_count(self):
        assert cube_parameter_count(6, 64) == 2304


class TestEncoder:
    def test_output_shapes(self, weights, rng):
        cls, cube = encode_video(frames(rng, lead=(3,)), weights, CFG)
        assert cls.shape == (3, 4, 16) and cube.shape == (3, 4, 4, 16)
        cls, cube = encode_video(frames(rng), weights, CFG, BASELINE)
        assert cls.shape == (4, 16) and cube is None

    def test_clip_input(self, weights, rng):
        clip = VideoClip(frames(rng))
        a, _ = encode_video(clip.frames, weights, CFG)
        b, _ = encode_video(np.asarray(clip.frames), weights, CFG)
        np.testing.assert_array_equal(a.data, b.data)

    def test_frame_count_mismatch(self, weights, rng):
        with pytest.raises(ValueError):
            encode_video(frames(rng, n=3), weights, CFG, PROMPT_SWITCH)

    def test_blind_cube_reduces_to_baseline(self, weights, rng):
        """Hiding the cube from the patch rows leaves the patch stream untouched."""
        x = frames(rng)
        blind, _ = encode_video(x, weights, CFG, PROMPT_SWITCH, mask_cube=True)
        base, _ = encode_video(x, weights, CFG, BASELINE)
        np.testing.assert_allclose(blind.data, base.data, rtol=0, atol=1e-12)

    def test_connectivity_dense_with_switch_diagonal_without(self, weights, rng):
        dense = frame_connectivity(weights, CFG, PROMPT_SWITCH, rng)
        diag = frame_connectivity(weights, CFG, BASELINE, rng)
        assert np.all(dense > 1e-10)
        assert np.all(np.diag(diag) > 1e-10)
        assert np.all(diag[~np.eye(4, dtype=bool)] == 0.0)

    def test_one_layer_is_not_enough(self, weights, rng):
        """After a single block the cube has not yet carried anything across frames."""
        one = frame_connectivity(weights, CFG, PROMPT_SWITCH, rng, layers=1)
        assert np.all(one[~np.eye(4, dtype=bool)] == 0.0)

    def test_needs_two_layers(self):
        with pytest.raises(ValueError):
            EncoderWeights.init(ParamFactory(make_rng(0)), EncoderConfig(layers=1))
