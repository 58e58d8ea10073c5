import numpy as np
import pytest

from promptcube.corpus import (
    ALL_COMBINATIONS,
    DIRECTIONS,
    SPEEDS,
    Attributes,
    CorpusError,
    centroid_track,
    generate_corpus,
    load_corpus,
    read_video,
    render_clip,
    save_corpus,
    write_video,
)


class TestRender:
    @pytest.mark.parametrize("attrs", ALL_COMBINATIONS[:24])
    def test_centroid_follows_caption(self, attrs):
        track = centroid_track(render_clip(attrs, 12, 32, 32, offset=2))
        dy, dx = DIRECTIONS[attrs.direction]
        step = np.diff(track, axis=0)
        moving, still = (step[:, 1], step[:, 0]) if dx else (step[:, 0], step[:, 1])
        sign = dx or dy
        np.testing.assert_allclose(moving, sign * SPEEDS[attrs.speed], atol=1e-12)
        np.testing.assert_allclose(still, 0.0, atol=1e-12)

    def test_left_moves_left(self):
        track = centroid_track(render_clip(Attributes("red", "triangle", "left", "slowly"), 12, 32, 32))
        assert np.all(np.diff(track[:, 1]) < 0)

    def test_colors(self):
        frames = render_clip(Attributes("green", "square", "up", "quickly"), 12, 32, 32)
        lit = frames.reshape(-1, 3)[frames.reshape(-1, 3).any(axis=1)]
        assert np.all(lit == [0, 255, 0])

    def test_too_many_frames(self):
        with pytest.raises(CorpusError):
            render_clip(Attributes("red", "circle", "left", "quickly"), 24, 32, 32)


class TestCorpus:
    def test_full_corpus_has_distinct_captions(self):
        c = generate_corpus(0, 72, n_val=8)
        assert len(set(c.captions)) == 72 == len(ALL_COMBINATIONS)
        assert c.frames.dtype == np.uint8 and c.frames.shape == (72, 12, 32, 32, 3)

    def test_split_is_disjoint(self):
        c = generate_corpus(1, 20, n_val=5)
        assert not set(c.train_ids) & set(c.val_ids)
        assert sorted(c.train_ids + c.val_ids) == list(range(20))

    def test_regeneration_is_bitwise(self):
        a, b = generate_corpus(5, 16), generate_corpus(5, 16)
        assert a.frames.tobytes() == b.frames.tobytes() and a.captions == b.captions
        assert generate_corpus(6, 16).captions != a.captions

    def test_every_pair_consistent_with_caption(self):
        c = generate_corpus(2, 72)
        for frames, attrs in zip(c.frames, c.attributes):
            dy, dx = DIRECTIONS[attrs.direction]
            step = np.diff(centroid_track(frames), axis=0)
            assert np.allclose(step, np.array([dy, dx]) * SPEEDS[attrs.speed])

    def test_duplicates_need_flag(self):
        with pytest.raises(CorpusError):
            generate_corpus(0, 80)
        assert len(generate_corpus(0, 80, allow_duplicates=True)) == 80

    def test_too_small(self):
        with pytest.raises(CorpusError):
            generate_corpus(0, 1)

    def test_disk_roundtrip(self, tmp_path):
        c = generate_corpus(3, 10, n_val=2)
        save_corpus(c, tmp_path)
        back = load_corpus(tmp_path)
        assert back.frames.tobytes() == c.frames.tobytes()
        assert back.captions == c.captions and back.val_ids == c.val_ids
        assert back.vocab.tokens == c.vocab.tokens and back.attributes == c.attributes


class TestVideoFile:
    def test_roundtrip(self, tmp_path, rng):
        frames = rng.integers(0, 256, size=(3, 4, 5, 3)).astype(np.uint8)
        write_video(tmp_path / "v", frames)
        assert np.array_equal(read_video(tmp_path / "v"), frames)

    def test_bad_header(self, tmp_path):
        (tmp_path / "v").write_bytes(b"XXXX" + bytes(16))
        with pytest.raises(CorpusError):
            read_video(tmp_path / "v")

    def test_size_mismatch(self, tmp_path):
        write_video(tmp_path / "v", np.zeros((2, 2, 2, 3), dtype=np.uint8))
        (tmp_path / "w").write_bytes((tmp_path / "v").read_bytes()[:-1])
        with pytest.raises(CorpusError):
            read_video(tmp_path / "w")
