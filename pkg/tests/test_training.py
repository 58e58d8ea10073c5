import math

import numpy as np
import pytest

import promptcube.training as training
from oracles import infonce_by_hand, numeric_grad
from promptcube.caption import tfidf_weights
from promptcube.core import Tape, Tensor, backward, make_rng
from promptcube.corpus import generate_corpus
from promptcube.evaluation import token_ids
from promptcube.model import ModelConfig, build_model
from promptcube.training import (
    Batch,
    TrainConfig,
    TrainingError,
    contrastive_loss,
    sample_training_frames,
    total_loss,
    train,
)

BASE = ModelConfig(dim=16, heads=2, layers=2, patch=8, height=16, width=16, num_frames=2, text_layers=1,
                   caption_layers=1, max_len=10)


def unit(rng, *shape):
    x = rng.normal(size=shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class TestContrastive:
    def test_single_pair_is_zero(self, rng):
        assert contrastive_loss(Tensor(unit(rng, 1, 8)), Tensor(unit(rng, 1, 8)), tau=0.07).item() == 0.0

    def test_orthonormal_pair_by_hand(self):
        x = Tensor(np.eye(2))
        assert contrastive_loss(x, x, tau=1.0).item() == pytest.approx(-math.log(math.e / (math.e + 1)), rel=1e-14)
        assert contrastive_loss(x, x, tau=1.0).item() == pytest.approx(0.3133, abs=5e-5)

    def test_matches_loop_oracle(self, rng):
        x, y = unit(rng, 6, 8), unit(rng, 6, 8)
        got = contrastive_loss(Tensor(x * 0.7), Tensor(y), tau=0.1).item()
        assert got == pytest.approx(infonce_by_hand(x @ y.T, 10.0), rel=1e-12)

    def test_permutation_and_swap_symmetry(self, rng):
        x, y = unit(rng, 5, 8), unit(rng, 5, 8)
        base = contrastive_loss(Tensor(x), Tensor(y), tau=0.2).item()
        perm = rng.permutation(5)
        assert contrastive_loss(Tensor(x[perm]), Tensor(y[perm]), tau=0.2).item() == pytest.approx(base, rel=1e-13)
        assert contrastive_loss(Tensor(y), Tensor(x), tau=0.2).item() == pytest.approx(base, rel=1e-13)

    def test_non_negative(self, rng):
        for _ in range(20):
            assert contrastive_loss(Tensor(unit(rng, 4, 3)), Tensor(unit(rng, 4, 3)), tau=0.05).item() >= 0

    def test_gradients(self, rng):
        x, y = rng.normal(size=(3, 4)), unit(rng, 3, 4)
        s = np.array(1.3)
        xt, st = Tensor(x, requires_grad=True), Tensor(s, requires_grad=True)
        with Tape() as tape:
            loss = contrastive_loss(xt, Tensor(y), logit_scale=st)
        g = backward(loss, tape, [xt, st])
        f = lambda: contrastive_loss(Tensor(x), Tensor(y), logit_scale=Tensor(s)).item()  # noqa: E731
        np.testing.assert_allclose(g[xt], numeric_grad(f, x), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(g[st], numeric_grad(f, s), rtol=1e-6)

    def test_errors(self):
        with pytest.raises(ValueError):
            contrastive_loss(Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 3))), tau=1.0)
        with pytest.raises(ValueError):
            contrastive_loss(Tensor(np.eye(2)), Tensor(np.eye(2)), tau=0.0)


def small_problem(use_caption=True, lam=0.5, seed=0):
    corpus = generate_corpus(seed, 6, num_frames=4, height=16, width=16, n_val=2)
    cfg = TrainConfig(lam=lam, k=2, num_frames=2, use_caption=use_caption, seed=seed)
    fields = BASE.to_dict()
    fields.update(vocab_size=len(corpus.vocab), use_caption=use_caption)
    model = build_model(ModelConfig(**fields), seed)
    frames, caps = corpus.subset(range(4))
    batch = Batch(sample_training_frames(frames, 2, make_rng(0, "f")), token_ids(caps, corpus.vocab, 10))
    return model, batch, cfg, tfidf_weights(corpus.captions, corpus.vocab)


def grads_for(model, batch, cfg, table):
    params = model.parameters()
    with Tape() as tape:
        parts = total_loss(batch, model, cfg, table, make_rng(0, "pool"))
    g = backward(parts.total, tape, list(params.values()))
    return parts, {k: g[p] for k, p in params.items()}


class TestTotalLoss:
    def test_combination(self):
        model, batch, cfg, table = small_problem()
        parts = total_loss(batch, model, cfg, table, make_rng(0, "pool"))
        assert parts.total.item() == pytest.approx(parts.l_con + 0.5 * parts.l_cap, rel=1e-14)
        assert parts.l_cap > 0

    def test_lambda_zero_is_contrastive_only_bitwise(self):
        model, batch, cfg, table = small_problem(lam=0.0)
        with_head, g0 = grads_for(model, batch, cfg, table)
        off = TrainConfig(lam=0.0, k=2, num_frames=2, use_caption=False)
        plain, g1 = grads_for(model, batch, off, table)
        assert with_head.total.item() == plain.total.item() == plain.l_con
        for name in g1:
            if not name.startswith("head."):
                assert np.array_equal(g0[name], g1[name]), name

    def test_lambda_scales_caption_gradient(self):
        model, batch, cfg, table = small_problem(lam=0.5)
        _, g_half = grads_for(model, batch, cfg, table)
        _, g_zero = grads_for(model, batch, TrainConfig(lam=0.0, k=2, num_frames=2), table)
        _, g_one = grads_for(model, batch, TrainConfig(lam=1.0, k=2, num_frames=2), table)
        for name in g_half:
            cap = g_one[name] - g_zero[name]
            np.testing.assert_allclose(g_half[name] - g_zero[name], 0.5 * cap, rtol=1e-8, atol=1e-13)

    def test_loss_is_linear_in_lambda(self):
        model, batch, cfg, table = small_problem()
        vals = [total_loss(batch, model, TrainConfig(lam=lam, k=2, num_frames=2), table,
                           make_rng(0, "pool")).total.item() for lam in (0.0, 0.5, 1.0)]
        assert vals[1] - vals[0] == pytest.approx(vals[2] - vals[1], rel=1e-10)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lam=-1)
        with pytest.raises(ValueError):
            TrainConfig(k=7, num_frames=6)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            Batch(np.zeros((0, 2, 16, 16, 3), dtype=np.uint8), np.zeros((0, 4), dtype=np.int64))


class TestFrameSampling:
    def test_interval_offsets(self):
        frames = np.arange(12)[None, :, None, None, None].repeat(50, axis=0)
        out = sample_training_frames(frames, 6, make_rng(0, "s"))[..., 0, 0, 0]
        assert {tuple(r) for r in out.tolist()} == {tuple(range(0, 12, 2)), tuple(range(1, 12, 2))}

    def test_indivisible(self):
        with pytest.raises(ValueError):
            sample_training_frames(np.zeros((1, 10, 2, 2, 3)), 6, make_rng(0))



def run(tmp_path=None, epochs=1, seed=0, **kw):
    corpus = generate_corpus(seed, 6, num_frames=4, height=16, width=16, n_val=2)
    cfg = TrainConfig(epochs=epochs, batch_size=2, k=2, num_frames=2, seed=seed, **kw)
    return train(cfg, corpus, tmp_path, BASE)


class TestTrainLoop:
    def test_one_epoch_smoke(self, tmp_path):
        result = run(tmp_path)
        row = result.log[0]
        assert set(row) == {"epoch", "l_con", "l_cap", "lr", "r1_t2v", "r1_v2t"}
        assert all(math.isfinite(row[k]) for k in row)
        assert (tmp_path / "model.ckpt").exists() and (tmp_path / "metrics.jsonl").read_text().count("\n") == 1

    def test_identical_seeds_identical_runs(self, tmp_path):
        a = run(tmp_path / "a", epochs=2)
        b = run(tmp_path / "b", epochs=2)
        assert a.log == b.log
        assert (tmp_path / "a" / "model.ckpt").read_bytes() == (tmp_path / "b" / "model.ckpt").read_bytes()
        assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()

    def test_different_seed_differs(self):
        assert run(seed=0).log != run(seed=1).log

    def test_non_finite_aborts_with_batch_id(self, monkeypatch):
        real = training.total_loss

        def poisoned(batch, *args, **kwargs):
            if batch.batch_id == 1:
                raise FloatingPointError("injected")
            return real(batch, *args, **kwargs)

        monkeypatch.setattr(training, "total_loss", poisoned)
        with pytest.raises(TrainingError) as err:
            run()
        assert err.value.batch_id == 1

    def test_temperature_clamped(self):
        model, batch, cfg, table = small_problem()
        model.logit_scale.data = np.array(10.0)
        model.clamp_temperature()
        assert math.exp(model.logit_scale.item()) == pytest.approx(100.0)

    def test_fusion_head_trains(self):
        corpus = generate_corpus(0, 6, num_frames=4, height=16, width=16, n_val=2)
        fields = BASE.to_dict()
        fields["pooling"] = "xpool_style"
        result = train(TrainConfig(epochs=1, batch_size=3, k=2, num_frames=2), corpus, None, ModelConfig(**fields))
        assert result.model.fusion is not None and math.isfinite(result.log[0]["l_con"])
