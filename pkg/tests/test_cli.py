import csv
import json

import numpy as np
import pytest

from promptcube import __version__
from promptcube.cli import main
from promptcube.config import ConfigError, RunConfig, config_hash, parse_config

SMALL = """
# tiny run used by the CLI tests
corpus = {corpus}
out_dir = {out}
epochs = {epochs}
batch_size = 4
num_frames = 2
k = 2
dim = 16
heads = 2
layers = 2
text_layers = 1
caption_layers = 1
max_len = 10
"""


class TestConfig:
    def test_defaults_documented_and_roundtrip(self):
        cfg = RunConfig()
        text = cfg.to_text()
        assert text.count("# ") == len(cfg.to_dict())
        assert parse_config(text) == cfg

    def test_types_comments_and_booleans(self):
        cfg = parse_config("lr = 3e-4  # peak\nuse_cube = no\n\nepochs=5\n")
        assert cfg.lr == 3e-4 and cfg.use_cube is False and cfg.epochs == 5

    @pytest.mark.parametrize("text", ["bogus = 1", "epochs = many", "use_cube = maybe", "epochs", "k = 1\nk = 2"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_hash_is_order_independent(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})

    def test_splits_into_train_and_model(self):
        cfg = RunConfig(lam=0.25, dim=32, use_caption=False)
        assert cfg.train_config().lam == 0.25
        m = cfg.model_config(vocab_size=20)
        assert m.dim == 32 and m.vocab_size == 20 and not m.use_caption


def write_config(tmp_path, epochs=0):
    corpus, out = tmp_path / "corpus", tmp_path / "run"
    path = tmp_path / "run.cfg"
    path.write_text(SMALL.format(corpus=corpus, out=out, epochs=epochs))
    return path, corpus, out


def gencorpus(corpus, *extra):
    return main(["gencorpus", "--out", str(corpus), "--n-pairs", "12", "--n-val", "4", "--frames", "4",
                 "--height", "16", "--width", "16", *extra])


class TestCommands:
    def test_usage_errors_exit_2(self, capsys):
        for argv in (["frobnicate"], ["bench", "--bogus"], []):
            with pytest.raises(SystemExit) as err:
                main(argv)
            assert err.value.code == 2

    def test_runtime_error_is_one_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("nonsense = 1\n")
        assert main(["train", str(bad)]) == 1
        err = capsys.readouterr().err.strip()
        assert "\n" not in err and "unknown key" in err

    def test_gencorpus_train_eval(self, tmp_path, capsys):
        cfg, corpus, out = write_config(tmp_path, epochs=0)
        assert gencorpus(corpus) == 0
        assert main(["train", str(cfg)]) == 0
        assert (out / "model.ckpt").exists() and (out / "config.txt").exists()
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(out / "model.ckpt"), "--split", "val", "--out", str(tmp_path / "ev")]) == 0
        table = dict(line.split("\t") for line in capsys.readouterr().out.strip().splitlines()[1:])
        assert set(table) >= {"t2v_r1", "v2t_r1", "meta_sum"}
        assert all(np.isfinite(float(v)) for v in table.values())
        manifest = json.loads((tmp_path / "ev" / "manifest.json").read_text())
        assert manifest["code_version"]["package"] == __version__
        assert len(manifest["code_version"]["source_sha256"]) == 64

    def test_train_writes_log_curves_and_manifest(self, tmp_path):
        cfg, corpus, out = write_config(tmp_path, epochs=1)
        gencorpus(corpus)
        assert main(["train", str(cfg), "--set", "lam=0.25"]) == 0
        rows = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
        assert len(rows) == 1 and set(rows[0]) == {"epoch", "l_con", "l_cap", "lr", "r1_t2v", "r1_v2t"}
        assert (out / "curves.png").stat().st_size > 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["lam"] == 0.25
        assert manifest["config_hash"] == config_hash(manifest["config"])
        assert manifest["seeds"]["train"] == 0

    def test_rerun_reproduces_metrics(self, tmp_path):
        cfg, corpus, out = write_config(tmp_path, epochs=1)
        gencorpus(corpus)
        main(["train", str(cfg)])
        first = (out / "metrics.jsonl").read_bytes(), (out / "manifest.json").read_bytes()
        main(["train", str(cfg)])
        assert ((out / "metrics.jsonl").read_bytes(), (out / "manifest.json").read_bytes()) == first

    def test_bench_mean_pool_row(self, tmp_path, capsys):
        out = tmp_path / "bench"
        assert main(["bench", "--strategy", "mean_pool", "--Nv", "16384", "--Nt", "512", "--Nf", "12",
                     "--trials", "1", "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "cost_report.csv").open()))
        assert len(rows) == 1 and int(rows[0]["analytic_ops"]) == 8_388_608
        assert (out / "cost_report.png").exists() and (out / "manifest.json").exists()
        assert capsys.readouterr().out.startswith("strategy,Nv,Nt")

    def test_config_command(self, tmp_path):
        assert main(["config", "--out", str(tmp_path / "d.cfg")]) == 0
        assert parse_config((tmp_path / "d.cfg").read_text()) == RunConfig()
