"""Command-line entry point: gencorpus, train, eval, bench, gradcheck."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, write_manifest
from .core import CheckpointError
from .corpus import CorpusError, generate_corpus, load_corpus, save_corpus

METRIC_ORDER = ("t2v_r1", "t2v_r5", "t2v_r10", "t2v_mnr", "v2t_r1", "v2t_r5", "v2t_r10", "v2t_mnr", "meta_sum")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    from .retrieval.fusion import STRATEGIES

    parser = argparse.ArgumentParser(prog="promptcube", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gencorpus", help="write a synthetic moving-shape corpus")
    g.add_argument("--out", required=True, help="corpus directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-pairs", type=int, default=72)
    g.add_argument("--n-val", type=int, default=8)
    g.add_argument("--frames", type=_positive, default=12)
    g.add_argument("--height", type=_positive, default=32)
    g.add_argument("--width", type=_positive, default=32)
    g.add_argument("--allow-duplicates", action="store_true",
                   help="permit repeated captions when n-pairs exceeds the distinct combinations")

    t = sub.add_parser("train", help="train from a key=value config file")
    t.add_argument("config", help="run config path (see `promptcube config`)")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config entry (repeatable)")

    e = sub.add_parser("eval", help="retrieval metrics for a checkpoint on one split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="run config (default: config.txt next to the checkpoint)")
    e.add_argument("--corpus", help="corpus directory (default: the config's)")
    e.add_argument("--split", choices=("train", "val"), default="val")
    e.add_argument("--strategy", choices=STRATEGIES, help="fusion strategy (default: the trained one)")
    e.add_argument("--out", help="directory for metrics.json and manifest.json")

    b = sub.add_parser("bench", help="score-stage cost sweep over fusion strategies")
    b.add_argument("--strategy", action="append", choices=STRATEGIES,
                   help="strategy to profile (repeatable; default all)")
    b.add_argument("--Nv", type=_positive, default=16384)
    b.add_argument("--Nt", type=_positive, default=512)
    b.add_argument("--Nf", type=_positive, action="append", help="frames per video (repeatable; default 12)")
    b.add_argument("--Nw", type=_positive, default=10)
    b.add_argument("--D", type=_positive, default=64)
    b.add_argument("--trials", type=_positive, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=_positive, default=1)
    b.add_argument("--out", required=True, help="report directory")
    b.add_argument("--no-figure", action="store_true", help="skip the PNG figure")

    c = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--probes", type=_positive, default=3, help="entries checked per parameter tensor")
    c.add_argument("--pooling", choices=("mean_pool", "attention_pool", "topk_pool", "xpool_style"),
                   default="mean_pool")

    k = sub.add_parser("config", help="print the documented default run config")
    k.add_argument("--out", help="write to this path instead of stdout")
    return parser


def cmd_gencorpus(args) -> int:
    corpus = generate_corpus(args.seed, args.n_pairs, args.frames, args.height, args.width, args.n_val,
                             args.allow_duplicates)
    root = save_corpus(corpus, args.out)
    write_manifest(root, "gencorpus", {k: v for k, v in vars(args).items() if k != "func"}, {"corpus": args.seed})
    print(f"wrote {len(corpus)} pairs ({len(corpus.train_ids)} train / {len(corpus.val_ids)} val) to {root}")
    return 0


def _apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    from .config import parse_config

    if not overrides:
        return cfg
    text = cfg.to_text().splitlines()
    keys = {o.split("=", 1)[0].strip() for o in overrides}
    kept = [line for line in text if line.startswith("#") or line.split("=", 1)[0].strip() not in keys]
    return parse_config("\n".join(kept + list(overrides)), "--set")


def cmd_train(args) -> int:
    from .retrieval.plotting import render_curves
    from .training import train

    cfg = _apply_overrides(load_config(args.config), args.set)
    corpus = load_corpus(cfg.corpus)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    h, w, ch = corpus.frames.shape[2:]
    mcfg = cfg.model_config(len(corpus.vocab), h, w, ch)
    write_manifest(out, "train", cfg.to_dict(), {"train": cfg.seed, "corpus": corpus.seed},
                   {"model": mcfg.to_dict()})

    def show(row):
        print(f"epoch {row['epoch']:4d}  l_con {row['l_con']:.4f}  l_cap {row['l_cap']:.4f}  "
              f"lr {row['lr']:.2e}  R@1 t2v {row['r1_t2v']:.1f}  v2t {row['r1_v2t']:.1f}", flush=True)

    result = train(cfg.train_config(), corpus, out, mcfg, log_fn=show)
    if result.log:
        render_curves(result.log, out / "curves.png")
    print(f"checkpoint: {result.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate, token_ids
    from .model import load_model

    ckpt = Path(args.checkpoint)
    cfg = load_config(args.config or ckpt.parent / "config.txt")
    corpus = load_corpus(args.corpus or cfg.corpus)
    h, w, ch = corpus.frames.shape[2:]
    model = load_model(ckpt, cfg.model_config(len(corpus.vocab), h, w, ch))
    ids = corpus.train_ids if args.split == "train" else corpus.val_ids
    if len(ids) < 1:
        raise ValueError(f"split {args.split!r} is empty")
    frames, caps = corpus.subset(ids)
    metrics = evaluate(model, frames, token_ids(caps, corpus.vocab, cfg.max_len), args.strategy)
    print("metric\tvalue")
    for key in METRIC_ORDER:
        print(f"{key}\t{metrics[key]:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_manifest(out, "eval", {**cfg.to_dict(), "split": args.split, "strategy": args.strategy,
                                     "checkpoint": str(ckpt)}, {"train": cfg.seed, "corpus": corpus.seed})
    return 0


def cmd_bench(args) -> int:
    from .retrieval import cost_profile, emit_report
    from .retrieval.fusion import STRATEGIES
    from .retrieval.report import reports_to_csv

    strategies = args.strategy or list(STRATEGIES)
    frames = args.Nf or [12]
    reports = []
    for strategy in strategies:
        for nf in frames:
            t0 = time.perf_counter()
            reports.append(cost_profile(strategy, args.Nv, args.Nt, nf, args.Nw, args.D, args.trials,
                                        args.seed, args.workers))
            print(f"# {strategy} Nf={nf}: {time.perf_counter() - t0:.1f}s", file=sys.stderr, flush=True)
    paths = emit_report(reports, args.out, figure=not args.no_figure)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config.update(strategy=strategies, Nf=frames)
    write_manifest(args.out, "bench", config, {"bench": args.seed})
    sys.stdout.write(reports_to_csv(reports))
    print(f"# report: {paths['csv']}", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_gradcheck

    t0 = time.perf_counter()
    worst = []

    def show(r):
        worst.append(r.max_rel_err)
        print(f"{r.name}\t{r.max_rel_err:.3e}", flush=True)

    run_gradcheck(args.seed, args.probes, args.pooling, report=show)
    top = max(worst)
    ok = top < TOLERANCE
    print(f"max relative error {top:.3e} over {len(worst)} parameter groups "
          f"({time.perf_counter() - t0:.1f}s): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_config(args) -> int:
    text = RunConfig().to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"gencorpus": cmd_gencorpus, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "gradcheck": cmd_gradcheck, "config": cmd_config}


def main(argv=None) -> int:
    from .training import TrainingError

    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CorpusError, CheckpointError, TrainingError, ValueError, KeyError, OSError) as err:
        print(f"promptcube {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
