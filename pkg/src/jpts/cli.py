"""Command line entry point: ``jpts <subcommand> ...``.

Exit status is 0 on success, 1 for configuration or usage errors and 2 for
divergence, malformed files and I/O failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channel import PRESETS, preset, synth_raw_samples
from .dataset import Dataset, assign_splits, import_flat_samples, read_dataset, write_dataset
from .errors import ConfigError, ContractError, DivergenceError, FormatError, ShapeError
from .evaluation import (EvalReport, compare_strategies, evaluate, parse_alpha_range, summarize,
                         sweep_alpha)
from .model import SUPPORTED_ETAS, load_model, save_model
from .plots import emit_plots, load_table
from .trainer import STRATEGIES, TrainConfig, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {text}")
    return value


def _training_args(p, need_alpha=True):
    p.add_argument("--data", required=True, help="CSID dataset file")
    p.add_argument("--strategy", choices=STRATEGIES, default="jpts")
    p.add_argument("--eta", choices=[str(e) for e in SUPPORTED_ETAS], default="1/16")
    if need_alpha:
        p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--tiles", type=int, choices=(4, 9), default=4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--no-timing", action="store_true",
                   help="write 0 in the seconds column so logs are byte-reproducible")
    p.add_argument("--quiet", action="store_true")


def _config(args, **overrides):
    kw = dict(strategy=args.strategy, alpha=getattr(args, "alpha", 0.5), eta=args.eta,
              n=args.tiles, epochs=args.epochs, batch_size=args.batch, seed=args.seed,
              lr=args.lr, timing=not args.no_timing)
    kw.update(overrides)
    return TrainConfig(**kw)


def _progress(args):
    if args.quiet:
        return None

    def show(rec):
        acc = "" if rec.puzzle_acc is None else f" acc {rec.puzzle_acc:.3f}"
        print(f"epoch {rec.epoch}: train {rec.train_loss:.5g} val {rec.val_loss:.5g}{acc}",
              file=sys.stderr, flush=True)
    return show


def build_parser():
    parser = _Parser(prog="jpts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic CSI dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=2800)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="indoor")

    p = sub.add_parser("import", help="convert raw float32 samples to a dataset")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("auto", "train", "validation", "test"), default="auto")

    p = sub.add_parser("train", help="train one model")
    _training_args(p)
    p.add_argument("--out", required=True, help="checkpoint path (config goes to <out>.cfg)")
    p.add_argument("--log", required=True, help="training log CSV")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p.add_argument("--out", help="report CSV (printed to stdout when omitted)")

    p = sub.add_parser("sweep-alpha", help="train and evaluate across alpha values")
    _training_args(p, need_alpha=False)
    p.add_argument("--alphas", default="0.3:0.8:0.1", help="start:stop:step or a comma list")
    p.add_argument("--out", required=True, help="report CSV")

    p = sub.add_parser("compare", help="baseline vs alternative vs jpts with matched seeds")
    _training_args(p)
    p.add_argument("--seeds", default=None, help="comma list of seeds (default: --seed)")
    p.add_argument("--out", required=True, help="report CSV")

    p = sub.add_parser("plot", help="chart a training log or report CSV as SVG")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    return parser


def cmd_synth_data(args):
    if args.count < 1:
        raise ConfigError(f"count must be positive, got {args.count}")
    cfg = preset(args.preset, seed=args.seed)
    raw = synth_raw_samples(cfg, args.count)
    write_dataset(args.out, Dataset(raw, assign_splits(args.count)))
    print(f"wrote {args.count} samples to {args.out}")


def cmd_import(args):
    if args.count < 1:
        raise ConfigError(f"count must be positive, got {args.count}")
    ds = import_flat_samples(args.inp, args.count, args.split)
    write_dataset(args.out, ds)
    print(f"imported {len(ds)} samples to {args.out}")


def cmd_train(args):
    cfg = _config(args)
    ds = read_dataset(args.data)
    try:
        params, log = train(ds, cfg, progress=_progress(args))
    except DivergenceError as exc:
        if exc.log is not None:
            exc.log.write(args.log)
        raise
    save_model(args.out, params, {"strategy": cfg.strategy, "alpha": repr(cfg.weight)})
    log.write(args.log)
    print(f"trained {cfg.epochs} epochs; final train loss {log.records[-1].train_loss:.6g}")


def cmd_eval(args):
    params, cfg = load_model(args.ckpt)
    ds = read_dataset(args.data)
    row = evaluate(params, ds, args.split, cfg.get("strategy", "baseline"),
                   float(cfg.get("alpha", 1.0)), params.seed)
    report = EvalReport([row])
    if args.out:
        report.write(args.out)
    sys.stdout.write(report.to_csv())


def cmd_sweep(args):
    alphas = parse_alpha_range(args.alphas)
    ds = read_dataset(args.data)
    report = sweep_alpha(ds, _config(args, alpha=0.5), alphas, progress=_progress(args))
    report.write(args.out)
    sys.stdout.write(report.to_csv())


def cmd_compare(args):
    seeds = [_seed(s) for s in args.seeds.split(",")] if args.seeds else None
    ds = read_dataset(args.data)
    report = compare_strategies(ds, _config(args), seeds, progress=_progress(args))
    report.write(args.out)
    sys.stdout.write(report.to_csv())
    for strategy, stats in summarize(report).items():
        print(f"{strategy}: mean {stats['mean']:.3f} dB, std {stats['std']:.3f} over "
              f"{stats['seeds']} seed(s)")


def cmd_plot(args):
    table = load_table(Path(args.inp).read_text())
    svg, _ = emit_plots(table, args.out)
    print(f"wrote {svg}")


COMMANDS = {
    "synth-data": cmd_synth_data,
    "import": cmd_import,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-alpha": cmd_sweep,
    "compare": cmd_compare,
    "plot": cmd_plot,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (FormatError, DivergenceError, OSError) as exc:
        print(f"jpts: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ContractError, ShapeError) as exc:
        print(f"jpts: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
