"""``tacorr <synth|train|match|eval|gradcheck>``.

Exit codes: 0 success, 1 usage, 2 invalid input or config, 3 runtime or
numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import gradsuite
from .diffcore import NumericError
from .geometry import CloudFormatError, export_correspondence_ply, load_cloud
from .pipeline import (
    EPS_GRID,
    CheckpointError,
    ConfigError,
    ShapePair,
    TrainingDiverged,
    evaluate,
    infer,
    infer_transitive,
    load_checkpoint,
    load_config,
    load_dataset,
    resolve_config,
    save_correspondence,
    save_dataset,
    synth_pairs,
    train,
    write_loss_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("tacorr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_synth(args):
    out = Path(args.out)
    if args.count < 1 or args.points < 32:
        raise ValueError("--count must be >= 1 and --points >= 32")
    pairs = synth_pairs(args.count, args.points, np.random.default_rng(args.seed),
                        max_angle=args.max_angle)
    save_dataset(pairs, out)
    print(f"wrote {args.count} pairs of {args.points} points (seed {args.seed}) to {out}")
    return EXIT_OK


def _resolve(args):
    cfg = load_config(args.config) if args.config else resolve_config({})
    if args.seed is not None:
        cfg.train = cfg.train.replace(seed=args.seed)
    if args.steps is not None:
        cfg.train = cfg.train.replace(steps=args.steps)
    return cfg


def cmd_train(args):
    cfg = _resolve(args)
    data = args.data or cfg.paths.get("data")
    if not data:
        raise ValueError("no dataset: pass --data or set 'data' in the config")
    out = Path(args.out or cfg.paths.get("out") or "run")
    items = load_dataset(data)
    pairs = [p for _, p in items]
    n = cfg.train.n_points
    bad = [pid for pid, p in items if len(p.source) != n or len(p.target) != n]
    if bad:
        raise ValueError(f"pairs {bad[:5]} do not have n_points={n} points")
    out.mkdir(parents=True, exist_ok=True)
    resolved = {**cfg.to_dict(), "data": str(data), "out": str(out)}
    _write_json(out / "config.json", resolved)
    t0 = time.perf_counter()
    result = train(pairs, cfg.train, out_dir=out)
    write_loss_csv(result.history, out / "loss.csv")
    last = result.history[-1]["total"] if result.history else float("nan")
    print(f"trained {cfg.train.steps} steps in {time.perf_counter() - t0:.1f}s; "
          f"final loss {last:.6f}; checkpoint {out / 'checkpoint.npz'}")
    return EXIT_OK


def _check_points(model, cloud, what):
    n = model.config.n_points
    if len(cloud) != n:
        raise CheckpointError(f"{what} has {len(cloud)} points but the checkpoint expects "
                              f"n_points={n}")


def cmd_match(args):
    model = load_checkpoint(args.checkpoint)
    src, tgt = load_cloud(args.source), load_cloud(args.target)
    _check_points(model, src, "source")
    _check_points(model, tgt, "target")
    pair = ShapePair(src, tgt)
    corr = infer_transitive(model, pair) if args.mode == "transitive" else infer(model, pair)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_correspondence(corr, out / "correspondence.txt")
    export_correspondence_ply(src, tgt, corr, out)
    print(f"wrote {len(corr)} correspondences ({args.mode}) to {out}")
    return EXIT_OK


def write_report(report, out):
    """``metrics.json`` plus ``acc_curve.csv`` (eps, acc) for plotting."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report)
    rows = ["eps,acc"] + [f"{e:.2f},{a!r}" for e, a in zip(report["eps"], report["acc"])]
    (out / "acc_curve.csv").write_text("\n".join(rows) + "\n")


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    items = load_dataset(args.data, require_gt=True)
    for pid, p in items:
        _check_points(model, p.source, f"pair {pid} source")
        _check_points(model, p.target, f"pair {pid} target")
    predict = (lambda p: infer_transitive(model, p)) if args.mode == "transitive" else (
        lambda p: infer(model, p))
    report = evaluate(items, predict, EPS_GRID)
    report["mode"] = args.mode
    write_report(report, args.out)
    print(f"err {report['err']:.4f}  acc@0.05 {report['acc'][5]:.3f}  "
          f"acc@0.10 {report['acc'][10]:.3f}  ({len(items)} pairs)")
    return EXIT_OK


def cmd_gradcheck(args):
    names = args.only or None
    if names:
        unknown = [n for n in names if n not in gradsuite.REGISTRY]
        if unknown:
            raise ValueError(f"unknown ops {unknown}")
    t0 = time.perf_counter()
    rows = gradsuite.run_suite(seed=args.seed, n_seeds=args.seeds, names=names,
                               corrupt=tuple(args.corrupt))
    print(gradsuite.format_table(rows))
    failed = [r.name for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed in {time.perf_counter() - t0:.1f}s")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser():
    p = _Parser(prog="tacorr", description="Point-cloud shape correspondence with template assistance.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic articulated-shape dataset")
    s.add_argument("--count", type=int, default=16)
    s.add_argument("--points", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-angle", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a model on a dataset")
    s.add_argument("--config", help="JSON config (profile + overrides + paths)")
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("match", help="predict correspondences for one pair")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=("direct", "transitive"), default="direct")
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("eval", help="err and acc(eps) over a dataset with ground truth")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=("direct", "transitive"), default="direct")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=20, help="instances per op")
    s.add_argument("--only", nargs="+", metavar="OP")
    s.add_argument("--corrupt", nargs="+", default=[], metavar="OP",
                   help="perturb these ops' analytic gradients (negative control)")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericError, TrainingDiverged) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CheckpointError, CloudFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
