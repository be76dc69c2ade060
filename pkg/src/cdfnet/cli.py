"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import distributions, minn, pipeline, training
from .pipeline import DEFAULTS, StageError

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
OUTPUT_ROOT_ENV = "CDFNET_OUTPUT_ROOT"

log = logging.getLogger("cdfnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _kde_h(text):
    if text == "cv":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a bandwidth or 'cv', got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"bandwidth must be > 0, got {value}")
    return text


def _add_target_flags(p):
    p.add_argument("--targets", dest="estimator", choices=["eq1", "eq2"], default="eq1",
                   help="eq1: uniform query points in the widened data box; eq2: leave-one-out at the data")
    p.add_argument("--m", type=_positive_int, default=None, help="query count for eq1 (default 10 * N)")
    p.add_argument("--margin", type=float, default=0.1, help="box widening per side, as a fraction of the range")
    p.add_argument("--target-seed", type=int, default=0)
    p.add_argument("--include-data-points", action="store_true", help="also use the data points as eq1 queries")
    p.add_argument("--targets-file", help="read a targets CSV instead of generating targets")


def _add_train_flags(p, epochs_default):
    ada = DEFAULTS["adadelta"]
    p.add_argument("--epochs", type=_positive_int, default=epochs_default)
    p.add_argument("--batch", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--adadelta-decay", type=float, default=ada["decay"])
    p.add_argument("--adadelta-eps", type=float, default=ada["eps"])
    p.add_argument("--loss-reduction", choices=["sum", "mean"], default=ada["loss_reduction"],
                   help="batch reduction of the gradient passed to Adadelta")
    p.add_argument("--no-shuffle", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdfnet", description="Density estimation by fitting a monotone network to the empirical CDF.")
    parser.add_argument("--show-defaults", action="store_true", help="print the experiment defaults table and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("sample", help="draw a dataset from a ground-truth mixture")
    p.add_argument("--dist", required=True, choices=sorted(distributions.DISTRIBUTIONS))
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; a .manifest.json sidecar is written next to it")

    p = sub.add_parser("targets", help="build empirical-CDF regression targets")
    p.add_argument("--data", required=True)
    _add_target_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit a monotone network to CDF targets")
    p.add_argument("--data", required=True)
    _add_target_flags(p)
    p.add_argument("--hidden", type=_positive_int, default=16)
    p.add_argument("--init-scale", type=float, default=DEFAULTS["init_scale"])
    _add_train_flags(p, 30000)
    p.add_argument("--out", required=True, help="output directory (model.json, loss.csv, manifest.json)")

    p = sub.add_parser("finetune", help="retrain a tanh model with the blended activation")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_target_flags(p)
    p.add_argument("--alpha0", type=float, default=3.0)
    _add_train_flags(p, 5000)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="compare a model and a KDE against the true density")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dist", required=True, choices=sorted(distributions.DISTRIBUTIONS))
    p.add_argument("--kde-h", type=_kde_h, default=None, help="bandwidth, or 'cv' (default: the experiment's)")
    p.add_argument("--grid", nargs=3, type=float, metavar=("LO", "HI", "N"), default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="run a reference experiment end to end")
    p.add_argument("name", nargs="?", choices=sorted(distributions.DISTRIBUTIONS))
    p.add_argument("--seed", type=int, nargs="+", default=[1])
    p.add_argument("--epochs", type=_positive_int, default=None, help="override the training epochs")
    p.add_argument("--finetune-epochs", type=_positive_int, default=None)
    p.add_argument("--kde-h", type=_kde_h, default=None)
    p.add_argument("--manifest", help="rerun exactly from a manifest written by an earlier run")
    p.add_argument("--outdir", default=None, help=f"results root (default ${OUTPUT_ROOT_ENV} or ./results)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="seeds run in parallel processes")
    return parser


def _load_targets(args, data):
    if args.targets_file:
        try:
            return pipeline.targets.TargetSet.from_csv(args.targets_file)
        except (OSError, ValueError) as exc:
            raise StageError("targets", f"cannot read {args.targets_file}: {exc}") from exc
    m = args.m or 10 * data.shape[0]
    with pipeline._stage("targets"):
        return pipeline.make_targets(data, args.estimator, m, args.margin, args.target_seed,
                                     args.include_data_points)


def _target_record(args, data):
    if args.targets_file:
        return {"targets_file": str(args.targets_file)}
    return {"estimator": args.estimator, "m": args.m or 10 * data.shape[0], "margin": args.margin,
            "target_seed": args.target_seed, "include_data_points": args.include_data_points}


def _train_config(args) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, adadelta_decay=args.adadelta_decay,
        adadelta_eps=args.adadelta_eps, seed=args.seed, shuffle=not args.no_shuffle,
        loss_reduction=args.loss_reduction,
    )


def _load_model(path):
    try:
        return minn.load(path)
    except (OSError, ValueError) as exc:
        raise StageError("read", f"cannot load model {path}: {exc}") from exc


def cmd_sample(args):
    with pipeline._stage("sample"):
        data = distributions.sample(distributions.by_name(args.dist), args.n, args.seed)
        pipeline.write_dataset(data, args.out)
        pipeline.write_json({"command": "sample", "dist": args.dist, "n": args.n, "seed": args.seed,
                             "defaults_version": DEFAULTS["version"]}, f"{args.out}.manifest.json")


def cmd_targets(args):
    data = pipeline.read_dataset(args.data)
    tset = _load_targets(args, data)
    with pipeline._stage("write"):
        tset.to_csv(args.out)
        pipeline.write_json({"command": "targets", "data": str(args.data), **_target_record(args, data)},
                            f"{args.out}.manifest.json")


def cmd_train(args):
    data = pipeline.read_dataset(args.data)
    tset = _load_targets(args, data)
    cfg = _train_config(args)
    out = Path(args.out)
    with pipeline._stage("train"):
        out.mkdir(parents=True, exist_ok=True)
        model = minn.init(data.shape[1], args.hidden, args.seed, args.init_scale, data=data)
        model, state = training.train(model, tset, cfg)
        minn.save(model, out / "model.json")
        training.write_loss_trace(state, out / "loss.csv")
        pipeline.write_json({"command": "train", "data": str(args.data), "hidden": args.hidden,
                             "init_scale": args.init_scale, "train": cfg.__dict__,
                             "final_loss": state.loss_trace[-1], **_target_record(args, data)},
                            out / "manifest.json")


def cmd_finetune(args):
    model = _load_model(args.model)
    if model.alpha is not None:
        raise StageError("finetune", "model is already fine-tuned (blend activation)")
    data = pipeline.read_dataset(args.data)
    tset = _load_targets(args, data)
    cfg = _train_config(args)
    out = Path(args.out)
    with pipeline._stage("finetune"):
        out.mkdir(parents=True, exist_ok=True)
        tuned, state = training.finetune(model, tset, cfg, args.alpha0)
        minn.save(tuned, out / "model.json")
        training.write_loss_trace(state, out / "loss.csv")
        pipeline.write_json({"command": "finetune", "model": str(args.model), "data": str(args.data),
                             "alpha0": args.alpha0, "train": cfg.__dict__, "rho": tuned.rho.tolist(),
                             "final_loss": state.loss_trace[-1], **_target_record(args, data)},
                            out / "manifest.json")


def cmd_eval(args):
    model = _load_model(args.model)
    data = pipeline.read_dataset(args.data)
    defaults = DEFAULTS[args.dist]
    lo, hi, n = args.grid or defaults["grid"]
    out = Path(args.out)
    with pipeline._stage("eval"):
        grid = pipeline.metrics.Grid1D(lo, hi, int(n))
        bandwidth = pipeline.resolve_bandwidth(data, args.kde_h or str(defaults["kde_h"]))
        curves, report = pipeline.evaluate(model, distributions.by_name(args.dist), data, grid, bandwidth)
        out.mkdir(parents=True, exist_ok=True)
        pipeline.write_curves(curves, out / "curves.csv")
        pipeline.write_json(report, out / "metrics.json")
    print(json.dumps(report, sort_keys=True))


def _run_one(manifest_json: str, outdir: str) -> dict:
    return pipeline.run_experiment(pipeline.ExperimentManifest.from_json(manifest_json), outdir)


def cmd_experiment(args):
    root = Path(args.outdir or os.environ.get(OUTPUT_ROOT_ENV, "results"))
    if args.manifest:
        try:
            manifest = pipeline.ExperimentManifest.from_json(Path(args.manifest).read_text(encoding="utf-8"))
        except (OSError, ValueError, TypeError) as exc:
            raise StageError("read", f"cannot load manifest {args.manifest}: {exc}") from exc
        manifests = [manifest]
    else:
        if args.name is None:
            raise StageError("setup", "give an experiment name or --manifest")
        manifests = [pipeline.make_manifest(args.name, s, args.epochs, args.finetune_epochs, args.kde_h)
                     for s in args.seed]
    jobs = [(m.to_json(), str(root / f"{m.distribution}-seed{m.seed}")) for m in manifests]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run_one, *zip(*jobs)))
    else:
        reports = [_run_one(*job) for job in jobs]
    for (_, path), report in zip(jobs, reports):
        print(json.dumps({"outdir": path, "ise_minn": report["ise_minn"], "ise_kde": report["ise_kde"],
                          "sup_cdf": report["sup_cdf"]}, sort_keys=True))


COMMANDS = {
    "sample": cmd_sample, "targets": cmd_targets, "train": cmd_train,
    "finetune": cmd_finetune, "eval": cmd_eval, "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="cdfnet %(levelname)s %(message)s", stream=sys.stderr)
    if args.show_defaults:
        print(json.dumps(DEFAULTS, indent=1, sort_keys=True))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"cdfnet: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if exc.kind == "numeric" else EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
