"""``cmvmed`` command line: train, predict, experiment, sweep, synth."""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import CmvMedError, InputError
from .experiment import CMV, ExperimentConfig, SynthSpec, cross_validate, format_table, run_trials
from .experiment import sweep_labeled_size, write_results
from .trainer import COUPLINGS, TrainConfig, load_model, predict, predict_score, save_model, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(f"{self.prog}: {message}")


class _UsageExit(Exception):
    pass


def _floats(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text):
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _files(text):
    return tuple(p for p in text.split(",") if p)


def _add_data(p, required=False):
    p.add_argument("--views", type=_files, required=required, help="comma-separated view CSV files")
    p.add_argument("--labels", help="label file: one of +1, -1, ? per line")
    p.add_argument("--normalize", action="store_true", help="length-normalize every view row")


def _add_synth(p):
    g = p.add_argument_group("synthetic data (used when --views is absent)")
    d = SynthSpec()
    g.add_argument("--n-per-class", type=int, default=d.n_per_class)
    g.add_argument("--noise1", type=float, default=d.noise1)
    g.add_argument("--noise2", type=float, default=d.noise2)
    g.add_argument("--agreement", type=float, default=d.view_agreement,
                   help="fraction of samples on which view 2 is informative")
    g.add_argument("--clutter-scale", type=float, default=d.clutter_scale)
    g.add_argument("--separation", type=float, default=d.separation)
    g.add_argument("--dim", type=int, default=d.dim)
    g.add_argument("--data-seed", type=int, default=d.seed)


def _add_model(p):
    p.add_argument("--gamma-grid", type=_floats, default=(0.3, 1.0),
                   help="kernel widths tried for every view")
    p.add_argument("--sigma2-grid", type=_floats, default=(0.3, 1.0),
                   help="prior variances tried for every view")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--iters", type=int, default=10, help="annealing iterations T")
    p.add_argument("--coupling", choices=COUPLINGS, default="consensus")
    p.add_argument("--score-mode", choices=("self-consistent", "literal"), default="self-consistent")
    p.add_argument("--seed", type=int, default=0)


def _synth_spec(args):
    return SynthSpec(args.n_per_class, args.noise1, args.noise2, args.agreement, args.separation,
                     args.clutter_scale, args.dim, args.data_seed)


def build_parser():
    parser = _Parser(prog="cmvmed", description="Consensus-based multi-view MED classifier.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model and save it")
    _add_data(p, required=True)
    _add_model(p)
    p.add_argument("--labeled-size", type=int,
                   help="draw a stratified labeled subset of this size (default: all known labels)")
    p.add_argument("--jobs", type=int, default=1, help="views solved concurrently")
    p.add_argument("--out", required=True, help="model directory")

    p = sub.add_parser("predict", help="score view files with a saved model")
    p.add_argument("--model", required=True, help="model directory written by train")
    p.add_argument("--views", type=_files, required=True)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", help="write predictions here instead of stdout")

    for name, helptext in (("experiment", "repeated trials at one labeled-set size"),
                           ("sweep", "repeated trials across labeled-set sizes")):
        p = sub.add_parser(name, help=helptext)
        _add_data(p)
        _add_synth(p)
        _add_model(p)
        if name == "experiment":
            p.add_argument("--labeled-size", type=int, default=10)
        else:
            p.add_argument("--labeled-size", type=_ints, default=(10, 20, 40, 80),
                           help="comma-separated sizes")
        p.add_argument("--trials", type=int, default=20)
        p.add_argument("--test-fraction", type=float, default=100 / 310)
        p.add_argument("--jobs", type=int, default=1, help="trials run in this many processes")
        p.add_argument("--out", help="directory for result files")

    p = sub.add_parser("synth", help="write a synthetic two-view dataset")
    _add_synth(p)
    p.add_argument("--out", required=True, help="directory for view1.csv, view2.csv, labels.txt")
    return parser


def _load(args):
    if not args.views:
        raise InputError("--views is required")
    if not args.labels:
        raise InputError("--labels is required with --views")
    ds = data_mod.load(args.views, args.labels)
    return data_mod.length_normalize(ds) if args.normalize else ds


def _cmd_train(args):
    ds = _load(args)
    if args.labeled_size is not None:
        ds = data_mod.split(ds, args.labeled_size, 0.0, seed=args.seed)
    else:
        known = np.flatnonzero(ds.labels != data_mod.UNKNOWN)
        ds = data_mod.MultiViewDataset(ds.views, ds.labels, known,
                                       np.flatnonzero(ds.labels == data_mod.UNKNOWN),
                                       np.zeros(0, np.int64))
    gammas, sigmas = cross_validate(ds, args.gamma_grid, args.sigma2_grid, args.folds, args.seed,
                                    CMV, args.iters, args.coupling, args.score_mode)
    cfg = TrainConfig(gamma=gammas, sigma2=sigmas, T=args.iters, coupling=args.coupling,
                      score_mode=args.score_mode, seed=args.seed, n_jobs=args.jobs)
    model = train(ds, cfg)
    save_model(model, args.out)
    print(f"trained on |L|={len(ds.L)} |U|={len(ds.U)}; gamma={list(gammas)} sigma2={list(sigmas)}; "
          f"model saved to {args.out}")


def _cmd_predict(args):
    model = load_model(args.model)
    views = [data_mod.read_matrix(p) for p in args.views]
    if len({X.shape[0] for X in views}) != 1:
        raise InputError("view files have different row counts")
    if args.normalize:
        views = list(data_mod.length_normalize(data_mod.MultiViewDataset.from_arrays(
            views, np.zeros(views[0].shape[0]))).views)
    s = predict_score(model, views)
    labels = np.atleast_1d(predict(model, views))
    head = "label\tq_plus\t" + "\t".join(f"score_{i + 1}" for i in range(model.n_views))
    lines = [head]
    for n in range(labels.shape[0]):
        lines.append(f"{labels[n]:+d}\t{s.q_plus[n]:.10f}\t"
                     + "\t".join(f"{f:.10f}" for f in s.view_scores[:, n]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _experiment_config(args, sizes):
    return ExperimentConfig(
        labeled_sizes=sizes, test_fraction=args.test_fraction, trials=args.trials,
        folds=args.folds, gamma_grid=args.gamma_grid, sigma2_grid=args.sigma2_grid, T=args.iters,
        coupling=args.coupling, score_mode=args.score_mode, seed=args.seed,
        normalize=args.normalize, workers=args.jobs, synth=_synth_spec(args),
        view_files=args.views, label_file=args.labels,
    )


def _cmd_experiment(args):
    cfg = _experiment_config(args, (args.labeled_size,))
    table = run_trials(cfg)
    sys.stdout.write(format_table(table))
    if args.out:
        write_results(table, args.out)


def _cmd_sweep(args):
    cfg = _experiment_config(args, args.labeled_size)
    table = sweep_labeled_size(cfg)
    sys.stdout.write(format_table(table))
    if args.out:
        write_results(table, args.out, curve=True)


def _cmd_synth(args):
    ds = _synth_spec(args).make()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / f"view{i + 1}.csv" for i in range(ds.n_views)]
    data_mod.save(ds, files, out / "labels.txt")
    print(f"wrote {ds.n_samples} samples to {out}")


COMMANDS = {"train": _cmd_train, "predict": _cmd_predict, "experiment": _cmd_experiment,
            "sweep": _cmd_sweep, "synth": _cmd_synth}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default" if args.verbose else "ignore")
            COMMANDS[args.command](args)
    except (CmvMedError, OSError, ArithmeticError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
