"""Repeated-trial experiment harness: CV model selection, trials, |L| sweeps."""

import itertools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import data as data_mod
from .data import UNKNOWN, MultiViewDataset
from .errors import CmvMedError, InputError
from .kernel import KernelSpec
from .med import predict as med_predict
from .med import train_single_view
from .trainer import TrainConfig, predict, train

log = logging.getLogger(__name__)

CMV = "cmv-med"


def view_method(i):
    return f"med-view{i + 1}"


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: int = 155
    noise1: float = 1.5
    noise2: float = 0.2
    view_agreement: float = 0.3
    separation: float = 1.0
    clutter_scale: float = 5.0
    dim: int = 10
    seed: int = 0

    def make(self):
        return data_mod.synth_two_view(
            self.n_per_class, self.noise1, self.noise2, self.view_agreement, seed=self.seed,
            separation=self.separation, dim=self.dim, clutter_scale=self.clutter_scale,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run of :func:`run_trials` depends on.

    ``view_files``/``label_file`` select file input; otherwise ``synth``
    generates the data.  The dataset is fixed across trials; each trial
    redraws L, U and the test set with seed ``seed + trial``.
    """

    labeled_sizes: tuple = (10,)
    test_fraction: float = 100 / 310
    trials: int = 20
    folds: int = 5
    gamma_grid: tuple = (0.3, 1.0)
    sigma2_grid: tuple = (0.3, 1.0)
    T: int = 10
    coupling: str = "consensus"
    score_mode: str = "self-consistent"
    seed: int = 0
    normalize: bool = False
    workers: int = 1
    synth: SynthSpec = field(default_factory=SynthSpec)
    view_files: tuple | None = None
    label_file: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("trials must be at least 1")
        if self.folds < 2:
            raise InputError("folds must be at least 2")
        if not self.gamma_grid or not self.sigma2_grid:
            raise InputError("hyperparameter grids must be non-empty")
        if not self.labeled_sizes:
            raise InputError("need at least one labeled-set size")

    def load_dataset(self):
        if self.view_files:
            if not self.label_file:
                raise InputError("a label file is required with view files")
            ds = data_mod.load(self.view_files, self.label_file)
        else:
            ds = self.synth.make()
        return data_mod.length_normalize(ds) if self.normalize else ds


@dataclass(frozen=True)
class TrialResult:
    trial: int
    labeled_size: int
    accuracy: dict
    params: dict
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class MethodRow:
    method: str
    labeled_size: int
    mean: float
    std: float
    n_success: int
    n_trials: int


@dataclass(frozen=True)
class ResultTable:
    rows: tuple
    trials: tuple

    def row(self, method, labeled_size=None):
        for r in self.rows:
            if r.method == method and (labeled_size is None or r.labeled_size == labeled_size):
                return r
        raise KeyError(method)

    @property
    def methods(self):
        return list(dict.fromkeys(r.method for r in self.rows))


# -- cross-validation ---------------------------------------------------------

def _joint_grid(gamma_grid, sigma2_grid, n_views):
    """Cartesian per-view grid in tie-break order: smaller gammas first, then
    smaller sigma2s."""
    gammas = sorted(itertools.product(sorted(gamma_grid), repeat=n_views))
    sigmas = sorted(itertools.product(sorted(sigma2_grid), repeat=n_views))
    return [(g, s) for g in gammas for s in sigmas]


def _fold_count(y, folds):
    if y.shape[0] < folds:
        raise InputError(
            f"{y.shape[0]} labeled samples cannot fill {folds} folds; use --folds {max(2, y.shape[0])} or fewer"
        )
    smallest = int(min(np.sum(y > 0), np.sum(y < 0)))
    if smallest < 2:
        raise InputError("each class needs at least 2 labeled samples for cross-validation")
    if smallest < folds:
        warnings.warn(f"reducing CV folds from {folds} to {smallest} (smallest class size)",
                      stacklevel=3)
        return smallest
    return folds


def _restricted(dataset, train_idx, eval_idx):
    """A dataset holding only the fold's training labels, its held-out
    samples (labels hidden) and the unlabeled pool."""
    U = dataset.U
    rows = np.concatenate([train_idx, eval_idx, U])
    labels = np.concatenate([dataset.labels[train_idx],
                             np.full(eval_idx.shape[0] + U.shape[0], UNKNOWN, dtype=np.int64)])
    n_tr, n_ev = train_idx.shape[0], eval_idx.shape[0]
    return MultiViewDataset(
        tuple(X[rows] for X in dataset.views), labels,
        np.arange(n_tr), np.arange(n_tr + n_ev, rows.shape[0]), np.arange(n_tr, n_tr + n_ev),
    )


def cross_validate(dataset, gamma_grid, sigma2_grid, folds=5, seed=0, method=CMV, T=10,
                   coupling="consensus", score_mode="self-consistent"):
    """Pick hyperparameters by stratified k-fold over the labeled set only.

    ``method`` is :data:`CMV` (joint per-view grid) or a view index for a
    standalone single-view MED.  The unlabeled pool joins every fold's
    training as U; test samples are never touched.  Returns
    ``(gammas, sigma2s)`` as per-view tuples (length 1 for a single view).
    """
    L = dataset.L
    y = dataset.labels[L]
    k = _fold_count(y, folds)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    splits = [(L[tr], L[ev]) for tr, ev in splitter.split(np.zeros(len(L)), y)]

    if method == CMV:
        grid = _joint_grid(gamma_grid, sigma2_grid, dataset.n_views)
    else:
        grid = _joint_grid(gamma_grid, sigma2_grid, 1)
    if len(grid) == 1:
        return grid[0]

    best, best_acc = None, -np.inf
    for gammas, sigmas in grid:
        accs = []
        for tr, ev in splits:
            y_ev = dataset.labels[ev]
            try:
                if method == CMV:
                    sub = _restricted(dataset, tr, ev)
                    cfg = TrainConfig(gamma=gammas, sigma2=sigmas, T=T, coupling=coupling,
                                      score_mode=score_mode)
                    model = train(sub, cfg)
                    pred = predict(model, [X[sub.test] for X in sub.views])
                else:
                    X = dataset.views[method]
                    sv = train_single_view(X[tr], dataset.labels[tr], KernelSpec(gammas[0]),
                                           sigmas[0], score_mode=score_mode)
                    pred = med_predict(sv, X[ev])
                accs.append(float(np.mean(pred == y_ev)))
            except CmvMedError:
                accs.append(0.0)
        acc = float(np.mean(accs))
        if acc > best_acc:
            best, best_acc = (gammas, sigmas), acc
    return best


# -- trials -------------------------------------------------------------------

def _accuracy(pred, y):
    return float(np.mean(np.asarray(pred) == y))


def run_trial(dataset, config, labeled_size, trial):
    seed = config.seed + trial
    try:
        ds = data_mod.split(dataset, labeled_size, config.test_fraction, seed=seed)
    except CmvMedError as exc:
        return TrialResult(trial, labeled_size, {}, {}, str(exc))
    y_test = ds.labels[ds.test]
    X_test = [X[ds.test] for X in ds.views]
    acc, params = {}, {}
    errors = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            gammas, sigmas = cross_validate(ds, config.gamma_grid, config.sigma2_grid, config.folds,
                                            seed, CMV, config.T, config.coupling, config.score_mode)
            cfg = TrainConfig(gamma=gammas, sigma2=sigmas, T=config.T, coupling=config.coupling,
                              score_mode=config.score_mode, seed=seed)
            model = train(ds, cfg)
            acc[CMV] = _accuracy(predict(model, X_test), y_test)
            params[CMV] = {"gamma": list(gammas), "sigma2": list(sigmas)}
        except CmvMedError as exc:
            errors.append(f"{CMV}: {exc}")
        for i in range(ds.n_views):
            name = view_method(i)
            try:
                (g,), (s,) = cross_validate(ds, config.gamma_grid, config.sigma2_grid,
                                            config.folds, seed, i, score_mode=config.score_mode)
                sv = train_single_view(ds.views[i][ds.L], ds.labels[ds.L], KernelSpec(g), s,
                                       score_mode=config.score_mode, view_id=i)
                acc[name] = _accuracy(med_predict(sv, X_test[i]), y_test)
                params[name] = {"gamma": [g], "sigma2": [s]}
            except CmvMedError as exc:
                errors.append(f"{name}: {exc}")
    return TrialResult(trial, labeled_size, acc, params, "; ".join(errors) or None)


def _trial_job(args):
    dataset, config, labeled_size, trial = args
    return run_trial(dataset, config, labeled_size, trial)


def aggregate(trials, methods, labeled_size):
    rows = []
    for m in methods:
        vals = np.array([t.accuracy[m] for t in trials if m in t.accuracy])
        if vals.size:
            mean = float(vals.mean())
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        else:
            mean, std = float("nan"), float("nan")
        rows.append(MethodRow(m, labeled_size, mean, std, int(vals.size), len(trials)))
    return rows


def run_trials(config, dataset=None, labeled_sizes=None):
    """Run ``config.trials`` independent trials per labeled-set size.

    Trials run in a process pool when ``config.workers > 1``; results are
    gathered in trial order so output never depends on scheduling.
    """
    dataset = config.load_dataset() if dataset is None else dataset
    sizes = tuple(labeled_sizes or config.labeled_sizes)
    jobs = [(dataset, config, n, t) for n in sizes for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    for r in results:
        if not r.ok:
            log.warning("trial %d (|L|=%d) failed: %s", r.trial, r.labeled_size, r.error)
    methods = [CMV] + [view_method(i) for i in range(dataset.n_views)]
    rows = []
    for n in sizes:
        rows.extend(aggregate([r for r in results if r.labeled_size == n], methods, n))
    return ResultTable(tuple(rows), tuple(results))


def sweep_labeled_size(config, sizes=None, dataset=None):
    return run_trials(config, dataset, sizes or config.labeled_sizes)


# -- output -------------------------------------------------------------------

def format_table(table):
    """Aligned human-readable table (accuracy in percent)."""
    head = f"{'|L|':>5}  {'method':<10}  {'mean':>7}  {'std':>6}  {'ok/trials':>9}"
    lines = [head, "-" * len(head)]
    for r in table.rows:
        lines.append(f"{r.labeled_size:>5}  {r.method:<10}  {100 * r.mean:>7.2f}  "
                     f"{100 * r.std:>6.2f}  {f'{r.n_success}/{r.n_trials}':>9}")
    return "\n".join(lines) + "\n"


RESULT_FIELDS = ("labeled_size", "method", "mean", "std", "n_success", "n_trials")


def format_records(table):
    """Tab-separated records, one per row, fields in :data:`RESULT_FIELDS` order."""
    lines = ["\t".join(RESULT_FIELDS)]
    for r in table.rows:
        lines.append(f"{r.labeled_size}\t{r.method}\t{r.mean:.10f}\t{r.std:.10f}\t"
                     f"{r.n_success}\t{r.n_trials}")
    return "\n".join(lines) + "\n"


def format_trials(table):
    lines = ["labeled_size\ttrial\tmethod\taccuracy\tgamma\tsigma2\terror"]
    for t in table.trials:
        for m, a in t.accuracy.items():
            p = t.params.get(m, {})
            lines.append(f"{t.labeled_size}\t{t.trial}\t{m}\t{a:.10f}\t"
                         f"{','.join(map(repr, p.get('gamma', [])))}\t"
                         f"{','.join(map(repr, p.get('sigma2', [])))}\t{t.error or ''}")
        if not t.accuracy:
            lines.append(f"{t.labeled_size}\t{t.trial}\t-\tnan\t\t\t{t.error}")
    return "\n".join(lines) + "\n"


def format_curve(table):
    """Plot-ready lines ``labeled_size method mean std``; no header."""
    return "".join(f"{r.labeled_size} {r.method} {r.mean:.10f} {r.std:.10f}\n" for r in table.rows)


def write_results(table, out_dir, curve=False):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.txt").write_text(format_table(table), encoding="utf-8")
    (out / "results.tsv").write_text(format_records(table), encoding="utf-8")
    (out / "trials.tsv").write_text(format_trials(table), encoding="utf-8")
    if curve:
        (out / "curve.txt").write_text(format_curve(table), encoding="utf-8")
    return out
