"""Deterministic-annealing EM for consensus-based multi-view MED.

Iteration 0 trains every view as a plain kernel SVM.  Each later iteration
``t``:

a. scores the unlabeled samples with the ``t-1`` view models and takes the
   weighted geometric mean of their predictive distributions as the
   consensus ``q_t``;
b. downdates each view's kernel with the logistic curvature of its own
   ``t-1`` scores at coupling ``lam_t = 1 - exp(-t/2)`` and re-solves the
   dual (views are independent here and may run concurrently);
c. advances ``lam``.

Step (b) minimizes a second-order expansion of the unlabeled cross-entropy
``E_q[-log p_i(y|x_n, w)]`` around the ``t-1`` scores.  With
``coupling="consensus"`` (default) both the gradient and the curvature of
that expansion are kept, so each view is pulled toward the consensus.  With
``coupling="curvature"`` only the curvature is kept: the kernel is downdated
but the consensus never reaches the dual.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .consensus import (ConsensusDistribution, binary_kl, check_weights, curvature_weights,
                        lambda_at, update_consensus)
from .errors import InputError, TrainingError
from .kernel import KernelSpec, gram_blocks
from .med import (decision_score, fit_view, load_posterior, resolve_score_scale, save_posterior,
                  sign_with_tie)

COUPLINGS = ("consensus", "curvature")


@dataclass(frozen=True)
class TrainConfig:
    gamma: tuple = (1.0, 1.0)
    sigma2: tuple = (1.0, 1.0)
    T: int = 10
    pi: tuple | None = None
    score_mode: str = "self-consistent"
    coupling: str = "consensus"
    qp_tol: float = 1e-8
    early_stop_tol: float = 1e-6
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "sigma2", tuple(float(s) for s in self.sigma2))
        if len(self.gamma) != len(self.sigma2):
            raise InputError("gamma and sigma2 need one entry per view")
        if self.T < 0:
            raise InputError(f"T must be nonnegative, got {self.T}")
        if any(s <= 0 for s in self.sigma2):
            raise InputError("every sigma2 must be positive")
        if self.pi is not None:
            object.__setattr__(self, "pi", tuple(check_weights(self.pi, len(self.gamma)).tolist()))
        resolve_score_scale(1.0, self.score_mode)
        if self.coupling not in COUPLINGS:
            raise InputError(f"unknown coupling {self.coupling!r}; expected one of {COUPLINGS}")

    @property
    def n_views(self):
        return len(self.gamma)

    def weights(self):
        return check_weights(self.pi, self.n_views)

    def kernel_specs(self):
        return [KernelSpec(g) for g in self.gamma]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lam: float
    objective: float
    hinge: float
    prior_kl: float
    disagreement: float
    dual_objectives: tuple
    consensus_entropy: float
    # consensus term under the t-1 models, before and after the consensus update
    disagreement_before_update: float | None = None
    disagreement_after_update: float | None = None


@dataclass(frozen=True)
class ObjectiveTerms:
    total: float
    hinge: float
    prior_kl: float
    disagreement: float


@dataclass(frozen=True, eq=False)
class CmvMedModel:
    views: tuple
    consensus: ConsensusDistribution
    config: TrainConfig
    history: tuple = field(default=())

    @property
    def n_views(self):
        return len(self.views)


@dataclass(frozen=True)
class PredictScore:
    view_scores: np.ndarray
    q_plus: np.ndarray
    combined_plus: np.ndarray
    combined_minus: np.ndarray


def unlabeled_scores(models):
    return [m.unlabeled_scores() for m in models]


def disagreement(q_plus, scores, pi):
    """``sum_n sum_i pi_i KL(q_n || p_i,n)`` with plug-in posterior means."""
    return float(sum(w * binary_kl(q_plus, expit(f)).sum() for w, f in zip(pi, scores)))


def objective(models, consensus, lam, pi=None):
    """Annealed free energy of a training state, split into its three terms.

    The prior term keeps only the mean contribution ``||w||^2 / (2 sigma2)``
    of each Gaussian KL, measured in the downdated kernel geometry
    (covariance terms omitted), so only differences between states are
    meaningful.
    """
    pi = check_weights(pi, len(models))
    hinge = 0.0
    prior = 0.0
    for w, m in zip(pi, models):
        hinge += float(np.maximum(0.0, 1.0 - m.labels * m.training_scores()).sum())
        prior += w * (m.score_scale ** 2 / (2.0 * m.sigma2)) * m.mean_norm_sq()
    dis = disagreement(consensus.q_plus, unlabeled_scores(models), pi)
    return ObjectiveTerms(hinge + lam * prior + lam * dis, hinge, prior, dis)


def _solve_views(jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            return list(pool.map(lambda job: job(), jobs))
    return [job() for job in jobs]


def _checked(model, iteration):
    if not model.dual.converged:
        raise TrainingError(
            f"dual solver did not converge for view {model.view_id} at iteration {iteration}",
            view=model.view_id, iteration=iteration,
        )
    return model


def _consensus_of(scores, pi):
    return update_consensus(np.array([expit(f) for f in scores]).reshape(len(scores), -1), pi)


def _record(t, lam, models, q, pi, before=None, after=None):
    terms = objective(models, q, lam, pi)
    return IterationRecord(
        iteration=t, lam=lam, objective=terms.total, hinge=terms.hinge,
        prior_kl=terms.prior_kl, disagreement=terms.disagreement,
        dual_objectives=tuple(m.dual.objective for m in models),
        consensus_entropy=q.entropy(),
        disagreement_before_update=before, disagreement_after_update=after,
    )


def train(dataset, config=None):
    """Fit one MED per view, coupled through the unlabeled consensus.

    Raises
    ------
    TrainingError
        If any view's dual solve fails to converge; carries the view id and
        the iteration.
    """
    config = config or TrainConfig()
    if dataset.n_views != config.n_views:
        raise InputError(f"config describes {config.n_views} views, dataset has {dataset.n_views}")
    pi = config.weights()
    specs = config.kernel_specs()
    y = dataset.labels[dataset.L].astype(float)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InputError("need at least one labeled sample of each class")
    X_L = dataset.view_rows(dataset.L)
    X_U = dataset.view_rows(dataset.U)
    scales = [resolve_score_scale(s, config.score_mode) for s in config.sigma2]
    blocks = [gram_blocks(X_L[i], X_U[i], specs[i]) for i in range(config.n_views)]

    def job(i, nu=None, lam=0.0, alpha0=None, t=0, target=None):
        def run():
            m = fit_view(X_L[i], y, specs[i], config.sigma2[i], X_U[i], nu, lam, scales[i],
                         view_id=i, tol=config.qp_tol, alpha0=alpha0, target=target,
                         blocks=blocks[i])
            return _checked(m, t)
        return run

    models = _solve_views([job(i) for i in range(config.n_views)], config.n_jobs)
    scores = unlabeled_scores(models)
    # no consensus exists before the first E-step; start from the uniform one
    q = ConsensusDistribution(np.full(len(dataset.U), 0.5))
    history = [_record(0, 0.0, models, q, pi)]

    for t in range(1, config.T + 1):
        # (a) consensus from the t-1 models; barrier before any view moves
        q_prev = q
        q = _consensus_of(scores, pi)
        before = disagreement(q_prev.q_plus, scores, pi)
        after = disagreement(q.q_plus, scores, pi)
        # (b) per-view downdated duals, curvature taken at the t-1 scores
        lam = lambda_at(t)
        jobs = []
        for i in range(config.n_views):
            nu = curvature_weights(scores[i])
            target = None
            if config.coupling == "consensus":
                target = nu * scores[i] + q.q_plus - expit(scores[i])
            jobs.append(job(i, nu, lam, models[i].alpha, t, target))
        new_models = _solve_views(jobs, config.n_jobs)
        change = max(float(np.abs(a.alpha - b.alpha).max(initial=0.0))
                     for a, b in zip(new_models, models))
        models = new_models
        scores = unlabeled_scores(models)
        history.append(_record(t, lam, models, q, pi, before, after))
        if change < config.early_stop_tol:
            break

    final_q = _consensus_of(scores, pi)
    return CmvMedModel(tuple(models), final_q, config, tuple(history))


def predict_score(model, x_views):
    """Per-view scores, consensus and the two candidate-label utilities.

    ``x_views`` holds one feature vector (or one matrix of points) per view.
    The utility of label ``yh`` is ``q(yh|x) * yh/2 * sum_i f_i(x)``.
    """
    if len(x_views) != model.n_views:
        raise InputError(f"expected {model.n_views} views, got {len(x_views)}")
    f = np.array([np.atleast_1d(decision_score(m, x)) for m, x in zip(model.views, x_views)])
    return combine_scores(f, model.config.weights())


def combine_scores(view_scores, pi=None):
    """Consensus utilities from a (V, n) array of per-view scores."""
    f = np.atleast_2d(np.asarray(view_scores, dtype=float))
    q = update_consensus(expit(f), pi).q_plus
    total = f.sum(axis=0)
    return PredictScore(f, q, q * 0.5 * total, -(1.0 - q) * 0.5 * total)


def decide(score):
    """Labels from a :class:`PredictScore`: the argmax over the two
    utilities, checked against the sign of the summed view scores."""
    by_argmax = np.where(score.combined_plus >= score.combined_minus, 1, -1)
    by_sign = sign_with_tie(score.view_scores.sum(axis=0))
    if not np.array_equal(by_argmax, by_sign):
        raise ArithmeticError("consensus argmax disagrees with the sign of the summed scores")
    return by_argmax


def predict(model, x_views):
    """Consensus label; ties go to +1."""
    labels = decide(predict_score(model, x_views))
    single = all(np.ndim(x) == 1 for x in x_views)
    return int(labels[0]) if single else labels


def predict_view(model, view, x):
    """Label from a single view's model."""
    return sign_with_tie(decision_score(model.views[view], x))


# -- persistence --------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def save_model(model, out_dir):
    """Write ``manifest.json`` plus one ``view_<i>.txt`` per view."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for m in model.views:
        name = f"view_{m.view_id}.txt"
        save_posterior(m, out / name)
        files.append(name)
    manifest = {
        "format": "cmvmed-model/1",
        "config": asdict(model.config),
        "views": files,
        "consensus_q_plus": model.consensus.q_plus.tolist(),
        "history": [{k: _jsonable(v) for k, v in asdict(r).items()} for r in model.history],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def load_model(out_dir):
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != "cmvmed-model/1":
        raise InputError(f"{out}: not a cmvmed model directory")
    config = TrainConfig(**manifest["config"])
    views = tuple(load_posterior(out / name) for name in manifest["views"])
    history = tuple(
        IterationRecord(**{**r, "dual_objectives": tuple(r["dual_objectives"])})
        for r in manifest["history"]
    )
    q = ConsensusDistribution(np.array(manifest["consensus_q_plus"], dtype=float))
    return CmvMedModel(views, q, config, history)
