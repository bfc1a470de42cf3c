"""Single-view maximum entropy discrimination with a Gaussian prior.

With prior ``N(0, sigma2 I)`` the MED dual is a bias-free kernel SVM with
box ``[0, 1]``.  The posterior mean is only ever touched through kernel
inner products, so a view model is its dual variables plus the kernel
bundle they were solved against.

Inside the multi-view trainer a view may also carry ``u_weights``: fixed
coefficients on the unlabeled points that come from the gradient of the
unlabeled cross-entropy against the consensus.  The score is then::

    f(x) = score_scale * (K~(x, L) @ (y * alpha) + K~(x, U) @ u_weights)
"""

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import InputError
from .kernel import GramBundle, KernelSpec, build_bundle, modified_cross_blocks
from .qp import DualSolution, solve_dual

SCORE_MODES = ("self-consistent", "literal")


def resolve_score_scale(sigma2, mode="self-consistent"):
    """``sigma2`` keeps unconstrained margins at exactly 1; ``literal`` uses 1."""
    if mode == "self-consistent":
        return float(sigma2)
    if mode == "literal":
        return 1.0
    raise InputError(f"unknown score mode {mode!r}; expected one of {SCORE_MODES}")


@dataclass(frozen=True, eq=False)
class MedPosterior:
    view_id: int
    dual: DualSolution
    labels: np.ndarray
    sigma2: float
    kernel_spec: KernelSpec
    bundle: GramBundle
    score_scale: float
    X_L: np.ndarray = field(repr=False)
    X_U: np.ndarray = field(repr=False)
    u_weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.score_scale > 0:
            raise InputError(f"score_scale must be positive, got {self.score_scale}")
        if self.u_weights is None:
            object.__setattr__(self, "u_weights", np.zeros(self.X_U.shape[0]))

    @property
    def alpha(self):
        return self.dual.alpha

    @property
    def coef(self):
        """``score_scale * y * alpha``: weights on the rows of ``K~``."""
        return self.score_scale * self.labels * self.dual.alpha

    @property
    def has_unlabeled_term(self):
        return bool(np.any(self.u_weights != 0))

    @cached_property
    def _u_effective(self):
        return self.bundle.unlabeled_weights(self.u_weights)

    def with_score_scale(self, score_scale):
        return MedPosterior(self.view_id, self.dual, self.labels, self.sigma2, self.kernel_spec,
                            self.bundle, float(score_scale), self.X_L, self.X_U, self.u_weights)

    def mean_norm_sq(self):
        """Squared norm of the posterior-mean coefficients in the downdated
        kernel geometry (divided by ``score_scale ** 2``)."""
        c = self.labels * self.dual.alpha
        out = float(c @ self.bundle.K_tilde @ c)
        if self.has_unlabeled_term:
            b = self.bundle
            u = self.u_weights
            out += 2.0 * float(u @ b.K_tilde_UL @ c) + float(u @ (b.K_U @ self._u_effective))
        return out

    def training_scores(self):
        """Scores at the labeled points, read straight off ``K~``."""
        f = self.bundle.K_tilde @ self.coef
        if self.has_unlabeled_term:
            f = f + self.score_scale * (self.bundle.K_UL.T @ self._u_effective)
        return f

    def unlabeled_scores(self):
        """Scores at the unlabeled training points, read off the bundle."""
        b = self.bundle
        f = b.K_tilde_UL @ self.coef
        if self.has_unlabeled_term:
            f = f + self.score_scale * (b.K_U @ self._u_effective)
        return f


def _check_labels(y):
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.abs(y) == 1):
        raise InputError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InputError("both classes must be present among the labeled samples")
    return y


def fit_view(X_L, y, spec, sigma2, X_U=None, nu=None, lam=0.0, score_scale=None,
             view_id=0, tol=1e-8, max_sweeps=None, alpha0=None, target=None, blocks=None):
    """Solve one view's dual against the (possibly downdated) kernel.

    ``target`` is the gradient-side pull ``b_n = nu_n f_n + q_n - sigmoid(f_n)``
    at each unlabeled point (previous scores ``f``, consensus ``q``).  It
    shifts the dual's linear term to ``1 - lam sigma2 y * (K~_LU b)`` and
    adds ``lam * b`` as unlabeled weights in the score.  ``None`` keeps the
    curvature-only kernel downdate.  ``blocks`` reuses precomputed
    :func:`~cmvmed.kernel.gram_blocks` for these points.
    """
    X_L = np.asarray(X_L, dtype=float)
    y = _check_labels(y)
    if X_L.ndim != 2 or X_L.shape[0] != y.shape[0]:
        raise InputError(f"{y.shape[0]} labels for feature matrix of shape {X_L.shape}")
    if X_U is None:
        X_U = np.zeros((0, X_L.shape[1]))
    X_U = np.asarray(X_U, dtype=float).reshape(-1, X_L.shape[1])
    bundle = build_bundle(X_L, X_U, spec, nu, lam, sigma2, blocks)
    linear = None
    u_weights = None
    if target is not None and lam != 0 and X_U.shape[0]:
        target = np.asarray(target, dtype=float).ravel()
        if target.shape != (X_U.shape[0],):
            raise InputError(f"target must have length {X_U.shape[0]}, got {target.shape[0]}")
        u_weights = lam * target
        linear = 1.0 - sigma2 * y * (bundle.K_UL.T @ bundle.unlabeled_weights(u_weights))
    dual = solve_dual(bundle.K_tilde, y, sigma2, tol=tol, max_sweeps=max_sweeps, alpha0=alpha0,
                      linear=linear)
    if score_scale is None:
        score_scale = resolve_score_scale(sigma2)
    return MedPosterior(view_id, dual, y, float(sigma2), spec, bundle, float(score_scale),
                        X_L, X_U, u_weights)


def train_single_view(X_L, y, spec, sigma2, score_mode="self-consistent", view_id=0, tol=1e-8):
    """Train a standalone MED (plain kernel SVM, no unlabeled coupling)."""
    return fit_view(X_L, y, spec, sigma2, score_scale=resolve_score_scale(sigma2, score_mode),
                    view_id=view_id, tol=tol)


def decision_score(model, x):
    """``score_scale * sum_m y_m alpha_m K~(x, x_m)`` for one point or a matrix
    (plus the unlabeled term when the model carries one)."""
    with_u = model.has_unlabeled_term
    rows_L, k_U = modified_cross_blocks(x, model.bundle, model.X_L, model.X_U,
                                        model.kernel_spec, unlabeled=with_u)
    f = rows_L @ model.coef
    if with_u:
        f = f + model.score_scale * (k_U @ model._u_effective)
    return f[0] if np.ndim(x) == 1 else f


def predictive_prob(model, x, y=1):
    """Logistic predictive probability ``sigmoid(y * f(x))``."""
    return expit(y * decision_score(model, x))


def sign_with_tie(f):
    """Sign with ``0 -> +1``."""
    return np.where(np.asarray(f) >= 0, 1, -1)


def predict(model, x):
    out = sign_with_tie(decision_score(model, x))
    return int(out) if out.ndim == 0 else out


# -- text serialization ------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def dumps_posterior(model):
    """Serialize to a ``key: value`` header followed by two numeric tables.

    ``[labeled]`` rows are ``y alpha x_1 .. x_d``; ``[unlabeled]`` rows are
    ``nu u_weight x_1 .. x_d``.  The kernel bundle is rebuilt on load.
    """
    b = model.bundle
    header = {
        "format": "cmvmed-view/2",
        "view_id": model.view_id,
        "gamma": _fmt(model.kernel_spec.gamma),
        "sigma2": _fmt(model.sigma2),
        "score_scale": _fmt(model.score_scale),
        "lam": _fmt(b.lam),
        "n_labeled": b.n_labeled,
        "n_unlabeled": b.n_unlabeled,
        "dim": model.X_L.shape[1],
        "dual_objective": _fmt(model.dual.objective),
        "iterations": model.dual.iterations,
        "converged": str(bool(model.dual.converged)).lower(),
    }
    lines = [f"{k}: {v}" for k, v in header.items()]
    lines.append("[labeled]")
    for yv, a, row in zip(model.labels, model.alpha, model.X_L):
        lines.append(" ".join([str(int(yv)), _fmt(a), *map(_fmt, row)]))
    lines.append("[unlabeled]")
    for nu, u, row in zip(b.nu, model.u_weights, model.X_U):
        lines.append(" ".join([_fmt(nu), _fmt(u), *map(_fmt, row)]))
    return "\n".join(lines) + "\n"


def loads_posterior(text):
    lines = text.splitlines()
    header = {}
    i = 0
    while i < len(lines) and lines[i] != "[labeled]":
        key, _, value = lines[i].partition(":")
        header[key.strip()] = value.strip()
        i += 1
    if header.get("format") != "cmvmed-view/2":
        raise InputError("not a cmvmed view model")
    n_l, n_u, d = int(header["n_labeled"]), int(header["n_unlabeled"]), int(header["dim"])
    lab = np.array([[float(t) for t in ln.split()] for ln in lines[i + 1:i + 1 + n_l]]).reshape(n_l, d + 2)
    j = i + 1 + n_l
    if lines[j] != "[unlabeled]":
        raise InputError("malformed view model: missing [unlabeled] section")
    unl = np.array([[float(t) for t in ln.split()] for ln in lines[j + 1:j + 1 + n_u]]).reshape(n_u, d + 2)

    spec = KernelSpec(float(header["gamma"]))
    sigma2 = float(header["sigma2"])
    y = lab[:, 0]
    X_L, X_U = lab[:, 2:], unl[:, 2:]
    bundle = build_bundle(X_L, X_U, spec, unl[:, 0], float(header["lam"]), sigma2)
    dual = DualSolution(lab[:, 1], float(header["dual_objective"]), int(header["iterations"]),
                        header["converged"] == "true")
    return MedPosterior(int(header["view_id"]), dual, y, sigma2, spec, bundle,
                        float(header["score_scale"]), X_L, X_U, unl[:, 1])


def save_posterior(model, path):
    Path(path).write_text(dumps_posterior(model), encoding="utf-8")


def load_posterior(path):
    return loads_posterior(Path(path).read_text(encoding="utf-8"))
