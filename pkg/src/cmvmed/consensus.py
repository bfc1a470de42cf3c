"""Consensus label distribution, curvature weights and the annealing schedule."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InputError

EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ConsensusDistribution:
    """``q(y=+1 | x_n)`` for every unlabeled sample, clamped to [EPS, 1-EPS]."""

    q_plus: np.ndarray

    @property
    def q_minus(self):
        return 1.0 - self.q_plus

    def entropy(self):
        """Mean binary entropy in nats."""
        if self.q_plus.size == 0:
            return 0.0
        q = self.q_plus
        return float(np.mean(-(q * np.log(q) + (1.0 - q) * np.log1p(-q))))


def uniform_weights(n_views):
    return np.full(n_views, 1.0 / n_views)


def check_weights(pi, n_views):
    pi = uniform_weights(n_views) if pi is None else np.asarray(pi, dtype=float).ravel()
    if pi.shape != (n_views,):
        raise InputError(f"expected {n_views} view weights, got {pi.shape[0]}")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise InputError(f"view weights must be nonnegative and sum to 1, got {pi.tolist()}")
    return pi


def update_consensus(per_view_q_plus, pi=None):
    """Weighted geometric mean of per-view predictive distributions.

    ``q(y|x_n)`` is proportional to ``prod_i p_i(y|x_n) ** pi_i``, the exact
    minimizer of ``sum_i pi_i KL(q || p_i)``.  Inputs are clamped away from 0
    and 1 before taking logs.

    Parameters
    ----------
    per_view_q_plus : (V, n) array
        ``p_i(y=+1 | x_n)`` for each view.
    pi : (V,) array, optional
        View weights; uniform by default.
    """
    P = np.atleast_2d(np.asarray(per_view_q_plus, dtype=float))
    pi = check_weights(pi, P.shape[0])
    P = np.clip(P, EPS, 1.0 - EPS)
    log_plus = pi @ np.log(P)
    log_minus = pi @ np.log1p(-P)
    # two-class softmax: q+ = sigmoid(log_plus - log_minus)
    q = expit(log_plus - log_minus)
    return ConsensusDistribution(np.clip(q, EPS, 1.0 - EPS))


def curvature_weights(scores):
    """Logistic curvature ``sigmoid(f) * (1 - sigmoid(f))``; independent of y."""
    s = expit(np.asarray(scores, dtype=float))
    # expit(-f) rather than 1 - s keeps nu(f) == nu(-f) bit-for-bit
    return s * expit(-np.asarray(scores, dtype=float))


def lambda_at(t):
    if t < 0:
        raise InputError(f"iteration index must be nonnegative, got {t}")
    return float(1.0 - np.exp(-0.5 * t))


def binary_kl(q_plus, p_plus):
    """Elementwise ``KL(q || p)`` between Bernoulli distributions."""
    q = np.clip(np.asarray(q_plus, dtype=float), EPS, 1.0 - EPS)
    p = np.clip(np.asarray(p_plus, dtype=float), EPS, 1.0 - EPS)
    return q * (np.log(q) - np.log(p)) + (1.0 - q) * (np.log1p(-q) - np.log1p(-p))
