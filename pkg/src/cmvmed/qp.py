"""Box-constrained concave quadratic dual.

Maximizes ``c'a - (sigma2/2) a'Qa`` subject to ``0 <= a <= 1`` with
``Q = K~ * yy'`` and ``c = 1`` unless a linear term is supplied.  There is
no bias term, hence no equality constraint, and each coordinate has a
closed-form clipped maximizer.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, UsageError

DEGENERATE_DIAG = 1e-12
BRUTE_FORCE_MAX = 12


@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    objective: float
    iterations: int
    converged: bool


def _problem(K_tilde, y, sigma2):
    K = np.asarray(K_tilde, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != y.shape[0]:
        raise InputError(f"kernel shape {K.shape} does not match {y.shape[0]} labels")
    if y.shape[0] < 1:
        raise InputError("dual needs at least one labeled sample")
    if not np.all(np.abs(y) == 1):
        raise InputError("labels must be -1 or +1")
    if sigma2 <= 0:
        raise InputError(f"sigma2 must be positive, got {sigma2}")
    return K * np.outer(y, y), y


def _linear(linear, n):
    if linear is None:
        return np.ones(n)
    c = np.asarray(linear, dtype=float).ravel()
    if c.shape != (n,):
        raise InputError(f"linear term must have length {n}, got {c.shape[0]}")
    return c


def dual_objective(alpha, Q, sigma2, linear=None):
    alpha = np.asarray(alpha, dtype=float)
    c = _linear(linear, alpha.shape[0])
    return float(c @ alpha - 0.5 * sigma2 * alpha @ Q @ alpha)


def kkt_violation(alpha, Q, sigma2, linear=None):
    """Largest violation of the box KKT conditions (0 when optimal)."""
    g = _linear(linear, alpha.shape[0]) - sigma2 * (Q @ alpha)
    viol = np.where(alpha <= 0.0, np.maximum(g, 0.0),
                    np.where(alpha >= 1.0, np.maximum(-g, 0.0), np.abs(g)))
    return float(viol.max(initial=0.0))


def _free_set_step(alpha, Q, Qa, sigma2, c):
    """Exact line search toward the stationary point of the free coordinates.

    Coordinate ascent crawls on ill-conditioned kernels when many duals sit
    strictly inside the box; one Newton direction on that subspace, cut back
    to stay feasible, fixes it.  Never decreases the objective.
    """
    free = np.flatnonzero((alpha > 0.0) & (alpha < 1.0))
    if free.size < 2:
        return False
    g = c - sigma2 * Qa
    H = sigma2 * Q[np.ix_(free, free)]
    d_free = np.linalg.lstsq(H, g[free], rcond=1e-12)[0]
    slope = float(g[free] @ d_free)
    curv = float(d_free @ H @ d_free)
    if not slope > 0.0:
        return False
    t = slope / curv if curv > 0.0 else np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(d_free > 0, (1.0 - alpha[free]) / d_free,
                        np.where(d_free < 0, -alpha[free] / d_free, np.inf))
    t = min(t, float(room.min()))
    if not np.isfinite(t) or t <= 0.0:
        return False
    alpha[free] = np.clip(alpha[free] + t * d_free, 0.0, 1.0)
    return True


def solve_dual(K_tilde, y, sigma2, tol=1e-8, max_sweeps=None, alpha0=None, linear=None):
    """Cyclic coordinate ascent on the box-constrained dual.

    Parameters
    ----------
    K_tilde : (n, n) array
        Positive semidefinite (modified) kernel over the labeled points.
    y : (n,) array
        Labels in {-1, +1}.
    sigma2 : float
        Prior variance.
    tol : float
        Stop once a full sweep moves no coordinate by ``tol`` or more and the
        KKT residual is within ``tol * (1 + |g|_max)`` of the starting
        gradient scale.
    max_sweeps : int, optional
        Defaults to ``10 * n + 1000``.  When exhausted, the last iterate is
        returned with ``converged=False``.
    alpha0 : (n,) array, optional
        Starting point, clipped into the box.  Defaults to zeros.
    linear : (n,) array, optional
        Linear coefficients ``c``; all ones by default.
    """
    Q, y = _problem(K_tilde, y, sigma2)
    n = y.shape[0]
    if max_sweeps is None:
        max_sweeps = 10 * n + 1000
    alpha = np.zeros(n) if alpha0 is None else np.clip(np.asarray(alpha0, dtype=float), 0.0, 1.0)
    c = _linear(linear, n)
    diag = np.diag(Q).copy()
    Qa = Q @ alpha
    scale = 1.0 + np.abs(c - sigma2 * Qa).max()

    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_step = 0.0
        for m in range(n):
            a_old = alpha[m]
            # linear term with coordinate m removed: c_m - sigma2 * sum_{j != m} Q_mj a_j
            lin = c[m] - sigma2 * (Qa[m] - diag[m] * a_old)
            if diag[m] <= DEGENERATE_DIAG:
                a_new = 1.0 if lin > 0 else 0.0
            else:
                a_new = min(max(lin / (sigma2 * diag[m]), 0.0), 1.0)
            step = a_new - a_old
            if step != 0.0:
                alpha[m] = a_new
                Qa += step * Q[:, m]
                max_step = max(max_step, abs(step))
        if max_step >= tol and _free_set_step(alpha, Q, Qa, sigma2, c):
            Qa = Q @ alpha
        if max_step < tol:
            # refresh to shed accumulated rounding in the running product
            Qa = Q @ alpha
            if kkt_violation(alpha, Q, sigma2, c) <= tol * scale:
                converged = True
                break
    return DualSolution(alpha, dual_objective(alpha, Q, sigma2, c), sweeps, converged)


def brute_force_dual(K_tilde, y, sigma2, grid_tol=1e-12, max_iter=200_000, linear=None):
    """Multi-start projected-gradient ascent; a slow independent check on
    :func:`solve_dual` for tiny problems (at most 12 labeled points).
    """
    Q, y = _problem(K_tilde, y, sigma2)
    n = y.shape[0]
    if n > BRUTE_FORCE_MAX:
        raise UsageError(f"brute_force_dual is capped at {BRUTE_FORCE_MAX} samples, got {n}")
    c = _linear(linear, n)
    H = sigma2 * Q
    lip = max(float(np.linalg.eigvalsh(0.5 * (H + H.T)).max()), 1e-12)

    best = None
    for start in (np.zeros(n), np.ones(n), np.full(n, 0.5)):
        a = start.copy()
        it = 0
        for it in range(1, max_iter + 1):
            # step shrinks slowly from 1/L so late iterates settle
            step = 1.0 / (lip * (1.0 + it / max_iter))
            nxt = np.clip(a + step * (c - H @ a), 0.0, 1.0)
            moved = np.abs(nxt - a).max()
            a = nxt
            if moved < grid_tol:
                break
        obj = dual_objective(a, Q, sigma2, c)
        if best is None or obj > best.objective:
            best = DualSolution(a, obj, it, it < max_iter)
    return best
