"""Gaussian kernels, Gram matrices and the unlabeled-downdated kernel.

The modified kernel absorbs the curvature of the unlabeled log-likelihood
into the labeled Gram matrix::

    K~ = K_L - lam * K_UL^T S [ I/sigma2 + lam * S K_U S ]^{-1} S K_UL

with ``S = diag(sqrt(nu))``.  Where every ``nu_n > 0`` this is identical to
the textbook ``K_L - lam K_UL^T [M^{-1}/sigma2 + lam K_U]^{-1} K_UL`` with
``M = diag(nu)``, but it stays defined when a view is saturated on some
unlabeled point (``nu_n == 0``).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import InputError, NumericalError, UsageError

JITTER = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``exp(-gamma * ||x - y||^2)``."""

    gamma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise InputError(f"kernel bandwidth gamma must be positive, got {self.gamma!r}")


def _as_matrix(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise InputError(f"{name} must be a 2-D array, got shape {X.shape}")
    return X


def kernel_eval(x, y, spec):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    d = x - y
    return float(np.exp(-spec.gamma * np.dot(d, d)))


def _sqdist(A, B):
    # Clamped at zero: the expanded form can go slightly negative.
    aa = np.einsum("ij,ij->i", A, A)
    bb = np.einsum("ij,ij->i", B, B)
    d = aa[:, None] + bb[None, :] - 2.0 * (A @ B.T)
    return np.maximum(d, 0.0)


def cross_gram(A, B, spec):
    """Kernel matrix between the rows of ``A`` (a x d) and ``B`` (b x d)."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-spec.gamma * _sqdist(A, B))


def gram(X, spec):
    """Symmetric Gram matrix of the rows of ``X`` with an exact unit diagonal."""
    X = _as_matrix(X, "X")
    if X.shape[0] < 1:
        raise InputError("gram needs at least one row")
    K = cross_gram(X, X, spec)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def _frozen(a):
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GramBundle:
    """Per-view kernel blocks for one (view, iteration) pair.

    ``proj`` is ``S A^{-1} S K_UL`` (|U| x |L|): ``K~ = K_L - lam * K_UL^T proj``
    and a new point's row is ``k_L(x) - lam * k_U(x)^T proj``.  Products of
    the downdated kernel against the unlabeled points go through
    :meth:`unlabeled_weights`.
    """

    K_L: np.ndarray
    K_U: np.ndarray
    K_UL: np.ndarray
    K_tilde: np.ndarray
    lam: float
    sigma2: float
    nu: np.ndarray
    factor: tuple | None = None
    proj: np.ndarray | None = None

    @property
    def coupled(self):
        return self.proj is not None

    @property
    def n_labeled(self):
        return self.K_L.shape[0]

    @property
    def n_unlabeled(self):
        return self.K_U.shape[0]

    def _inner_solve(self, V):
        s = np.sqrt(self.nu)
        V = np.asarray(V, dtype=float)
        S = s if V.ndim == 1 else s[:, None]
        return S * linalg.cho_solve(self.factor, S * V)

    def unlabeled_weights(self, u):
        """Weights ``w`` with ``K~(x, U) @ u == k_U(x) @ w`` for any ``x``.

        ``w = u - lam * S A^{-1} S K_U u``, a single vector solve.
        """
        u = np.asarray(u, dtype=float)
        if self.proj is None:
            return u.copy()
        return u - self.lam * self._inner_solve(self.K_U @ u)

    @cached_property
    def K_tilde_UL(self):
        """``K~`` between unlabeled (rows) and labeled (columns) training points."""
        if self.proj is None:
            return self.K_UL
        return self.K_UL - self.lam * (self.K_U @ self.proj)

    @cached_property
    def K_tilde_U(self):
        """``K~`` among the unlabeled training points (dense; for inspection)."""
        if self.proj is None:
            return self.K_U
        out = self.K_U - self.lam * (self.K_U @ self._inner_solve(self.K_U))
        return 0.5 * (out + out.T)


def modified_kernel(K_L, K_U, K_UL, nu, lam, sigma2):
    """Build the :class:`GramBundle` holding ``K~`` for the given coupling.

    ``lam == 0``, an empty unlabeled set, or ``nu == 0`` everywhere all
    return ``K~ = K_L`` exactly and skip the factorization.
    """
    K_L = np.array(K_L, dtype=float, copy=True)
    if K_L.ndim != 2 or K_L.shape[0] != K_L.shape[1]:
        raise InputError(f"K_L must be square, got shape {K_L.shape}")
    n_l = K_L.shape[0]
    K_U = np.array(K_U, dtype=float, copy=True)
    if K_U.size == 0:
        K_U = K_U.reshape(0, 0)
    n_u = K_U.shape[0]
    if K_U.shape != (n_u, n_u):
        raise InputError(f"K_U must be square, got shape {K_U.shape}")
    K_UL = np.array(K_UL, dtype=float, copy=True).reshape(n_u, n_l)
    nu = np.array(nu, dtype=float, copy=True).ravel()
    if nu.shape != (n_u,):
        raise InputError(f"nu must have length {n_u}, got {nu.shape[0]}")
    if np.any(nu < 0) or not np.all(np.isfinite(nu)):
        raise InputError("curvature weights nu must be finite and nonnegative")
    if lam < 0:
        raise InputError(f"coupling lam must be nonnegative, got {lam}")
    if sigma2 <= 0:
        raise InputError(f"prior variance sigma2 must be positive, got {sigma2}")

    if lam == 0 or n_u == 0 or not np.any(nu > 0):
        return GramBundle(
            _frozen(K_L), _frozen(K_U), _frozen(K_UL), _frozen(K_L.copy()),
            float(lam), float(sigma2), _frozen(nu),
        )

    s = np.sqrt(nu)
    inner = lam * (s[:, None] * K_U * s[None, :])
    inner[np.diag_indices(n_u)] += 1.0 / sigma2 + JITTER
    try:
        factor = linalg.cho_factor(inner, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        min_pivot = float(np.linalg.eigvalsh(0.5 * (inner + inner.T)).min())
        raise NumericalError(
            f"inner system not positive definite (minimum pivot {min_pivot:.3e})"
        ) from exc
    proj = s[:, None] * linalg.cho_solve(factor, s[:, None] * K_UL)
    K_tilde = K_L - lam * (K_UL.T @ proj)
    K_tilde = 0.5 * (K_tilde + K_tilde.T)
    return GramBundle(
        _frozen(K_L), _frozen(K_U), _frozen(K_UL), _frozen(K_tilde),
        float(lam), float(sigma2), _frozen(nu), factor, _frozen(proj),
    )


def gram_blocks(X_L, X_U, spec):
    """Plain Gram blocks ``(K_L, K_U, K_UL)``; reusable across couplings."""
    X_L = _as_matrix(X_L, "X_L")
    X_U = np.asarray(X_U, dtype=float).reshape(-1, X_L.shape[1])
    K_L = gram(X_L, spec)
    if X_U.shape[0]:
        return K_L, gram(X_U, spec), cross_gram(X_U, X_L, spec)
    return K_L, np.zeros((0, 0)), np.zeros((0, X_L.shape[0]))


def build_bundle(X_L, X_U, spec, nu=None, lam=0.0, sigma2=1.0, blocks=None):
    """Assemble all Gram blocks for one view and downdate them.

    ``blocks`` may carry precomputed :func:`gram_blocks` output for the
    same points and kernel.
    """
    K_L, K_U, K_UL = gram_blocks(X_L, X_U, spec) if blocks is None else blocks
    if nu is None:
        nu = np.zeros(K_U.shape[0])
    return modified_kernel(K_L, K_U, K_UL, nu, lam, sigma2)


def _needs_factor(bundle):
    return bundle.lam != 0 and bundle.n_unlabeled and np.any(bundle.nu > 0)


def modified_cross_blocks(x, bundle, X_L, X_U, spec, unlabeled=True):
    """Kernel rows of new points against the training sets.

    Returns ``(rows_L, k_U)``: ``rows_L`` is the downdated kernel against
    the labeled points; ``k_U`` is the plain kernel against the unlabeled
    points (``None`` when ``unlabeled=False``), to be paired with
    :meth:`GramBundle.unlabeled_weights`.  Always 2-D.
    """
    X = _as_matrix(x, "x")
    X_L = _as_matrix(X_L, "X_L")
    if X_L.shape[0] != bundle.n_labeled:
        raise UsageError("labeled data does not match the cached kernel bundle")
    X_U = np.asarray(X_U, dtype=float).reshape(-1, X_L.shape[1])
    if X_U.shape[0] != bundle.n_unlabeled:
        raise UsageError("unlabeled data does not match the cached kernel bundle")
    rows_L = cross_gram(X, X_L, spec)
    coupled = _needs_factor(bundle)
    if not (coupled or unlabeled):
        return rows_L, None
    if coupled and bundle.proj is None:
        raise UsageError("kernel bundle carries no factorization for a coupled kernel")
    k_U = cross_gram(X, X_U, spec) if X_U.shape[0] else np.zeros((X.shape[0], 0))
    if coupled:
        rows_L = rows_L - bundle.lam * (k_U @ bundle.proj)
    return rows_L, (k_U if unlabeled else None)


def modified_cross(x, bundle, X_L, X_U, spec):
    """Rows of ``K~`` extended to new points.

    ``x`` may be a single feature vector (returns length |L|) or a matrix of
    points (returns one row per point).
    """
    rows, _ = modified_cross_blocks(x, bundle, X_L, X_U, spec, unlabeled=False)
    return rows[0] if np.ndim(x) == 1 else rows


def downdated_labeled_unlabeled(bundle):
    """``K~`` between labeled (rows) and unlabeled (columns) training points."""
    return bundle.K_tilde_UL.T
