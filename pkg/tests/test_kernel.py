import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmvmed.errors import InputError, UsageError
from cmvmed.kernel import (KernelSpec, build_bundle, cross_gram, downdated_labeled_unlabeled, gram,
                           gram_blocks, kernel_eval, modified_cross, modified_kernel)

from conftest import rbf_problem

E1 = np.exp(-1.0)


def literal_downdate(K_L, K_U, K_UL, nu, lam, sigma2):
    """Dense textbook form with an explicit inverse of diag(nu)."""
    inner = np.diag(1.0 / nu) / sigma2 + lam * K_U
    return K_L - lam * K_UL.T @ np.linalg.inv(inner) @ K_UL


# -- kernel_eval / gram ----------------------------------------------------------

def test_kernel_eval_closed_forms():
    x = np.array([0.3, -1.2])
    assert kernel_eval(x, x, KernelSpec(1.0)) == 1.0
    assert kernel_eval([0.0, 0.0], [1.0, 1.0], KernelSpec(0.5)) == pytest.approx(E1, abs=1e-15)
    assert kernel_eval([0.0], [1.0], KernelSpec(1.0)) == pytest.approx(0.3678794, abs=1e-7)


def test_kernel_eval_dimension_mismatch():
    with pytest.raises(InputError):
        kernel_eval([1.0, 2.0], [1.0], KernelSpec())


@pytest.mark.parametrize("gamma", [0.0, -1.0, np.nan, np.inf])
def test_kernel_spec_rejects_bad_gamma(gamma):
    with pytest.raises(InputError):
        KernelSpec(gamma)


def test_gram_small_cases():
    assert np.array_equal(gram(np.array([[1.0, 2.0]]), KernelSpec()), [[1.0]])
    assert np.array_equal(gram(np.array([[1.0, 2.0], [1.0, 2.0]]), KernelSpec()), np.ones((2, 2)))


def test_gram_matches_double_loop(rng):
    X = rng.normal(size=(5, 3))
    spec = KernelSpec(0.7)
    loop = np.array([[kernel_eval(a, b, spec) for b in X] for a in X])
    assert np.allclose(gram(X, spec), loop, rtol=0, atol=1e-14)


def test_cross_gram_transpose_and_mismatch(rng):
    A, B = rng.normal(size=(4, 2)), rng.normal(size=(6, 2))
    spec = KernelSpec(1.3)
    assert np.array_equal(cross_gram(A, B, spec), cross_gram(B, A, spec).T)
    with pytest.raises(InputError):
        cross_gram(A, rng.normal(size=(3, 5)), spec)


@given(st.integers(1, 12), st.integers(1, 4), st.floats(0.01, 10.0), st.integers(0, 2**32 - 1))
def test_gram_invariants(n, d, gamma, seed):
    X = np.random.default_rng(seed).normal(size=(n, d))
    K = gram(X, KernelSpec(gamma))
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    assert np.all((K > 0) | (K == 0)) and np.all(K <= 1.0)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


# -- modified kernel -------------------------------------------------------------

def test_modified_kernel_scalar_example():
    # the 1e-10 factorization jitter moves the result by O(1e-11)
    b = modified_kernel([[1.0]], [[1.0]], [[1.0]], [0.25], 1.0, 1.0)
    assert b.K_tilde[0, 0] == pytest.approx(0.8, abs=1e-9)
    lit = literal_downdate(np.eye(1), np.eye(1), np.eye(1), np.array([0.25]), 1.0, 1.0)
    assert lit[0, 0] == pytest.approx(0.8, abs=1e-15)
    assert b.K_tilde[0, 0] == pytest.approx(lit[0, 0], abs=1e-9)


def test_lambda_zero_and_zero_nu_return_K_L_exactly(rng):
    _, _, _, K_L, K_U, K_UL = rbf_problem(rng, 5, 7)
    for nu, lam in ((rng.uniform(0, 0.25, 7), 0.0), (np.zeros(7), 0.8)):
        b = modified_kernel(K_L, K_U, K_UL, nu, lam, 2.0)
        assert np.array_equal(b.K_tilde, K_L)
        assert not b.coupled


def test_empty_unlabeled_set(rng):
    X_L = rng.normal(size=(4, 2))
    b = build_bundle(X_L, np.zeros((0, 2)), KernelSpec(), lam=0.9)
    assert np.array_equal(b.K_tilde, b.K_L)


def test_modified_kernel_input_errors(rng):
    _, _, _, K_L, K_U, K_UL = rbf_problem(rng, 3, 4)
    with pytest.raises(InputError):
        modified_kernel(K_L, K_U, K_UL, -np.ones(4), 0.5, 1.0)
    with pytest.raises(InputError):
        modified_kernel(K_L, K_U, K_UL, np.ones(3), 0.5, 1.0)
    with pytest.raises(InputError):
        modified_kernel(K_L, K_U, K_UL, np.ones(4), -0.5, 1.0)
    with pytest.raises(InputError):
        modified_kernel(K_L, K_U, K_UL, np.ones(4), 0.5, 0.0)


def test_bundle_is_read_only(rng):
    _, _, _, K_L, K_U, K_UL = rbf_problem(rng, 3, 4)
    b = modified_kernel(K_L, K_U, K_UL, np.full(4, 0.2), 0.5, 1.0)
    with pytest.raises(ValueError):
        b.K_tilde[0, 0] = 3.0


@given(st.integers(1, 8), st.integers(1, 15), st.floats(0.0, 1.0), st.sampled_from([0.5, 1.0, 4.0]),
       st.floats(0.05, 3.0), st.integers(0, 2**32 - 1))
def test_modified_kernel_invariants(n_l, n_u, lam, sigma2, gamma, seed):
    r = np.random.default_rng(seed)
    _, _, _, K_L, K_U, K_UL = rbf_problem(r, n_l, n_u, gamma=gamma)
    nu = r.uniform(0, 0.25, n_u)
    nu[r.random(n_u) < 0.2] = 0.0
    b = modified_kernel(K_L, K_U, K_UL, nu, lam, sigma2)
    Kt = b.K_tilde
    assert np.abs(Kt - Kt.T).max() <= 1e-10
    assert np.linalg.eigvalsh(Kt).min() >= -1e-8
    # the correction is PSD, so the diagonal can only shrink
    assert np.all(np.diag(Kt) <= np.diag(K_L) + 1e-12)


@given(st.integers(1, 8), st.integers(1, 12), st.floats(0.01, 1.0), st.sampled_from([0.5, 1.0, 4.0]),
       st.integers(0, 2**32 - 1))
def test_modified_kernel_matches_literal_inverse(n_l, n_u, lam, sigma2, seed):
    r = np.random.default_rng(seed)
    _, _, _, K_L, K_U, K_UL = rbf_problem(r, n_l, n_u)
    nu = r.uniform(1e-6, 0.25, n_u)
    Kt = modified_kernel(K_L, K_U, K_UL, nu, lam, sigma2).K_tilde
    lit = literal_downdate(K_L, K_U, K_UL, nu, lam, sigma2)
    lit = 0.5 * (lit + lit.T)
    assert np.linalg.norm(Kt - lit) <= 1e-8 * np.linalg.norm(lit)


# -- extension to new points -----------------------------------------------------

def test_modified_cross_lambda_zero_is_K_L_row(rng):
    X_L, X_U, spec, K_L, *_ = rbf_problem(rng, 5, 6)
    b = build_bundle(X_L, X_U, spec)
    assert np.allclose(modified_cross(X_L[2], b, X_L, X_U, spec), K_L[2], atol=1e-15)


def test_modified_cross_scalar_example():
    X_L = np.array([[0.0]])
    X_U = np.array([[0.0]])
    b = build_bundle(X_L, X_U, KernelSpec(), nu=[0.25], lam=1.0, sigma2=1.0)
    assert modified_cross(X_L[0], b, X_L, X_U, KernelSpec()) == pytest.approx([0.8], abs=1e-9)
    assert modified_cross(X_L[0], b, X_L, X_U, KernelSpec())[0] == b.K_tilde[0, 0]


@given(st.integers(1, 6), st.integers(1, 10), st.floats(0.01, 1.0), st.integers(0, 2**32 - 1))
def test_modified_cross_matches_recompute(n_l, n_u, lam, seed):
    # appending x to L and rebuilding from scratch must give the same row
    r = np.random.default_rng(seed)
    X_L, X_U, spec, *_ = rbf_problem(r, n_l, n_u)
    nu = r.uniform(0, 0.25, n_u)
    x = r.normal(size=3)
    b = build_bundle(X_L, X_U, spec, nu, lam, 1.5)
    big = build_bundle(np.vstack([X_L, x]), X_U, spec, nu, lam, 1.5)
    assert np.allclose(modified_cross(x, b, X_L, X_U, spec), big.K_tilde[-1, :n_l], atol=1e-10)
    # K~ between L and U agrees with extending through the new-point path
    appended = build_bundle(np.vstack([X_L, X_U[:1]]), X_U, spec, nu, lam, 1.5)
    assert np.allclose(downdated_labeled_unlabeled(b)[:, 0], appended.K_tilde[:n_l, -1], atol=1e-10)


def test_unlabeled_weights_match_dense_product(rng):
    X_L, X_U, spec, *_ = rbf_problem(rng, 4, 9)
    b = build_bundle(X_L, X_U, spec, rng.uniform(0, 0.25, 9), 0.7, 2.0)
    u = rng.normal(size=9)
    assert np.allclose(b.K_U @ b.unlabeled_weights(u), b.K_tilde_U @ u, atol=1e-12)
    assert np.allclose(b.K_UL.T @ b.unlabeled_weights(u), downdated_labeled_unlabeled(b) @ u,
                       atol=1e-12)


def test_modified_cross_stale_bundle(rng):
    X_L, X_U, spec, *_ = rbf_problem(rng, 4, 5)
    b = build_bundle(X_L, X_U, spec, np.full(5, 0.2), 0.5, 1.0)
    with pytest.raises(UsageError):
        modified_cross(X_L[0], b, X_L[:3], X_U, spec)
    with pytest.raises(UsageError):
        modified_cross(X_L[0], b, X_L, X_U[:4], spec)


def test_gram_blocks_reuse_is_identical(rng):
    X_L, X_U, spec, *_ = rbf_problem(rng, 4, 5)
    nu = np.full(5, 0.1)
    a = build_bundle(X_L, X_U, spec, nu, 0.5, 1.0)
    b = build_bundle(X_L, X_U, spec, nu, 0.5, 1.0, blocks=gram_blocks(X_L, X_U, spec))
    assert np.array_equal(a.K_tilde, b.K_tilde)
