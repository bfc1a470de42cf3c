import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmvmed.errors import InputError
from cmvmed.kernel import KernelSpec, kernel_eval
from cmvmed.med import (MedPosterior, decision_score, dumps_posterior, fit_view, load_posterior,
                        loads_posterior, predict, predictive_prob, resolve_score_scale,
                        save_posterior, sign_with_tie, train_single_view)
from cmvmed.qp import DualSolution, brute_force_dual


def two_class(rng, n=12, d=2, shift=1.5):
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.normal(size=(n, d)) + shift * y[:, None]
    return X, y


def test_two_far_points():
    X = np.array([[0.0, 0.0], [3.0, 0.0]])
    y = np.array([1.0, -1.0])
    m = train_single_view(X, y, KernelSpec(20.0), 1.0)
    assert np.allclose(m.alpha, [1.0, 1.0])
    assert brute_force_dual(m.bundle.K_tilde, y, 1.0).alpha == pytest.approx([1.0, 1.0], abs=1e-8)
    assert np.array_equal(predict(m, X), [1, -1])


def test_conflicting_duplicate_scores_zero_and_predicts_plus():
    X = np.array([[0.5, 0.5], [0.5, 0.5]])
    m = train_single_view(X, [1, -1], KernelSpec(), 1.0)
    assert decision_score(m, X[0]) == 0.0
    assert predict(m, X[0]) == 1


def test_single_class_rejected():
    with pytest.raises(InputError):
        train_single_view(np.eye(3), [1, 1, 1], KernelSpec(), 1.0)


def test_zero_alpha_scores_zero(rng):
    X, y = two_class(rng)
    m = train_single_view(X, y, KernelSpec(), 1.0)
    zero = MedPosterior(0, DualSolution(np.zeros(len(y)), 0.0, 0, True), m.labels, 1.0,
                        m.kernel_spec, m.bundle, 1.0, m.X_L, m.X_U)
    assert np.all(decision_score(zero, rng.normal(size=(7, 2))) == 0.0)


def test_score_matches_explicit_sum(rng):
    X, y = two_class(rng)
    spec = KernelSpec(0.8)
    m = train_single_view(X, y, spec, 2.0)
    x = rng.normal(size=2)
    naive = sum(2.0 * y[j] * m.alpha[j] * kernel_eval(x, X[j], spec) for j in range(len(y)))
    assert decision_score(m, x) == pytest.approx(naive, abs=1e-12)


def test_predictive_probability_values():
    X = np.array([[0.0], [1.0]])
    m = train_single_view(X, [1, -1], KernelSpec(), 1.0)
    mid = np.array([0.5])
    f = decision_score(m, mid)
    assert f == pytest.approx(0.0, abs=1e-15)
    assert predictive_prob(m, mid, 1) == pytest.approx(0.5)
    assert predictive_prob(m, mid, -1) == pytest.approx(0.5)
    # sigmoid(ln 3) = 3/4, reached by rescaling a nonzero score
    x = np.array([0.0])
    f0 = decision_score(m, x)
    scaled = m.with_score_scale(m.score_scale * np.log(3.0) / f0)
    assert predictive_prob(scaled, x, 1) == pytest.approx(0.75, abs=1e-12)


def test_predictive_prob_monotone_limit():
    X = np.array([[0.0], [1.0]])
    m = train_single_view(X, [1, -1], KernelSpec(), 1.0)
    probs = [predictive_prob(m.with_score_scale(s), X[0], 1) for s in (1, 10, 100, 1000)]
    assert np.all(np.diff(probs) >= 0) and probs[1] > probs[0] and probs[-1] > 1 - 1e-12


def test_sign_with_tie():
    assert sign_with_tie(0.3) == 1
    assert sign_with_tie(-0.3) == -1
    assert sign_with_tie(0.0) == 1
    assert np.array_equal(sign_with_tie([0.0, -1e-300, 2.0]), [1, -1, 1])


def test_score_modes():
    assert resolve_score_scale(3.0) == 3.0
    assert resolve_score_scale(3.0, "literal") == 1.0
    with pytest.raises(InputError):
        resolve_score_scale(3.0, "other")


def test_unconstrained_margins_are_one_in_self_consistent_mode():
    # far-apart points: interior alphas put every margin exactly at 1
    X = np.array([[0.0], [10.0], [20.0]])
    y = np.array([1.0, -1.0, 1.0])
    m = train_single_view(X, y, KernelSpec(1.0), 4.0)
    assert np.all((m.alpha > 0) & (m.alpha < 1))
    assert np.allclose(y * decision_score(m, X), 1.0, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 4.0]))
def test_probability_normalization(seed, sigma2):
    r = np.random.default_rng(seed)
    X, y = two_class(r, n=8)
    m = train_single_view(X, y, KernelSpec(0.5), sigma2)
    pts = r.normal(scale=3, size=(5, 2))
    assert np.allclose(predictive_prob(m, pts, 1) + predictive_prob(m, pts, -1), 1.0, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_label_flip_negates_scores(seed):
    r = np.random.default_rng(seed)
    X, y = two_class(r, n=8)
    a = train_single_view(X, y, KernelSpec(0.5), 1.0)
    b = train_single_view(X, -y, KernelSpec(0.5), 1.0)
    pts = r.normal(size=(6, 2))
    assert np.array_equal(decision_score(b, pts), -decision_score(a, pts))


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_score_scale_changes_probabilities_not_decisions(seed, c):
    r = np.random.default_rng(seed)
    X, y = two_class(r, n=8)
    a = train_single_view(X, y, KernelSpec(0.5), 1.0)
    b = a.with_score_scale(a.score_scale * c)
    pts = r.normal(size=(6, 2))
    assert np.array_equal(predict(a, pts), predict(b, pts))
    if c != 1.0 and np.any(decision_score(a, pts) != 0):
        assert not np.allclose(predictive_prob(a, pts), predictive_prob(b, pts), rtol=0, atol=0)


@given(st.integers(0, 2**32 - 1))
def test_sample_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    X, y = two_class(r, n=8)
    p = r.permutation(8)
    a = train_single_view(X, y, KernelSpec(0.5), 1.0, tol=1e-12)
    b = train_single_view(X[p], y[p], KernelSpec(0.5), 1.0, tol=1e-12)
    pts = r.normal(size=(5, 2))
    assert np.array_equal(predict(a, pts), predict(b, pts)) or np.allclose(
        decision_score(a, pts), decision_score(b, pts), atol=1e-8)
    assert np.allclose(decision_score(a, pts), decision_score(b, pts), atol=1e-8)


def test_coupled_model_round_trip(rng, tmp_path):
    X, y = two_class(rng, n=6)
    X_U = rng.normal(size=(9, 2))
    nu = rng.uniform(0, 0.25, 9)
    m = fit_view(X, y, KernelSpec(0.7), 2.0, X_U, nu, 0.6, target=rng.normal(size=9), view_id=1)
    assert m.has_unlabeled_term
    path = tmp_path / "v.txt"
    save_posterior(m, path)
    back = load_posterior(path)
    pts = rng.normal(size=(4, 2))
    assert np.array_equal(back.alpha, m.alpha)
    assert np.array_equal(back.u_weights, m.u_weights)
    assert np.array_equal(decision_score(back, pts), decision_score(m, pts))
    assert dumps_posterior(back) == dumps_posterior(m)


def test_unlabeled_scores_match_new_point_path(rng):
    X, y = two_class(rng, n=6)
    X_U = rng.normal(size=(9, 2))
    m = fit_view(X, y, KernelSpec(0.7), 2.0, X_U, rng.uniform(0, 0.25, 9), 0.6,
                 target=rng.normal(size=9))
    assert np.allclose(m.unlabeled_scores(), decision_score(m, X_U), atol=1e-12)
    assert np.allclose(m.training_scores(), decision_score(m, X), atol=1e-12)


def test_bad_model_text():
    with pytest.raises(InputError):
        loads_posterior("format: something-else\n[labeled]\n")


def test_target_length_checked(rng):
    X, y = two_class(rng, n=6)
    with pytest.raises(InputError):
        fit_view(X, y, KernelSpec(), 1.0, rng.normal(size=(4, 2)), np.full(4, 0.1), 0.5,
                 target=np.zeros(3))
