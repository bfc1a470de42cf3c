import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# acceptance results collected by tests/test_acceptance.py, echoed in the summary
ACCEPTANCE = {}


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    A = rng.normal(size=(n, rank))
    return A @ A.T


def rbf_problem(rng, n_l, n_u, d=3, gamma=0.5):
    from cmvmed.kernel import KernelSpec, cross_gram, gram
    X_L = rng.normal(size=(n_l, d))
    X_U = rng.normal(size=(n_u, d))
    spec = KernelSpec(gamma)
    return X_L, X_U, spec, gram(X_L, spec), gram(X_U, spec), cross_gram(X_U, X_L, spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {line}")
