import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

# filled by test_acceptance; printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def random_graph(rng, n, p=None):
    p = rng.uniform(0.1, 0.9) if p is None else p
    upper = np.triu(rng.random((n, n)) < p, 1).astype(np.uint8)
    return upper | upper.T


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    X = rng.standard_normal((n, rank))
    return X @ X.T


def random_orthonormal(rng, n, d):
    Q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return Q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
