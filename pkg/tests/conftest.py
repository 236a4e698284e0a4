import numpy as np
import pytest

from contraction_lap.operator_core import TruncatedOperator, Window


def random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def random_contraction(rng, n, norm=1.0):
    m = random_matrix(rng, n)
    return norm * m / np.linalg.norm(m, 2)


def random_unitary(rng, n):
    q, r = np.linalg.qr(random_matrix(rng, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, n):
    m = random_matrix(rng, n)
    return 0.5 * (m + m.conj().T)


def as_op(m):
    m = np.asarray(m, dtype=complex)
    return TruncatedOperator(m, Window("unilateral", m.shape[0] - 1, boundary_mode="hard"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
