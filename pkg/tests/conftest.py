import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def random_semisym(rng, P, N):
    A = rng.standard_normal((P, P, N))
    return 0.5 * (A + A.transpose(1, 0, 2))


def planted_cp(rng, P, N, d, u_orthogonal=False):
    """Noiseless semi-symmetric CP tensor with orthonormal V."""
    K = len(d)
    V, _ = np.linalg.qr(rng.standard_normal((P, K)))
    if u_orthogonal:
        U, _ = np.linalg.qr(rng.standard_normal((N, K)))
    else:
        U = rng.standard_normal((N, K))
        U /= np.linalg.norm(U, axis=0)
    X = np.einsum("k,ik,jk,nk->ijn", np.asarray(d, float), V, V, U)
    return X, V, U


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
