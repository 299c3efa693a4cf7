import numpy as np
import pytest

from riccati_precision.ingest import normalize


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def normalized_data(rng, n, t, rank=None):
    """Row-normalized data, optionally with a low-rank shared component."""
    X = rng.standard_normal((n, t))
    if rank:
        X += 2.0 * rng.standard_normal((n, rank)) @ rng.standard_normal((rank, t))
    return normalize(X)


def jacobi_eigenvalues(A, sweeps=100):
    """Cyclic Jacobi rotations; an eigen-oracle independent of LAPACK."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off < 1e-15 * max(1.0, np.abs(A).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))[::-1]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
