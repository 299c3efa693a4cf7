"""Dense linear-algebra kernels shared by the estimators.

Dense matrices are plain ``float64`` numpy arrays. The SVD and symmetric
eigensolver delegate to LAPACK and only add input validation and a
deterministic sign convention: the first non-negligible entry of every
singular/eigen vector is positive, so vectors can be compared directly.
"""

from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, RankDeficient
from .ingest import DataMatrix


class SvdResult(NamedTuple):
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray


def as_dense(A, name="matrix"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return A


def _sign_flips(vectors):
    # index of the first entry that is not negligible relative to the column
    mags = np.abs(vectors)
    if vectors.shape[0] == 0 or vectors.shape[1] == 0:
        return np.ones(vectors.shape[1])
    tol = 1e-10 * mags.max(axis=0, keepdims=True)
    first = np.argmax(mags > tol, axis=0)
    signs = np.sign(vectors[first, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def svd(A, mode="thin"):
    """Singular value decomposition ``A = U diag(S) V^T``.

    Parameters
    ----------
    A : array_like, shape (n, t)
    mode : {"thin", "full"}
        ``"thin"`` returns ``min(n, t)`` triples; ``"full"`` returns square
        ``U`` and ``V`` with the singular values padded by nothing (length
        stays ``min(n, t)``).

    Returns
    -------
    SvdResult
        ``right_vectors`` holds V (not its transpose), shape (t, m).
    """
    A = as_dense(A)
    if mode not in ("thin", "full"):
        raise InvalidInput(f"unknown SVD mode {mode!r}")
    U, S, Vt = np.linalg.svd(A, full_matrices=(mode == "full"))
    V = Vt.T
    m = S.shape[0]
    signs = _sign_flips(U[:, :m])
    U = U.copy()
    V = V.copy()
    U[:, :m] *= signs
    V[:, :m] *= signs
    return SvdResult(U, S, V)


def sym_eig(A):
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order."""
    A = as_dense(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"sym_eig needs a square matrix, got {A.shape}")
    scale = np.abs(A).max()
    if np.abs(A - A.T).max() > 1e-8 * scale:
        raise InvalidInput("matrix is not symmetric")
    lam, vec = np.linalg.eigh(0.5 * (A + A.T))
    lam = lam[::-1].copy()
    vec = vec[:, ::-1].copy()
    vec *= _sign_flips(vec)
    return lam, vec


def gram_schmidt(U, tol=1e-12):
    """Orthonormalize the columns of ``U`` (classical Gram-Schmidt, two passes).

    Raises
    ------
    RankDeficient
        When a column's residual after projection falls below ``tol`` times
        its original norm. ``err.column`` is the zero-based offending index.
    """
    U = as_dense(U)
    n, k = U.shape
    if k > n:
        raise RankDeficient(n, f"cannot orthonormalize {k} columns in dimension {n}")
    Q = np.empty((n, k))
    for j in range(k):
        v = U[:, j].copy()
        norm0 = np.linalg.norm(v)
        if j:
            basis = Q[:, :j]
            v -= basis @ (basis.T @ v)
            v -= basis @ (basis.T @ v)
        norm = np.linalg.norm(v)
        if norm0 == 0.0 or norm <= tol * norm0:
            raise RankDeficient(j)
        Q[:, j] = v / norm
    return Q


def orthonormal_deviation(Q):
    """Max absolute entry of ``Q^T Q - I``."""
    if Q.shape[1] == 0:
        return 0.0
    return float(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max())


def covariance(X):
    """Covariance ``(1/T) X X^T`` of a row-normalized data matrix.

    Uses the 1/T convention (not 1/(T-1)). For projected data the original
    sample count stored on the :class:`DataMatrix` is used for ``T``.
    """
    if isinstance(X, DataMatrix):
        values, T = X.values, X.n_samples
    else:
        values = as_dense(X, "data")
        T = values.shape[1]
    if T < 2:
        raise InvalidInput("covariance needs at least two samples")
    C = values @ values.T / T
    return 0.5 * (C + C.T)
