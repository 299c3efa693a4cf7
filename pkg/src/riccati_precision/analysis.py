"""Network biomarkers computed from factored precision matrices.

Node indices are zero-based in the Python API; network files on disk use
one-based indices (see :mod:`riccati_precision.fileio`).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalError, UnsupportedPenalty
from .matcore import as_dense, svd, sym_eig


@dataclass(frozen=True)
class NetworkSelection:
    """Strictly increasing zero-based node indices."""

    node_indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.node_indices)
        if idx.ndim != 1 or idx.size == 0:
            raise InvalidInput("a network needs at least one node")
        if not np.issubdtype(idx.dtype, np.integer):
            raise InvalidInput("node indices must be integers")
        if idx[0] < 0 or np.any(np.diff(idx) <= 0):
            raise InvalidInput("node indices must be non-negative and strictly increasing")
        object.__setattr__(self, "node_indices", idx.astype(np.int64))

    @classmethod
    def of(cls, nodes):
        return cls(np.unique(np.asarray(nodes, dtype=np.int64)))

    @property
    def n(self):
        return int(self.node_indices.size)

    def check(self, n_nodes):
        if self.node_indices[-1] >= n_nodes:
            raise InvalidInput(
                f"network references node {self.node_indices[-1] + 1} but the precision has {n_nodes} nodes"
            )
        return self.node_indices


def restricted_dense(Q, net):
    """Dense ``[Q]_net`` built from the factors; costs O(n^2 m), not O(N^2)."""
    idx = net.check(Q.n_nodes)
    Wn = Q.basis[idx]
    block = (Wn * Q.omega) @ Wn.T + Q.baseline_dense(idx)
    return 0.5 * (block + block.T)


def tsee_direct(Q_sub):
    """Half the log-determinant of a symmetric positive-definite block."""
    Q_sub = as_dense(Q_sub, "precision block")
    lam, _ = sym_eig(Q_sub)
    if lam[-1] <= 0:
        raise NumericalError("restricted precision is not positive definite")
    return 0.5 * float(np.sum(np.log(lam)))


def _constant_baseline(Q, idx):
    if Q.baseline_kind == "scalar":
        return Q.baseline
    if Q.baseline_kind == "diagonal":
        b = Q.baseline[idx]
        if np.ptp(b) > 1e-12 * np.abs(b).max():
            raise UnsupportedPenalty("penalty is not constant over the network")
        return float(b[0])
    block = Q.baseline[np.ix_(idx, idx)]
    b = float(np.mean(np.diag(block)))
    if np.abs(block - b * np.eye(len(idx))).max() > 1e-12 * abs(b):
        raise UnsupportedPenalty("penalty is not a multiple of the identity over the network")
    return b


def tsee_fast(Q, net):
    """Entropy ``0.5 log det [Q]_net`` from one SVD of the n x m factor block.

    Requires the baseline to be ``b I`` on the network. With
    ``A = [W]_net |omega|^(1/2) = U S Z^T`` the low-rank part of the block is
    ``A diag(sign omega) A^T = U (S Z^T diag(sign) Z S) U^T``, so its nonzero
    eigenvalues ``mu`` are those of a small k x k symmetric matrix
    (``k = min(n, m)``). The block's spectrum is ``b + mu`` plus ``b`` with
    multiplicity ``n - k``. Signs are kept, so mixed-sign ``omega`` is fine.
    """
    idx = net.check(Q.n_nodes)
    n = idx.size
    b = _constant_baseline(Q, idx)
    if b <= 0:
        raise NumericalError("non-positive baseline on the network")
    if Q.rank == 0:
        return 0.5 * n * np.log(b)
    A = Q.basis[idx] * np.sqrt(np.abs(Q.omega))
    _, S, Z = svd(A)
    k = S.size
    core = (S[:, None] * Z.T) @ (np.sign(Q.omega)[:, None] * Z) * S[None, :]
    mu = np.linalg.eigvalsh(0.5 * (core + core.T))
    lam = b + mu
    if np.any(lam <= 0):
        raise NumericalError("restricted precision is not positive definite")
    return 0.5 * ((n - k) * np.log(b) + float(np.sum(np.log(lam))))


def tsee(Q, net, direct=False):
    if direct:
        return tsee_direct(restricted_dense(Q, net))
    return tsee_fast(Q, net)


def partial_correlations(Q_sub):
    """``-q_ij / sqrt(q_ii q_jj)`` off the diagonal, ones on it."""
    Q_sub = as_dense(Q_sub, "precision")
    d = np.diag(Q_sub)
    if np.any(d <= 0):
        raise NumericalError("precision has a non-positive diagonal entry")
    scale = 1.0 / np.sqrt(d)
    out = -Q_sub * scale[:, None] * scale[None, :]
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


def mahalanobis(a, b, Q):
    """``sqrt((a-b)^T Q (a-b))`` evaluated on the factors of ``Q``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (Q.n_nodes,) or b.shape != (Q.n_nodes,):
        raise InvalidInput(f"vectors must have length {Q.n_nodes}")
    delta = a - b
    proj = Q.basis.T @ delta
    base = float(delta @ Q.baseline_apply(delta))
    quad = float(np.sum(Q.omega * proj * proj)) + base
    if quad < 0:
        if quad < -1e-12 * (1.0 + abs(base)):
            raise NumericalError("negative squared distance; precision is not positive definite")
        quad = 0.0
    return float(np.sqrt(quad))


def mahalanobis_columns(A, B, Q):
    """Distances between paired columns of ``A`` and ``B`` (B may have one column)."""
    A = as_dense(A, "maps A")
    B = as_dense(B, "maps B")
    if B.shape[1] == 1 and A.shape[1] > 1:
        B = np.repeat(B, A.shape[1], axis=1)
    if A.shape != B.shape:
        raise InvalidInput(f"map matrices have shapes {A.shape} and {B.shape}")
    return np.array([mahalanobis(A[:, j], B[:, j], Q) for j in range(A.shape[1])])
