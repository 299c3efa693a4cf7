"""Closed-form Riccati-regularized precision matrices.

The estimator maximizes ``log det Q - <C, Q> - (rho/2) ||V Q V^T||_F^2`` over
positive-definite ``Q``. Writing ``P = V Q V^T`` and ``D = V^-T C V^-1`` the
stationarity condition ``Q^-1 - C - rho V^T V Q V^T V = 0`` becomes
``P^-1 - D - rho P = 0``, which acts independently on each eigenvalue ``d``
of ``D``: ``p(d)`` is the positive root of ``rho p^2 + d p - 1 = 0``.

``D`` is never formed. Its eigen-pairs come from the thin SVD of
``V^-T X / sqrt(T)``, whose singular values ``s`` satisfy ``d = s^2``; mixing
up ``s`` and ``s^2`` is the classic bug in this computation. The result is
kept factored as

    Q = W diag(omega) W^T + B,    W = V^-1 U,    B = c V^-1 V^-T,

with ``c = 1/sqrt(rho)`` and ``omega_i = p(s_i^2) - c``. All ``omega_i`` are
non-positive, so ``Q`` lies below its baseline ``B``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInput, NumericalError, RankDeficient, TooLarge
from .ingest import as_data, is_normalized
from .matcore import as_dense, svd

DENSIFY_CAP = 2000
OMEGA_DROP = 1e-14


@dataclass(frozen=True, eq=False)
class PenaltyShape:
    """The weighting matrix ``V`` of the penalty and the strength ``rho``.

    Use the constructors :meth:`identity`, :meth:`diagonal`, :meth:`general`
    and :meth:`roi` rather than the raw initializer.
    """

    kind: str
    rho: float
    alpha: float = 1.0
    v: np.ndarray | None = None
    V: np.ndarray | None = None

    def __post_init__(self):
        rho = float(self.rho)
        if not np.isfinite(rho) or rho <= 0:
            raise InvalidInput(f"rho must be positive, got {self.rho}")
        object.__setattr__(self, "rho", rho)
        if self.kind == "scaled_identity":
            if not np.isfinite(self.alpha) or self.alpha <= 0:
                raise InvalidInput("alpha must be positive")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.kind == "diagonal":
            v = np.asarray(self.v, dtype=np.float64)
            if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise InvalidInput("diagonal penalty weights must be a positive finite vector")
            object.__setattr__(self, "v", v)
        elif self.kind == "general":
            V = as_dense(self.V, "penalty matrix")
            if V.shape[0] != V.shape[1]:
                raise InvalidInput("penalty matrix must be square")
            sv = np.linalg.svd(V, compute_uv=False)
            if sv[-1] <= 1e-10 * sv[0]:
                raise RankDeficient(None, "penalty matrix V is not invertible")
            object.__setattr__(self, "V", V)
        else:
            raise InvalidInput(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def identity(cls, rho, alpha=1.0):
        return cls("scaled_identity", rho, alpha=alpha)

    @classmethod
    def diagonal(cls, v, rho):
        return cls("diagonal", rho, v=v)

    @classmethod
    def general(cls, V, rho):
        return cls("general", rho, V=V)

    @classmethod
    def roi(cls, n_nodes, network, alpha, rho):
        """Weight 1 on the network nodes (zero-based) and ``alpha`` elsewhere."""
        v = np.full(n_nodes, float(alpha))
        v[np.asarray(network, dtype=np.int64)] = 1.0
        return cls.diagonal(v, rho)

    @property
    def size(self):
        if self.kind == "diagonal":
            return self.v.size
        if self.kind == "general":
            return self.V.shape[0]
        return None

    def check_size(self, n):
        if self.size is not None and self.size != n:
            raise InvalidInput(f"penalty is defined for {self.size} nodes, data has {n}")

    @cached_property
    def _lu(self):
        return sla.lu_factor(self.V)

    def whiten(self, X):
        """``V^-T X``."""
        if self.kind == "scaled_identity":
            return X / self.alpha
        if self.kind == "diagonal":
            return X / self.v[:, None]
        return sla.lu_solve(self._lu, X, trans=1)

    def unwhiten(self, U):
        """``V^-1 U``."""
        if self.kind == "scaled_identity":
            return U / self.alpha
        if self.kind == "diagonal":
            return U / self.v[:, None]
        return sla.lu_solve(self._lu, U)

    def baseline(self, c, n):
        """``c V^-1 V^-T`` as a scalar, a diagonal vector, or a dense matrix."""
        if self.kind == "scaled_identity":
            return c / self.alpha**2
        if self.kind == "diagonal":
            return c / self.v**2
        Vinv = sla.lu_solve(self._lu, np.eye(n))
        B = c * (Vinv @ Vinv.T)
        return 0.5 * (B + B.T)

    def matrix(self, n):
        if self.kind == "scaled_identity":
            return self.alpha * np.eye(n)
        if self.kind == "diagonal":
            return np.diag(self.v)
        return self.V.copy()

    def is_identity(self):
        return self.kind == "scaled_identity" and self.alpha == 1.0


@dataclass(frozen=True, eq=False)
class FactoredPrecision:
    """``Q = W diag(omega) W^T + baseline``, never densified for large N.

    ``baseline`` is a float (multiple of the identity), a length-N vector
    (diagonal) or an (N, N) matrix.
    """

    basis: np.ndarray
    omega: np.ndarray
    baseline: object
    rho: float
    c: float
    penalty: PenaltyShape | None = None
    source_T: int | None = None
    method: str = "riccati"

    def __post_init__(self):
        W = np.asarray(self.basis, dtype=np.float64)
        if W.ndim != 2:
            raise InvalidInput("basis must be 2-D")
        omega = np.asarray(self.omega, dtype=np.float64).reshape(-1)
        if omega.shape[0] != W.shape[1]:
            raise InvalidInput("omega length must equal the number of basis columns")
        b = self.baseline
        if np.ndim(b) == 0:
            b = float(b)
        else:
            b = np.asarray(b, dtype=np.float64)
            if b.shape not in ((W.shape[0],), (W.shape[0], W.shape[0])):
                raise InvalidInput(f"baseline shape {b.shape} incompatible with N={W.shape[0]}")
        object.__setattr__(self, "basis", W)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "baseline", b)

    @property
    def n_nodes(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    @property
    def baseline_kind(self):
        if isinstance(self.baseline, float):
            return "scalar"
        return "diagonal" if self.baseline.ndim == 1 else "dense"

    def baseline_diagonal(self):
        if self.baseline_kind == "scalar":
            return np.full(self.n_nodes, self.baseline)
        if self.baseline_kind == "diagonal":
            return self.baseline.copy()
        return np.diag(self.baseline).copy()

    def baseline_dense(self, idx=None):
        """Dense baseline, optionally restricted to rows/cols ``idx``."""
        n = self.n_nodes if idx is None else len(idx)
        if self.baseline_kind == "scalar":
            return self.baseline * np.eye(n)
        if self.baseline_kind == "diagonal":
            d = self.baseline if idx is None else self.baseline[idx]
            return np.diag(d)
        return self.baseline.copy() if idx is None else self.baseline[np.ix_(idx, idx)]

    def baseline_apply(self, x):
        if self.baseline_kind == "scalar":
            return self.baseline * x
        if self.baseline_kind == "diagonal":
            return self.baseline[:, None] * x if x.ndim == 2 else self.baseline * x
        return self.baseline @ x

    def baseline_solve(self, x):
        if self.baseline_kind == "scalar":
            return x / self.baseline
        if self.baseline_kind == "diagonal":
            return x / self.baseline[:, None] if x.ndim == 2 else x / self.baseline
        return sla.cho_solve(self._baseline_cholesky, x)

    @cached_property
    def _baseline_cholesky(self):
        try:
            return sla.cho_factor(self.baseline, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("baseline matrix is not positive definite") from exc

    def baseline_logdet(self):
        if self.baseline_kind == "scalar":
            if self.baseline <= 0:
                raise NumericalError("non-positive baseline")
            return self.n_nodes * np.log(self.baseline)
        if self.baseline_kind == "diagonal":
            if np.any(self.baseline <= 0):
                raise NumericalError("non-positive baseline")
            return float(np.sum(np.log(self.baseline)))
        L = self._baseline_cholesky[0]
        return 2.0 * float(np.sum(np.log(np.diag(L))))

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.basis @ (self.omega * (self.basis.T @ x)) + self.baseline_apply(x)


def riccati_eigenvalue_map(d, rho):
    """Positive root ``p`` of ``rho p^2 + d p - 1 = 0`` (elementwise).

    Evaluated as ``2 / (d + sqrt(d^2 + 4 rho))``, the cancellation-free form
    of ``sqrt(1/rho + d^2/(4 rho^2)) - d/(2 rho)``. Gives ``1/sqrt(rho)`` at
    ``d = 0``.
    """
    rho = float(rho)
    if not rho > 0:
        raise InvalidInput(f"rho must be positive, got {rho}")
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InvalidInput("covariance eigenvalues must be finite and non-negative")
    p = 2.0 / (d + np.sqrt(d * d + 4.0 * rho))
    return p if p.ndim else float(p)


def riccati_omega(s, rho):
    """``p(s^2) - 1/sqrt(rho)`` for singular values ``s``, without cancellation."""
    d = np.asarray(s, dtype=np.float64) ** 2
    sr = np.sqrt(rho)
    r = np.sqrt(d * d + 4.0 * rho)
    return -d * (2.0 * sr + r + d) / ((2.0 * sr + r) * (d + r) * sr)


def tikhonov_omega(s, rho):
    """``1/(s^2 + rho) - 1/rho``."""
    d = np.asarray(s, dtype=np.float64) ** 2
    return -d / (rho * (d + rho))


def _prepared(X):
    data = as_data(X)
    if data.projected:
        if not data.normalized:
            raise InvalidInput("projected data must come from a normalized matrix")
    elif not is_normalized(data.values):
        raise InvalidInput("rows must be zero-mean and unit-variance (or all zero)")
    return data


def _whitened_svd(data, penalty, rank):
    N = data.n_signals
    penalty.check_size(N)
    A = penalty.whiten(data.values) / np.sqrt(data.n_samples)
    U, s, _ = svd(A)
    if rank is not None:
        if rank < 1:
            raise InvalidInput("rank must be at least 1")
        U, s = U[:, :rank], s[:rank]
    return U, s


def _assemble(U, omega, penalty, c, data, method):
    keep = np.abs(omega) >= OMEGA_DROP
    U, omega = U[:, keep], omega[keep]
    return FactoredPrecision(
        basis=penalty.unwhiten(U),
        omega=omega,
        baseline=penalty.baseline(c, data.n_signals),
        rho=penalty.rho,
        c=c,
        penalty=penalty,
        source_T=data.n_samples,
        method=method,
    )


def estimate(X, penalty, rank=None):
    """Riccati-regularized precision of normalized data ``X`` (N, T).

    Parameters
    ----------
    X : DataMatrix or array_like
        Rows zero-mean and unit-variance (all-zero rows allowed), or the
        output of :func:`random_project` on such data.
    penalty : PenaltyShape
    rank : int, optional
        Keep only the leading ``rank`` singular values (truncated SVD).

    Returns
    -------
    FactoredPrecision
    """
    data = _prepared(X)
    U, s = _whitened_svd(data, penalty, rank)
    c = 1.0 / np.sqrt(penalty.rho)
    return _assemble(U, riccati_omega(s, penalty.rho), penalty, c, data, "riccati")


def estimate_tikhonov(X, rho, rank=None):
    """``(C + rho I)^-1`` in the same factored form, baseline ``1/rho``."""
    data = _prepared(X)
    penalty = PenaltyShape.identity(rho)
    U, s = _whitened_svd(data, penalty, rank)
    return _assemble(U, tikhonov_omega(s, penalty.rho), penalty, 1.0 / penalty.rho, data, "tikhonov")


def densify(Q, cap=DENSIFY_CAP):
    """Dense ``W diag(omega) W^T + baseline``; refuses ``N > cap``."""
    N = Q.n_nodes
    if cap is not None and N > cap:
        raise TooLarge(f"refusing to densify a {N}x{N} precision (cap {cap})")
    dense = (Q.basis * Q.omega) @ Q.basis.T + Q.baseline_dense()
    return 0.5 * (dense + dense.T)


def _capacitance(Q):
    # I + diag(omega) W^T B^-1 W; its determinant is det(Q) / det(B)
    G = Q.basis.T @ Q.baseline_solve(Q.basis)
    return np.eye(Q.rank) + Q.omega[:, None] * G


def logdet(Q):
    """``log det Q`` via the matrix determinant lemma, O(N m^2)."""
    base = Q.baseline_logdet()
    if Q.rank == 0:
        return float(base)
    sign, ld = np.linalg.slogdet(_capacitance(Q))
    if sign <= 0 or not np.isfinite(ld):
        raise NumericalError("precision matrix is not positive definite")
    return float(base + ld)


def trace_product(Q, C):
    """``trace(C Q)`` without densifying ``Q``."""
    C = np.asarray(C, dtype=np.float64)
    N = Q.n_nodes
    if C.shape != (N, N):
        raise InvalidInput(f"covariance shape {C.shape} does not match N={N}")
    low = float(np.sum(Q.omega * np.sum(Q.basis * (C @ Q.basis), axis=0)))
    if Q.baseline_kind == "scalar":
        base = Q.baseline * float(np.trace(C))
    elif Q.baseline_kind == "diagonal":
        base = float(Q.baseline @ np.diag(C))
    else:
        base = float(np.sum(C * Q.baseline))
    return low + base


def trace_product_data(Q, X):
    """``trace(C Q)`` with ``C = X X^T / T`` given only the data."""
    data = as_data(X)
    if data.n_signals != Q.n_nodes:
        raise InvalidInput("data and precision disagree on N")
    values = data.values
    proj = Q.basis.T @ values
    low = float(np.sum(Q.omega * np.sum(proj * proj, axis=1)))
    base = float(np.sum(values * Q.baseline_apply(values)))
    return (low + base) / data.n_samples


def objective(Q_dense, C, penalty):
    """``log det Q - <C, Q> - (rho/2) ||V Q V^T||_F^2`` for a dense ``Q``."""
    try:
        L = np.linalg.cholesky(Q_dense)
    except np.linalg.LinAlgError:
        return -np.inf
    ld = 2.0 * float(np.sum(np.log(np.diag(L))))
    V = penalty.matrix(Q_dense.shape[0])
    P = V @ Q_dense @ V.T
    return ld - float(np.sum(C * Q_dense)) - 0.5 * penalty.rho * float(np.sum(P * P))


def stationarity_residual(Q_dense, C, penalty):
    """Frobenius norm of ``Q^-1 - C - rho V^T V Q V^T V``."""
    N = Q_dense.shape[0]
    V = penalty.matrix(N)
    VtV = V.T @ V
    R = np.linalg.inv(Q_dense) - C - penalty.rho * VtV @ Q_dense @ VtV
    return float(np.linalg.norm(R))
