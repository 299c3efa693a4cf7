"""Precision matrices that share one eigenbasis across many scans.

The joint SVD used here is the thin SVD of the column-concatenated whitened
scans ``[V^-T X_1 / sqrt(T_1) | ... | V^-T X_K / sqrt(T_K)]``. Its leading
``m`` left singular vectors form the shared basis; every scan keeps its own
energies ``d_k,i = w_i^T D_k w_i`` along those directions, and its precision
applies the scalar Riccati map to them. At ``K = 1`` this is exactly the
single-scan estimator truncated to ``m`` components.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .matcore import svd
from .randproj import ProjectionConfig, derive_seed, random_project
from .riccati import FactoredPrecision, OMEGA_DROP, PenaltyShape, _prepared, riccati_omega


@dataclass(frozen=True, eq=False)
class SharedBasisModel:
    basis: np.ndarray
    subject_spectra: np.ndarray
    penalty: PenaltyShape
    sample_counts: tuple = ()

    def __post_init__(self):
        spectra = np.atleast_2d(np.asarray(self.subject_spectra, dtype=np.float64))
        if spectra.shape[1] != self.basis.shape[1]:
            raise InvalidInput("spectra length must equal the number of shared components")
        if np.any(spectra < -1e-12):
            raise InvalidInput("subject spectra must be non-negative")
        object.__setattr__(self, "subject_spectra", np.maximum(spectra, 0.0))

    @property
    def n_subjects(self):
        return self.subject_spectra.shape[0]

    @property
    def n_components(self):
        return self.basis.shape[1]


def _block_scale(data, weighting, total):
    if weighting == "subject":
        return 1.0 / np.sqrt(data.n_samples)
    if weighting == "sample":
        return 1.0 / np.sqrt(total)
    raise InvalidInput(f"unknown weighting {weighting!r}; use 'subject' or 'sample'")


def fit_shared(Xs, m, penalty, weighting="subject", project_dim=None, power_iterations=1, seed=0):
    """Fit a shared ``m``-dimensional basis to ``K`` normalized scans.

    Parameters
    ----------
    Xs : sequence of DataMatrix
        Same number of rows each.
    m : int
        Number of shared components.
    penalty : PenaltyShape
    weighting : {"subject", "sample"}
        ``"subject"`` scales each block by ``1/sqrt(T_k)`` so every scan
        counts equally; ``"sample"`` uses the pooled ``1/sqrt(sum T_k)`` so
        longer scans weigh more.
    project_dim : int, optional
        Randomly project every scan to this many samples first (bounds the
        width of the concatenated matrix).
    """
    if not Xs:
        raise InvalidInput("need at least one scan")
    data = [_prepared(X) for X in Xs]
    N = data[0].n_signals
    if any(d.n_signals != N for d in data):
        raise InvalidInput("all scans must have the same number of signals")
    penalty.check_size(N)
    if project_dim is not None:
        data = [
            random_project(d, ProjectionConfig(project_dim, power_iterations, derive_seed(seed, k)))[0]
            for k, d in enumerate(data)
        ]
    width = min(d.values.shape[1] for d in data)
    if not 1 <= m <= min(N, width):
        raise InvalidInput(f"m={m} must lie in 1..{min(N, width)}")
    total = sum(d.n_samples for d in data)
    whitened = [penalty.whiten(d.values) for d in data]
    joint = np.hstack([w * _block_scale(d, weighting, total) for w, d in zip(whitened, data)])
    U = svd(joint).left_vectors[:, :m]
    # per-scan energies always use the scan's own 1/T covariance
    spectra = np.array([np.sum((U.T @ w) ** 2, axis=1) / d.n_samples for w, d in zip(whitened, data)])
    return SharedBasisModel(U, spectra, penalty, tuple(d.n_samples for d in data))


def subject_precision(model, k):
    """Factored precision of scan ``k`` on the shared basis."""
    if not 0 <= k < model.n_subjects:
        raise InvalidInput(f"subject index {k} out of range 0..{model.n_subjects - 1}")
    penalty = model.penalty
    omega = riccati_omega(np.sqrt(model.subject_spectra[k]), penalty.rho)
    keep = np.abs(omega) >= OMEGA_DROP
    c = 1.0 / np.sqrt(penalty.rho)
    N = model.basis.shape[0]
    return FactoredPrecision(
        basis=penalty.unwhiten(model.basis[:, keep]),
        omega=omega[keep],
        baseline=penalty.baseline(c, N),
        rho=penalty.rho,
        c=c,
        penalty=penalty,
        source_T=model.sample_counts[k] if model.sample_counts else None,
        method="jsvd",
    )


def all_precisions(model):
    return [subject_precision(model, k) for k in range(model.n_subjects)]
