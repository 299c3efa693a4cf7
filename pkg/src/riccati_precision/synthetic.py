"""Seeded synthetic data with planted structure.

Everything draws from :func:`randproj.gaussian_matrix`, so outputs are
reproducible across platforms for a given seed.
"""

import numpy as np

from .matcore import svd
from .randproj import derive_seed, gaussian_matrix


def orthonormal_basis(n, r, seed):
    return svd(gaussian_matrix(seed, (n, r))).left_vectors[:, :r]


def power_law_matrix(n, t, exponent=1.0, floor_index=None, seed=0):
    """``U diag(sigma) Z^T`` with random orthonormal ``U``, ``Z`` and ``sigma_j = j^-exponent``.

    With ``floor_index`` the spectrum stops decaying there and stays flat,
    like a signal decaying into a white-noise floor.
    """
    k = min(n, t)
    U = orthonormal_basis(n, k, derive_seed(seed, 0))
    Z = orthonormal_basis(t, k, derive_seed(seed, 1))
    j = np.arange(1, k + 1, dtype=np.float64)
    if floor_index is not None:
        j = np.minimum(j, floor_index)
    return (U * j**-exponent) @ Z.T


def low_rank_matrix(n, t, rank, seed=0):
    """Exact-rank ``G H`` with thin Gaussian factors."""
    return gaussian_matrix(derive_seed(seed, 0), (n, rank)) @ gaussian_matrix(derive_seed(seed, 1), (rank, t))


def planted_rank_cohort(n_subjects, n_nodes, rank, samples_per_subject=1, signal=None, noise=1.0, seed=0):
    """Subjects drawn from ``N(0, B diag(signal) B^T + noise^2 I)``.

    ``B`` is one orthonormal (n_nodes, rank) basis shared by the cohort.
    Returns the list of per-subject (n_nodes, samples_per_subject) arrays and
    the planted basis.
    """
    B = orthonormal_basis(n_nodes, rank, derive_seed(seed, 0))
    if signal is None:
        signal = np.linspace(20.0, 5.0, rank)
    amp = np.sqrt(np.asarray(signal, dtype=np.float64))
    subjects = []
    for k in range(n_subjects):
        z = gaussian_matrix(derive_seed(seed, 1, k), (rank, samples_per_subject))
        e = gaussian_matrix(derive_seed(seed, 2, k), (n_nodes, samples_per_subject))
        subjects.append(B @ (amp[:, None] * z) + noise * e)
    return subjects, B


def shared_spectrum_cohort(
    n_subjects,
    n_scans,
    n_nodes,
    rank,
    n_samples,
    spread=0.8,
    noise=1.0,
    seed=0,
):
    """Scans whose covariances share eigenvectors but carry subject-specific spectra.

    Subject ``k`` has loadings ``base_i * exp(spread * z_ki)`` on a common
    orthonormal basis; each of its ``n_scans`` scans is an independent
    ``n_samples``-long draw plus isotropic noise. Returns
    ``scans[k][r]`` arrays and the basis.
    """
    B = orthonormal_basis(n_nodes, rank, derive_seed(seed, 0))
    base = np.geomspace(30.0, 3.0, rank)
    z = gaussian_matrix(derive_seed(seed, 1), (n_subjects, rank))
    loadings = base * np.exp(spread * z)
    scans = []
    for k in range(n_subjects):
        amp = np.sqrt(loadings[k])
        subject = []
        for r in range(n_scans):
            f = gaussian_matrix(derive_seed(seed, 2, k, r), (rank, n_samples))
            e = gaussian_matrix(derive_seed(seed, 3, k, r), (n_nodes, n_samples))
            subject.append(B @ (amp[:, None] * f) + noise * e)
        scans.append(subject)
    return scans, B
