"""Randomized compression of the sample axis (range finder with power iterations).

For data ``X`` of shape (N, T) a Gaussian test matrix ``G`` of shape (N, t) is
drawn and the sample-space basis ``W`` (T, t) is the orthonormalized
``(X^T X)^q X^T G``. The projected data is ``Y = X W`` (N, t).

Random numbers
--------------
Gaussian variates come from a Philox-4x64 counter-based generator keyed by
``numpy.random.SeedSequence(seed, spawn_key=(stream,))``. Each raw 64-bit
word ``r`` is mapped to ``u = ((r >> 11) + 0.5) / 2**53`` in the open unit
interval and then to ``ndtri(u)`` (inverse normal CDF). Values are drawn in
row-major order, so a given (seed, stream, shape) always yields the same
matrix on every platform.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InvalidInput
from .ingest import DataMatrix, as_data
from .matcore import gram_schmidt

_U64 = 2**64


def gaussian_matrix(seed, shape, stream=0):
    if not 0 <= int(seed) < _U64:
        raise InvalidInput("seed must be a 64-bit unsigned integer")
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    bitgen = np.random.Philox(seq)
    count = int(np.prod(shape))
    raw = bitgen.random_raw(count)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(shape)


def derive_seed(seed, *path):
    """A child 64-bit seed for an independent sub-stream (e.g. one split)."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ProjectionConfig:
    target_dim: int
    power_iterations: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.target_dim < 1:
            raise InvalidInput("target dimension must be at least 1")
        if self.power_iterations < 0:
            raise InvalidInput("number of power iterations must be non-negative")
        if not 0 <= self.seed < _U64:
            raise InvalidInput("seed must be a 64-bit unsigned integer")


def random_project(X, cfg):
    """Project the samples of ``X`` onto a randomized ``t``-dimensional basis.

    Returns
    -------
    Y : DataMatrix
        ``X W`` with ``t`` columns. ``sample_count`` keeps the original T so
        that ``covariance(Y)`` approximates ``covariance(X)``.
    W : ndarray, shape (T, t)
        Orthonormal sample-space basis.

    Raises
    ------
    InvalidInput
        If ``t`` exceeds the number of samples.
    RankDeficient
        If the sketch loses rank while being orthonormalized, typically
        because ``t`` exceeds the rank of ``X``. Retry with another seed or
        a smaller ``t``.
    """
    data = as_data(X)
    values = data.values
    N, T = values.shape
    t = cfg.target_dim
    if t > T:
        raise InvalidInput(f"target dimension {t} exceeds the {T} available samples")
    G = gaussian_matrix(cfg.seed, (N, t))
    U = gram_schmidt(values.T @ G)
    # alternate X and X^T, re-orthonormalizing each time so (X^T X)^q never overflows
    for _ in range(cfg.power_iterations):
        Z = values @ U
        if t <= N:
            Z = gram_schmidt(Z)
        U = gram_schmidt(values.T @ Z)
    Y = values @ U
    out = DataMatrix(
        Y,
        normalized=data.normalized,
        sample_count=data.n_samples,
        projected=True,
        row_labels=data.row_labels,
    )
    return out, U


def retained_energy(X, Y):
    """Fraction ``||Y||_F^2 / ||X||_F^2`` of the signal kept by a projection."""
    x = as_data(X).values if not isinstance(X, np.ndarray) else X
    y = Y.values if isinstance(Y, DataMatrix) else np.asarray(Y, dtype=np.float64)
    total = float(np.sum(x * x))
    if total == 0.0:
        raise InvalidInput("cannot measure retained energy of an all-zero matrix")
    return float(np.sum(y * y)) / total


def retention_curve(X, dims, power_iterations=0, seed=0):
    """Retained energy for each target dimension in ``dims`` (one sketch per entry)."""
    return [
        retained_energy(X, random_project(X, ProjectionConfig(int(t), power_iterations, seed))[0])
        for t in dims
    ]
