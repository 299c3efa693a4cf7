import numpy as np
import pytest

from riccati_precision.errors import InvalidInput, RankDeficient
from riccati_precision.ingest import DataMatrix
from riccati_precision.matcore import orthonormal_deviation, svd
from riccati_precision.randproj import (
    ProjectionConfig,
    derive_seed,
    gaussian_matrix,
    random_project,
    retained_energy,
    retention_curve,
)
from riccati_precision.synthetic import low_rank_matrix, power_law_matrix


def test_gaussian_stream_is_stable():
    a = gaussian_matrix(7, (3, 4))
    b = gaussian_matrix(7, (3, 4))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, gaussian_matrix(7, (3, 4), stream=1))
    assert not np.array_equal(a, gaussian_matrix(8, (3, 4)))


def test_gaussian_moments():
    z = gaussian_matrix(3, (200_000,))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01
    assert np.all(np.isfinite(z))


def test_gaussian_rejects_bad_seed():
    with pytest.raises(InvalidInput):
        gaussian_matrix(-1, (2,))


def test_derive_seed_distinct():
    assert len({derive_seed(1, i) for i in range(50)}) == 50


def test_full_dimension_preserves_norm():
    X = gaussian_matrix(1, (30, 12))
    Y, W = random_project(X, ProjectionConfig(12, 1, 4))
    assert abs(np.linalg.norm(Y.values) - np.linalg.norm(X)) < 1e-9
    assert retained_energy(X, Y) == pytest.approx(1.0, abs=1e-12)


def test_projection_contract():
    X = gaussian_matrix(2, (20, 50))
    Y, W = random_project(X, ProjectionConfig(8, 2, 9))
    assert W.shape == (50, 8) and Y.shape == (20, 8)
    assert orthonormal_deviation(W) < 1e-10
    np.testing.assert_allclose(Y.values, X @ W)
    assert Y.projected and Y.n_samples == 50


def test_exact_rank_is_captured():
    X = low_rank_matrix(40, 100, 10, seed=3)
    Y, _ = random_project(X, ProjectionConfig(10, 1, 5))
    assert np.linalg.norm(Y.values) >= 0.999 * np.linalg.norm(X)
    assert retained_energy(X, Y) >= 0.999
    Y3, _ = random_project(X, ProjectionConfig(10, 3, 5))
    assert retained_energy(X, Y3) >= 0.999


def test_target_beyond_rank_is_rank_deficient():
    X = low_rank_matrix(40, 100, 10, seed=3)
    with pytest.raises(RankDeficient):
        random_project(X, ProjectionConfig(12, 1, 5))


def test_target_beyond_samples():
    with pytest.raises(InvalidInput):
        random_project(np.ones((3, 4)), ProjectionConfig(5))


def test_power_law_top_singular_values():
    # decay over the first 20 components, then a flat floor
    X = power_law_matrix(100, 150, 1.0, floor_index=20, seed=4)
    Y, _ = random_project(X, ProjectionConfig(30, 3, 1))
    sx = svd(X).singular_values[:12]
    sy = svd(Y.values).singular_values[:12]
    assert np.all(np.abs(sy - sx) <= 0.05 * sx)


def test_interlacing():
    X = power_law_matrix(60, 90, 0.7, seed=5)
    for q in (0, 1, 3):
        Y, _ = random_project(X, ProjectionConfig(25, q, 2))
        sx = svd(X).singular_values[:25]
        assert np.all(svd(Y.values).singular_values <= sx + 1e-9)


def test_energy_monotone_in_power_iterations():
    X = power_law_matrix(80, 120, 1.0, seed=6)
    violations = 0
    for seed in range(20):
        e = [retained_energy(X, random_project(X, ProjectionConfig(10, q, seed))[0]) for q in (0, 1, 3)]
        violations += (e[1] < e[0]) + (e[2] < e[1])
    assert violations <= 2


def test_determinism():
    X = gaussian_matrix(11, (25, 60))
    a, _ = random_project(X, ProjectionConfig(9, 2, 123))
    b, _ = random_project(X, ProjectionConfig(9, 2, 123))
    assert a.values.tobytes() == b.values.tobytes()


def test_retained_energy_edge_cases():
    X = gaussian_matrix(1, (4, 6))
    assert retained_energy(X, np.zeros((4, 2))) == 0.0
    with pytest.raises(InvalidInput):
        retained_energy(np.zeros((3, 3)), np.zeros((3, 1)))


def test_retention_curve_nondecreasing_in_t():
    X = power_law_matrix(50, 80, 1.0, seed=7)
    curve = retention_curve(X, [5, 10, 20, 40], power_iterations=2, seed=1)
    assert all(0 <= e <= 1 + 1e-12 for e in curve)
    assert curve == sorted(curve)


def test_projection_keeps_normalized_flag():
    X = DataMatrix(gaussian_matrix(1, (5, 20)), normalized=True)
    Y, _ = random_project(X, ProjectionConfig(4))
    assert Y.normalized and Y.sample_count == 20


def test_config_validation():
    with pytest.raises(InvalidInput):
        ProjectionConfig(0)
    with pytest.raises(InvalidInput):
        ProjectionConfig(3, -1)
