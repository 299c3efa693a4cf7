import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import normalized_data
from riccati_precision.errors import InvalidInput, NumericalError, RankDeficient, TooLarge
from riccati_precision.ingest import DataMatrix
from riccati_precision.matcore import covariance
from riccati_precision.randproj import ProjectionConfig, random_project
from riccati_precision.riccati import (
    FactoredPrecision,
    PenaltyShape,
    densify,
    estimate,
    estimate_tikhonov,
    logdet,
    objective,
    riccati_eigenvalue_map,
    riccati_omega,
    stationarity_residual,
    tikhonov_omega,
    trace_product,
    trace_product_data,
)


def positive_root(d, rho):
    mpmath.mp.dps = 50
    d, rho = mpmath.mpf(d), mpmath.mpf(rho)
    return float((-d + mpmath.sqrt(d * d + 4 * rho)) / (2 * rho))


@pytest.mark.parametrize(
    "d, rho, p",
    [
        (0.0, 1.0, 1.0),
        (0.0, 4.0, 0.5),
        (1.0, 1.0, (np.sqrt(5) - 1) / 2),
        (1.0, 2.0, 0.5),  # 2*0.25 + 0.5 - 1 = 0
    ],
)
def test_scalar_map_examples(d, rho, p):
    assert riccati_eigenvalue_map(d, rho) == pytest.approx(p, rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0, 1e8, allow_nan=False),
    st.floats(1e-6, 1e6, allow_nan=False),
)
def test_scalar_map_matches_extended_precision_root(d, rho):
    p = riccati_eigenvalue_map(d, rho)
    assert p > 0
    assert p == pytest.approx(positive_root(d, rho), rel=1e-12)


def test_scalar_map_rejects_bad_input():
    with pytest.raises(InvalidInput):
        riccati_eigenvalue_map(-1.0, 1.0)
    with pytest.raises(InvalidInput):
        riccati_eigenvalue_map(1.0, 0.0)


def test_omega_cancellation_free():
    mpmath.mp.dps = 50
    for s, rho in [(1e-9, 1.0), (1e-4, 100.0), (3.0, 0.1), (1e4, 1e-3)]:
        exact = positive_root(mpmath.mpf(s) ** 2, rho) - float(1 / mpmath.sqrt(mpmath.mpf(rho)))
        d = mpmath.mpf(s) ** 2
        exact = float((-d + mpmath.sqrt(d * d + 4 * rho)) / (2 * rho) - 1 / mpmath.sqrt(rho))
        assert riccati_omega(s, rho) == pytest.approx(exact, rel=1e-12)
        assert riccati_omega(s, rho) < 0


def test_tikhonov_omega():
    s = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(tikhonov_omega(s, 0.5), 1 / (s**2 + 0.5) - 2.0)


def test_single_node():
    # one normalized signal has C = 1, so p solves p^2 + p - 1 = 0 at rho = 1
    X = DataMatrix(np.array([[1.0, -1.0, 1.0, -1.0]]))
    Q = estimate(X, PenaltyShape.identity(1.0))
    assert densify(Q)[0, 0] == pytest.approx((np.sqrt(5) - 1) / 2, rel=1e-14)


def test_zero_data_gives_baseline():
    X = np.zeros((3, 10))
    Q = estimate(X, PenaltyShape.identity(4.0))
    assert Q.rank == 0
    np.testing.assert_allclose(densify(Q), 0.5 * np.eye(3))


def newton_fixed_point(C, rho, v, iters=60):
    """Solve the stationarity equation with Newton on the diagonal of a commuting system."""
    # with diagonal C and V the solution is diagonal: q_i solves
    # 1/q - c_i - rho v_i^4 q = 0
    q = np.ones(len(C))
    for _ in range(iters):
        f = 1 / q - C - rho * v**4 * q
        fp = -1 / q**2 - rho * v**4
        q = q - f / fp
    return q


def test_commuting_diagonal_case():
    # signals with disjoint support have diagonal covariance
    X = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    X = X * np.sqrt(2.0)  # unit variance over T = 4
    C = covariance(X)
    v = np.array([1.0, 3.0])
    Q = densify(estimate(X, PenaltyShape.diagonal(v, 0.7)))
    q = newton_fixed_point(np.diag(C), 0.7, v)
    np.testing.assert_allclose(Q, np.diag(q), atol=1e-13)


def test_tikhonov_matches_dense_inverse(rng):
    X = normalized_data(rng, 15, 40, rank=3)
    C = covariance(X)
    for rho in (0.1, 1.0, 10.0):
        Q = estimate_tikhonov(X, rho)
        np.testing.assert_allclose(densify(Q), np.linalg.inv(C + rho * np.eye(15)), atol=1e-10)


def _penalties(rng, n, rho):
    return [
        PenaltyShape.identity(rho, alpha=1.7),
        PenaltyShape.diagonal(rng.uniform(0.5, 2.0, n), rho),
        PenaltyShape.general(np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n), rho),
    ]


@pytest.mark.parametrize("rho", [0.1, 1.0, 100.0])
def test_stationarity(rng, rho):
    X = normalized_data(rng, 12, 30, rank=2)
    C = covariance(X)
    for pen in _penalties(rng, 12, rho):
        Q = densify(estimate(X, pen))
        assert stationarity_residual(Q, C, pen) <= 1e-9 * (1 + np.linalg.norm(C))


def test_rank_deficient_data_stationarity(rng):
    # N > T so C is singular
    X = normalized_data(rng, 25, 8)
    C = covariance(X)
    pen = PenaltyShape.identity(0.25)
    Q = estimate(X, pen)
    assert Q.rank <= 8
    assert stationarity_residual(densify(Q), C, pen) <= 1e-9 * (1 + np.linalg.norm(C))


def test_objective_is_maximized(rng):
    X = normalized_data(rng, 6, 20, rank=2)
    C = covariance(X)
    for pen in _penalties(rng, 6, 0.5):
        Q = densify(estimate(X, pen))
        best = objective(Q, C, pen)
        for _ in range(100):
            E = rng.standard_normal((6, 6))
            assert objective(Q + 1e-3 * (E + E.T) / 2, C, pen) < best


def test_objective_outside_cone():
    pen = PenaltyShape.identity(1.0)
    assert objective(-np.eye(2), np.eye(2), pen) == -np.inf
    assert objective(np.diag([1.0, -1.0]), np.eye(2), pen) == -np.inf


def test_identity_alpha_equals_scaled_rho(rng):
    # ||alpha Q alpha||^2 rho = ||Q||^2 rho alpha^4
    X = normalized_data(rng, 10, 25)
    a = densify(estimate(X, PenaltyShape.identity(0.3, alpha=2.0)))
    b = densify(estimate(X, PenaltyShape.identity(0.3 * 16)))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_encodings_agree(rng):
    X = normalized_data(rng, 9, 30, rank=2)
    v = rng.uniform(0.5, 2.0, 9)
    ref = densify(estimate(X, PenaltyShape.diagonal(v, 0.4)))
    np.testing.assert_allclose(densify(estimate(X, PenaltyShape.general(np.diag(v), 0.4))), ref, atol=1e-12)
    one = densify(estimate(X, PenaltyShape.identity(0.4)))
    np.testing.assert_allclose(densify(estimate(X, PenaltyShape.diagonal(np.ones(9), 0.4))), one, atol=1e-13)


def test_truncation_keeps_at_most_rank(rng):
    X = normalized_data(rng, 20, 50)
    Q = estimate(X, PenaltyShape.identity(1.0), rank=5)
    assert Q.rank == 5
    assert np.all(Q.omega <= 0)


def test_projected_rank_bounded_by_t(rng):
    X = normalized_data(rng, 30, 100)
    Y, _ = random_project(X, ProjectionConfig(7, 1, 0))
    Q = estimate(Y, PenaltyShape.identity(1.0))
    assert Q.rank <= 7
    assert Q.source_T == 100


def test_projection_at_full_width_is_exact(rng):
    # centering leaves rank T - 1, which t = T - 1 captures exactly
    X = normalized_data(rng, 15, 12)
    Y, _ = random_project(X, ProjectionConfig(11, 0, 3))
    pen = PenaltyShape.identity(0.5)
    np.testing.assert_allclose(densify(estimate(Y, pen)), densify(estimate(X, pen)), atol=1e-12)


def test_omega_monotone_in_singular_value():
    s = np.linspace(0, 10, 50)
    w = riccati_omega(s, 0.5)
    assert np.all(np.diff(w) < 0)


def test_rejects_unnormalized():
    with pytest.raises(InvalidInput):
        estimate(np.arange(12.0).reshape(2, 6), PenaltyShape.identity(1.0))


def test_rejects_bad_penalties():
    with pytest.raises(InvalidInput):
        PenaltyShape.identity(0.0)
    with pytest.raises(InvalidInput):
        PenaltyShape.diagonal([1.0, -1.0], 1.0)
    with pytest.raises(RankDeficient):
        PenaltyShape.general(np.ones((3, 3)), 1.0)
    with pytest.raises(InvalidInput):
        estimate(np.zeros((3, 5)), PenaltyShape.diagonal(np.ones(4), 1.0))


def _random_factored(rng, n, m, kind):
    W = rng.standard_normal((n, m))
    omega = -rng.uniform(0.0, 0.2, m) / np.sum(W**2, axis=0)
    if kind == "scalar":
        base = 1.3
    elif kind == "diagonal":
        base = rng.uniform(0.5, 2.0, n)
    else:
        A = rng.standard_normal((n, n))
        base = A @ A.T / n + np.eye(n)
    return FactoredPrecision(W, omega, base, 1.0, 1.0)


@pytest.mark.parametrize("kind", ["scalar", "diagonal", "dense"])
def test_logdet_and_trace(rng, kind):
    Q = _random_factored(rng, 12, 4, kind)
    D = densify(Q)
    assert logdet(Q) == pytest.approx(np.linalg.slogdet(D)[1], rel=1e-10)
    X = rng.standard_normal((12, 30))
    C = X @ X.T / 30
    assert trace_product(Q, C) == pytest.approx(np.trace(C @ D), rel=1e-10)
    assert trace_product_data(Q, X) == pytest.approx(np.trace(C @ D), rel=1e-10)
    x = rng.standard_normal(12)
    np.testing.assert_allclose(Q.matvec(x), D @ x, atol=1e-12)


def test_logdet_small_example():
    # diag(2, 3) + (-1) e1 e1^T = diag(1, 3)
    Q = FactoredPrecision(np.array([[1.0], [0.0]]), [-1.0], np.array([2.0, 3.0]), 1.0, 1.0)
    assert logdet(Q) == pytest.approx(np.log(3.0), rel=1e-14)
    bad = FactoredPrecision(np.array([[1.0], [0.0]]), [-3.0], 2.0, 1.0, 1.0)
    with pytest.raises(NumericalError):
        logdet(bad)


def test_densify_cap():
    Q = FactoredPrecision(np.zeros((2001, 1)), [0.0], 1.0, 1.0, 1.0)
    with pytest.raises(TooLarge):
        densify(Q)
    assert densify(FactoredPrecision(np.zeros((3, 0)), [], 2.0, 1.0, 1.0), cap=3).trace() == 6.0


def test_factored_contract():
    with pytest.raises(InvalidInput):
        FactoredPrecision(np.zeros((3, 2)), [1.0], 1.0, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        FactoredPrecision(np.zeros((3, 1)), [1.0], np.ones(4), 1.0, 1.0)
