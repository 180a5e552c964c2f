import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import exhaustive_lsq, exhaustive_qp
from segspline import (
    DesignSystem,
    KnotSet,
    SolverError,
    basis_matrix,
    fit_equality,
    fit_inequality,
    fit_unconstrained,
    full_constraints,
    gaussian_loglik,
    project_cone,
)


def _random_instance(rng, n=30, k=3, q=3):
    X = rng.standard_normal((n, k))
    C = rng.standard_normal((q, k))
    y = rng.standard_normal(n)
    return DesignSystem(X=X, C=C), y


def test_intercept_fit_is_mean():
    y = np.array([1.0, 2.0, 4.0])
    design = DesignSystem(X=np.ones((3, 1)), C=np.zeros((0, 1)))
    fit = fit_inequality(design, y)
    assert fit.theta[0] == pytest.approx(y.mean())
    assert fit.rss == pytest.approx(np.sum((y - y.mean()) ** 2))


def test_interpolation_rss_zero():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 2))
    theta_star = np.array([0.7, 1.2])
    y = X @ theta_star
    design = DesignSystem(X=X, C=np.array([[1.0, 0.0]]))
    fit = fit_inequality(design, y)
    np.testing.assert_allclose(fit.theta, theta_star, atol=1e-10)
    assert fit.rss == pytest.approx(0.0, abs=1e-18)


def test_negative_jump_clamped_to_zero_matches_grid():
    # two-state data simulated with a negative jump: the fit pins the jump
    # at zero; profile the remaining coefficients over a dense grid of the
    # two constrained ones for an independent optimum
    rng = np.random.default_rng(42)
    ks = KnotSet(knots=(0.5,), state_labels=(0, 1))
    x = np.sort(rng.uniform(0, 1, size=60))
    X = basis_matrix(x, ks)
    y = 1.0 + 0.5 * x - 0.8 * X[:, 2] + 0.3 * X[:, 3] + 0.1 * rng.standard_normal(60)
    design = DesignSystem(X=X, C=full_constraints(ks))
    fit = fit_inequality(design, y)
    assert fit.theta[2] == pytest.approx(0.0, abs=1e-9)

    # grid over (jump, hinge) >= 0 with free coefficients profiled exactly
    best = np.inf
    Xf = X[:, :2]
    for jump in np.linspace(0, 0.5, 201):
        for hinge in np.linspace(0, 1.0, 201):
            resid = y - jump * X[:, 2] - hinge * X[:, 3]
            coef, _, _, _ = np.linalg.lstsq(Xf, resid, rcond=None)
            if coef[1] < 0:  # slope constraint
                coef = np.array([resid.mean(), 0.0])
            r = resid - Xf @ coef
            best = min(best, r @ r)
    assert fit.rss <= best + 1e-6


def test_rss_ordering_invariant():
    rng = np.random.default_rng(7)
    for _ in range(20):
        design, y = _random_instance(rng)
        r_unc = fit_unconstrained(design, y).rss
        r_ineq = fit_inequality(design, y).rss
        r_eq = fit_equality(design, y).rss
        assert r_eq >= r_ineq - 1e-9
        assert r_ineq >= r_unc - 1e-9


def test_kkt_residual_reported_small():
    rng = np.random.default_rng(12)
    for _ in range(20):
        design, y = _random_instance(rng, q=4)
        fit = fit_inequality(design, y)
        assert fit.kkt_residual <= 1e-8
        assert np.min(design.C @ fit.theta) >= -1e-9


def test_matches_exhaustive_oracle_randomized():
    rng = np.random.default_rng(2718)
    for i in range(60):
        k = int(rng.integers(1, 5))
        q = int(rng.integers(0, 5))
        n = int(rng.integers(k + 2, 25))
        design, y = _random_instance(rng, n=n, k=k, q=q)
        fit = fit_inequality(design, y)
        _, rss_oracle = exhaustive_lsq(design.X, y, design.C)
        assert fit.rss <= rss_oracle + 1e-6
        assert fit.rss >= rss_oracle - 1e-6


def test_equality_fit_matches_kkt_solution():
    rng = np.random.default_rng(5)
    design, y = _random_instance(rng, n=40, k=4, q=2)
    fit = fit_equality(design, y)
    np.testing.assert_allclose(design.C @ fit.theta, 0.0, atol=1e-9)
    # stationarity on the nullspace of C
    grad = design.X.T @ (design.X @ fit.theta - y)
    _, _, vt = np.linalg.svd(design.C)
    null = vt[np.linalg.matrix_rank(design.C):]
    np.testing.assert_allclose(null @ grad, 0.0, atol=1e-7)


def test_project_cone_idempotent_and_feasible():
    rng = np.random.default_rng(31)
    gram = np.eye(3)
    C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
    for _ in range(25):
        z = rng.standard_normal(3)
        point, n_active = project_cone(z, gram, C)
        assert np.min(C @ point) >= -1e-9
        again, _ = project_cone(point, gram, C)
        np.testing.assert_allclose(again, point, atol=1e-8)
        assert 0 <= n_active <= 2


def test_project_cone_matches_qp_oracle():
    rng = np.random.default_rng(99)
    for _ in range(30):
        k = int(rng.integers(2, 4))
        q = int(rng.integers(1, 4))
        A = rng.standard_normal((k + 2, k))
        gram = A.T @ A
        C = rng.standard_normal((q, k))
        z = rng.standard_normal(k)
        point, _ = project_cone(z, gram, C)
        oracle, _ = exhaustive_qp(gram, gram @ z, C)
        d = point - oracle
        assert d @ gram @ d <= 1e-10


def test_loglik_formula():
    rss, n = 2.5, 20
    want = -(n / 2) * (np.log(2 * np.pi * rss / n) + 1)
    assert gaussian_loglik(rss, n) == pytest.approx(want)


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_fit_inequality_never_violates(seed):
    rng = np.random.default_rng(seed)
    design, y = _random_instance(rng, n=20, k=3, q=3)
    fit = fit_inequality(design, y)
    assert np.min(design.C @ fit.theta) >= -1e-9
    assert fit.rss >= fit_unconstrained(design, y).rss - 1e-9


def test_project_cone_full_rank_working_set_terminates():
    # Regression: with q = k independent rows all entering the working
    # set, the equality step becomes pure solve roundoff and an iteration
    # that waits for an exactly-zero direction before checking multipliers
    # spins until the cap.  This instance used to raise SolverError.
    gram = np.array(
        [
            [41.343466425860, -2.208078955908, 4.085756138815, -6.986309907860],
            [-2.208078955908, 29.872511037878, -5.092947367140, -5.041998070210],
            [4.085756138815, -5.092947367140, 51.255627698817, -4.394931788822],
            [-6.986309907860, -5.041998070210, -4.394931788822, 29.891632208336],
        ]
    )
    C = np.array(
        [
            [0.345709618070, 1.549449159523, 0.643510612437, 0.333276529895],
            [1.509207948272, 0.313497456979, -0.098331977955, 0.110651671964],
            [-1.567569578015, 1.306238476169, 0.260627070763, -0.249456711635],
            [-0.049156620346, -0.892980512699, 0.404302213998, 0.504589207486],
        ]
    )
    z = np.array([1.084038545261, -1.502194909427, 1.631071882604, 0.156160076728])
    point, _ = project_cone(z, gram, C)
    assert np.min(C @ point) >= -1e-9
    oracle, _ = exhaustive_qp(gram, gram @ z, C)
    d = point - oracle
    assert d @ gram @ d <= 1e-10
