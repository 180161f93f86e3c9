import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm, solve_continuous_are, solve_continuous_lyapunov

from conftest import random_tracking_problem
from drem_lqt import lqr
from drem_lqt.errors import NotStabilizingError
from drem_lqt.model import AugmentedSystem


def scalar_problem(a=0.0, b=1.0, q=1.0, r=1.0, gamma=0.0):
    """One-state problem: ``f(k) = (k^2 r + q) / (2 (b k + gamma/2 - a))``."""
    one = lambda v: np.array([[float(v)]])  # noqa: E731
    return AugmentedSystem(one(a), one(b), one(q), one(r), gamma, one(1.0))


def test_scalar_value_and_gradient():
    prob = scalar_problem()
    assert lqr.value_matrix(prob, [[1.0]])[0, 0] == pytest.approx(1.0)
    assert lqr.value_matrix(prob, [[2.0]])[0, 0] == pytest.approx(1.25)
    assert lqr.gradient(prob, [[2.0]])[0, 0] == pytest.approx(0.375)
    # analytic derivative of (k^2 + 1) / (2k) at k = 2
    assert 0.5 - 1 / (2 * 2.0 ** 2) == pytest.approx(0.375)
    assert lqr.gradient(prob, [[1.0]])[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_scalar_kleinman_sequence():
    res = lqr.kleinman(scalar_problem(), [[2.0]])
    seq = [g[0, 0] for g in res.gains]
    np.testing.assert_allclose(seq[:4], [2.0, 1.25, 1.025, 1.000305], atol=1e-6)
    assert res.K[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_scalar_gradient_flow_converges_to_optimum():
    tr = lqr.gradient_flow(scalar_problem(), [[3.0]], tol_grad=1e-10)
    assert tr.converged
    assert tr.K[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(tr.costs) <= 1e-15)


def test_unstable_gain_has_infinite_cost():
    prob = scalar_problem(a=1.0)
    assert lqr.cost(prob, [[0.5]]) == float("inf")
    ok, eig = lqr.is_stabilizing(prob, [[0.5]])
    assert not ok and eig[0].real == pytest.approx(0.5)
    assert lqr.is_stabilizing(prob, [[1.5]])[0]
    # discount makes the boundary gain stabilizing
    assert lqr.is_stabilizing(scalar_problem(a=1.0, gamma=0.2), [[1.0]])[0]
    with pytest.raises(NotStabilizingError):
        lqr.gradient_flow(prob, [[0.5]])
    with pytest.raises(NotStabilizingError):
        lqr.kleinman(prob, [[0.5]])


def test_lyapunov_diagonal_case():
    M = np.diag([-1.0, -2.0, -0.5])
    X = lqr.solve_lyapunov(M, np.eye(3))
    np.testing.assert_allclose(X, np.diag([0.5, 0.25, 1.0]), atol=1e-15)
    with pytest.raises(NotStabilizingError):
        lqr.solve_lyapunov(np.diag([-1.0, 0.1]), np.eye(2))


def test_lyapunov_against_scipy_and_quadrature():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(4, 4))
    M -= (np.linalg.eigvals(M).real.max() + 0.5) * np.eye(4)
    W = rng.normal(size=(4, 4))
    W = W @ W.T
    X = lqr.solve_lyapunov(M, W)
    np.testing.assert_allclose(X, solve_continuous_lyapunov(M.T, -W), atol=1e-10)
    integral, _ = quad_vec(lambda s: expm(M.T * s) @ W @ expm(M * s), 0, 80, epsabs=1e-10)
    np.testing.assert_allclose(X, integral, atol=1e-6)


def test_value_matrix_of_example2_zero_gain(ex2_problem):
    P = lqr.value_matrix(ex2_problem, np.zeros((1, 4)))
    np.testing.assert_allclose(P, P.T)
    assert np.all(np.linalg.eigvalsh(P) >= -1e-12)


def test_gradient_matches_finite_differences(ex2_problem):
    rng = np.random.default_rng(4)
    K = np.array([[1.0, 0.2, 0.1, 0.1]]) + 0.1 * rng.normal(size=(1, 4))
    assert lqr.is_stabilizing(ex2_problem, K)[0]
    G = lqr.gradient(ex2_problem, K)
    h = 1e-6
    fd = np.zeros_like(K)
    for j in range(K.shape[1]):
        E = np.zeros_like(K)
        E[0, j] = h
        fd[0, j] = (lqr.cost(ex2_problem, K + E) - lqr.cost(ex2_problem, K - E)) / (2 * h)
    np.testing.assert_allclose(G, fd, rtol=1e-5, atol=1e-7)


def test_cost_change_and_gap_agree_with_direct_differences(ex2_problem):
    K = np.array([[0.8, 0.1, 0.0, 0.05]])
    K2 = K + np.array([[0.05, -0.02, 0.01, 0.0]])
    P = lqr.value_matrix(ex2_problem, K)
    direct = lqr.cost(ex2_problem, K2) - lqr.cost(ex2_problem, K)
    assert lqr.cost_change(ex2_problem, K2, K, P) == pytest.approx(direct, rel=1e-8)
    ref = lqr.kleinman(ex2_problem, np.zeros((1, 4)))
    gap = lqr.cost(ex2_problem, K) - lqr.cost(ex2_problem, ref.K)
    assert lqr.cost_gap(ex2_problem, K, ref.K) == pytest.approx(gap, rel=1e-8)
    assert lqr.cost_gap(ex2_problem, ref.K, ref.K) == 0.0


def test_stationary_point_solves_riccati(ex2_problem):
    tr = lqr.gradient_flow(ex2_problem, np.zeros((1, 4)), tol_grad=1e-9)
    assert tr.converged
    P = tr.final.P
    assert np.linalg.norm(lqr.are_residual(ex2_problem, P)) < 1e-7
    np.testing.assert_allclose(tr.K, ex2_problem.calB.T @ P, atol=1e-8)
    # nonincreasing up to rounding of f itself
    assert np.all(np.diff(tr.costs) <= 4 * np.finfo(float).eps * tr.costs[0])


def test_kleinman_is_idempotent_at_optimum(ex2_problem):
    res = lqr.kleinman(ex2_problem, np.zeros((1, 4)))
    again = lqr.kleinman(ex2_problem, res.K)
    assert again.iterations == 1
    np.testing.assert_allclose(again.K, res.K, atol=1e-13)


def test_tolerance_insensitivity(ex2_problem):
    coarse = lqr.gradient_flow(ex2_problem, np.zeros((1, 4)), tol_grad=1e-4)
    fine = lqr.gradient_flow(ex2_problem, np.zeros((1, 4)), tol_grad=1e-8)
    assert np.abs(coarse.K - fine.K).max() <= 1e-3
    assert len(coarse.iterates) < len(fine.iterates)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_flow_matches_riccati_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, n + 1))
    gamma = float(rng.uniform(0.0, 1.0))
    prob, K0 = random_tracking_problem(rng, n, m, gamma)
    assert lqr.is_stabilizing(prob, K0)[0]
    tol = 1e-8
    tr = lqr.gradient_flow(prob, K0, tol_grad=tol)
    assert tr.converged
    shifted = prob.calA - 0.5 * prob.gamma * np.eye(prob.dim)
    P = solve_continuous_are(shifted, prob.calB, prob.Qhat, prob.R)
    K_star = np.linalg.solve(prob.R, prob.calB.T @ P)
    assert np.abs(tr.K - K_star).max() <= 10 * tol


def test_pl_and_lipschitz_bounds_on_samples(ex2_problem):
    K0 = np.zeros((1, 4))
    c = lqr.smoothness_constants(ex2_problem, K0)
    assert c.lipschitz > 0 and c.mu > 0
    ref = lqr.kleinman(ex2_problem, K0)
    rng = np.random.default_rng(7)
    samples = []
    while len(samples) < 40:
        K = ref.K + rng.normal(scale=0.4, size=(1, 4))
        if lqr.cost(ex2_problem, K) <= c.f_k0:
            samples.append(K)
    grads = [lqr.gradient(ex2_problem, K) for K in samples]
    for K, G in zip(samples, grads):
        gap = lqr.cost_gap(ex2_problem, K, ref.K)
        assert np.sum(G ** 2) >= c.mu * gap
    for (K1, G1), (K2, G2) in zip(zip(samples, grads), zip(samples[1:], grads[1:])):
        assert np.linalg.norm(G1 - G2) <= c.lipschitz * np.linalg.norm(K1 - K2)


def test_exponential_rate_fit():
    t = np.linspace(0, 5, 30)
    slope, r2 = lqr.fit_exponential_rate(t, 3 * np.exp(-0.7 * t))
    assert slope == pytest.approx(-0.7)
    assert r2 == pytest.approx(1.0)


def test_trace_csv(ex2_problem):
    tr = lqr.gradient_flow(ex2_problem, np.zeros((1, 4)), tol_grad=1e-4)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,K_1,K_2,K_3,K_4,cost,grad_norm"
    assert len(lines) == len(tr.iterates) + 1
