import time

import numpy as np
import pytest

from drem_lqt.model import Exosystem, LtiPlant, build_augmented, load_scenario

# Example 2 values as printed in the source example
K_PAPER = np.array([[1.1701266, 0.1659746, 0.0753407, 0.0886391]])
P_PAPER = np.array([
    [0.4645, -0.2166, 0.0459, 0.0170],
    [-0.2166, 0.4543, -0.0524, 0.0052],
    [0.0459, -0.0524, 0.8389, 0.0607],
    [0.0170, 0.0052, 0.0607, 0.7348],
])


def lcl_truth():
    """Example 1 plant from the component values."""
    R1, R2, L1, L2, C = 0.2, 0.5, 25e-3, 55e-3, 0.3
    A = np.array([[-R1 / L1, -1 / L1, 0.0],
                  [1 / C, 0.0, -1 / C],
                  [0.0, 1 / L2, -R2 / L2]])
    B = np.array([[1 / L1], [0.0], [0.0]])
    return A, B


@pytest.fixture(scope="session")
def ex2_plant():
    return LtiPlant([[0.0, 1.0], [-1.0, 0.0]], [[3.0], [2.0]], np.zeros((2, 2)))


@pytest.fixture(scope="session")
def ex2_exo():
    return Exosystem([[0.0, 0.8], [-0.8, -0.2]])


@pytest.fixture(scope="session")
def ex2_problem(ex2_plant, ex2_exo):
    return build_augmented(ex2_plant, ex2_exo, np.eye(2), 1.0, 0.5)


@pytest.fixture(scope="session")
def ex1_run():
    from drem_lqt.estimator import run_estimation
    sc = load_scenario("example1")
    t0 = time.perf_counter()
    res = run_estimation(sc)
    return sc, res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ex2_pipeline():
    from drem_lqt.pipeline import run_pipeline
    sc = load_scenario("example2")
    t0 = time.perf_counter()
    report, est, trace, track = run_pipeline(sc)
    return sc, report, est, trace, track, time.perf_counter() - t0


def random_tracking_problem(rng, n, m, gamma):
    """Random plant/exosystem pair with a stabilizing block gain ``[Kx, 0]``.

    ``D`` is shifted to be Hurwitz so the uncontrollable exosystem block is
    stable under any discount.
    """
    from scipy.linalg import solve_continuous_are

    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    C = 0.5 * rng.normal(size=(n, n))
    M = rng.normal(size=(n, n))
    D = M - (np.linalg.eigvals(M).real.max() + 0.3) * np.eye(n)
    prob = build_augmented(LtiPlant(A, B, C), Exosystem(D), np.eye(n), np.eye(m), gamma)
    Ash = A - 0.5 * gamma * np.eye(n)
    X = solve_continuous_are(Ash + 0.5 * np.eye(n), B, np.eye(n), np.eye(m))
    K0 = np.hstack([B.T @ X, np.zeros((m, n))])
    return prob, K0
