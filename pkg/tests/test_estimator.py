import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drem_lqt.errors import ExcitationError
from drem_lqt.estimator import (EstimatorState, back_calculate_sigma, clamp_s,
                                finite_time_estimate, finite_time_series, ie_threshold,
                                run_estimation, run_synthetic, s0_rhs, update_rhs)
from drem_lqt.model import ExcitationSpec, load_scenario
from drem_lqt.sim import integrate

THETA_STAR = np.array([[1.0, -0.5], [2.0, 0.25], [-0.7, 3.0]])


def _regressor(t):
    return np.array([np.sin(t), np.cos(2 * t), 1.0])


@pytest.fixture(scope="module")
def synthetic():
    return run_synthetic(THETA_STAR, _regressor, [0.5, 1.0, 2.0], alpha=200.0,
                         t_end=10.0, step=1e-2)


def test_update_law_fixed_point_and_sign():
    theta = np.array([[2.0]])
    assert update_rhs(theta, 1.5, 1.5 * theta, 0.3)[0, 0] == 0.0
    assert update_rhs(np.zeros((1, 1)), 0.0, np.ones((1, 1)), 1.0)[0, 0] == 0.0
    assert update_rhs(np.zeros((1, 1)), 1.0, 2 * np.ones((1, 1)), 1.0)[0, 0] == 2.0


def test_update_law_scalar_closed_form():
    # delta = 1, mixed = 2, alpha = 1 gives Theta(t) = 2 (1 - e^{-t})
    t, Y = integrate(lambda t, y: update_rhs(y, 1.0, 2.0, 1.0), np.zeros(1), 3.0, 1e-2)
    np.testing.assert_allclose(Y[:, 0], 2 * (1 - np.exp(-t)), atol=1e-8)


def test_s0_law_closed_form():
    t, Y = integrate(lambda t, y: np.array([s0_rhs(y[0], 1.0, 1.0)]), np.ones(1), 2.0, 1e-2)
    assert Y[-1, 0] == pytest.approx(np.exp(-2.0), abs=1e-8)
    assert Y[-1, 0] == pytest.approx(0.1353, abs=1e-4)
    assert s0_rhs(0.4, 0.0, 2.0) == 0.0


def test_ie_threshold_and_back_calculation():
    assert ie_threshold(0.05, 0.6) == pytest.approx(18.3258, abs=1e-4)
    assert ie_threshold(0.05, 0.6) == pytest.approx(-np.log(0.4) / 0.05, rel=1e-14)
    assert back_calculate_sigma(0.29) == pytest.approx(0.71, abs=1e-15)
    assert back_calculate_sigma(np.exp(-2.0)) == pytest.approx(0.8647, abs=1e-4)
    with pytest.raises(ExcitationError):
        back_calculate_sigma(1.0)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            ie_threshold(0.05, bad)


def test_clamp():
    assert clamp_s(1.0, 0.6) == pytest.approx(0.4)
    assert clamp_s(0.3, 0.6) == 0.3
    assert clamp_s(0.4, 0.6) == pytest.approx(0.4)
    np.testing.assert_allclose(clamp_s(np.array([1.0, 0.5, 0.1]), 0.71), [0.29, 0.29, 0.1])


def test_s0_matches_integral_of_delta_squared(synthetic):
    t, Theta, s0, ids, delta = synthetic
    assert s0[0] == 1.0 and ids[0] == 0.0
    assert np.abs(s0 - np.exp(-200.0 * ids)).max() <= 1e-6
    assert np.all(np.diff(s0) <= 0)


def test_estimation_error_is_s0_times_initial_error(synthetic):
    t, Theta, s0, ids, delta = synthetic
    err = Theta - THETA_STAR[None]
    expected = s0[:, None, None] * (-THETA_STAR)[None]
    np.testing.assert_allclose(err, expected, atol=1e-8)


def test_finite_time_estimate_exact_once_excited(synthetic):
    t, Theta, s0, ids, delta = synthetic
    sigma = 1 - s0[-1] * 1.01
    est = finite_time_estimate(EstimatorState(Theta[-1], np.zeros((3, 2))), sigma, t[-1])
    assert not est.ie_satisfied  # s0 defaults to 1 in a fresh state
    state = EstimatorState(Theta[-1], np.zeros((3, 2)), s0=float(s0[-1]))
    est = finite_time_estimate(state, sigma, t[-1])
    assert est.ie_satisfied
    np.testing.assert_allclose(est.ThetaF, THETA_STAR, atol=1e-7)
    # once s0 <= 1 - sigma the reconstruction is exact at every later time
    series = finite_time_series(Theta, np.zeros((3, 2)), s0, 1 - s0[len(s0) // 2])
    late = series[len(s0) // 2:]
    np.testing.assert_allclose(late, np.broadcast_to(THETA_STAR, late.shape), atol=1e-7)


@settings(max_examples=8, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-5, 5)))
def test_finite_time_exact_for_any_initial_estimate(theta0):
    t, Theta, s0, ids, delta = run_synthetic(THETA_STAR, _regressor, [0.5, 1.0, 2.0], 200.0,
                                             6.0, 2e-2, theta0=theta0)
    state = EstimatorState(Theta[-1], theta0, s0=float(s0[-1]))
    est = finite_time_estimate(state, t=t[-1])  # sigma back-calculated
    assert est.sigma_used == pytest.approx(1 - s0[-1])
    np.testing.assert_allclose(est.ThetaF, THETA_STAR, atol=1e-6)


def test_example1_back_calculated_sigma_recovers_plant(ex1_run):
    """With the configured sigma the IE condition fails; the achieved level
    back-calculated from s0(t_c) still gives an exact reconstruction."""
    sc, res, _ = ex1_run
    abc = res.abc
    assert 0 < abc.s0 < 1
    est = finite_time_estimate(EstimatorState(abc.estimate, abc.estimate0, s0=abc.s0))
    truth = np.hstack([sc.plant.A, sc.plant.B]).T
    rel = np.linalg.norm(est.ThetaF - truth) / np.linalg.norm(truth)
    assert rel <= 1e-2


def test_zero_excitation_reports_ie_failure():
    sc = load_scenario("example1").replace(excitation=ExcitationSpec.zero(1), t_c=1.0,
                                           t_end=1.0, x0=np.zeros(3))
    res = run_estimation(sc)
    assert res.abc.s0 == 1.0
    assert res.abc.int_delta_sq == 0.0
    assert not res.ie_satisfied
    with pytest.raises(ExcitationError):
        back_calculate_sigma(res.abc.s0)
