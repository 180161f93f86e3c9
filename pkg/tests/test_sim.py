import numpy as np
import pytest

from drem_lqt.errors import IntegrationError
from drem_lqt.model import load_scenario
from drem_lqt.sim import StateLayout, TimeSeries, integrate, rk4_step


def test_rk4_zero_field_keeps_state():
    y = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(rk4_step(lambda t, s: np.zeros_like(s), 0.0, y, 0.1), y)


def test_rk4_exponential_decay():
    y = rk4_step(lambda t, s: -s, 0.0, np.array([1.0]), 0.1)
    assert y[0] == pytest.approx(0.9048375, abs=5e-8)
    assert abs(y[0] - np.exp(-0.1)) < 1e-7


def test_rk4_exact_for_cubic_time_polynomials():
    assert rk4_step(lambda t, s: np.ones(1), 0.0, np.zeros(1), 0.5)[0] == 0.5
    # d/dt y = 3 t^2 integrates exactly
    y = rk4_step(lambda t, s: np.array([3 * t * t]), 1.0, np.zeros(1), 0.5)
    assert y[0] == pytest.approx(1.5 ** 3 - 1.0, abs=1e-15)


def test_rk4_order_at_least_3_5():
    errs = []
    for h in (0.1, 0.05, 0.025):
        t, Y = integrate(lambda t, s: -s, np.array([1.0]), 1.0, h)
        errs.append(abs(Y[-1, 0] - np.exp(-1.0)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_is_reported_with_time():
    with pytest.raises(IntegrationError) as info:
        integrate(lambda t, s: s * s, np.array([1.0]), 2.0, 0.01)
    assert 0.9 < info.value.t < 2.0


def test_constant_trajectory_for_zero_dynamics():
    t, Y = integrate(lambda t, s: np.zeros_like(s), np.array([2.0, 3.0]), 10 * 0.1, 0.1)
    assert len(t) == 11
    np.testing.assert_array_equal(Y, np.tile([2.0, 3.0], (11, 1)))


def test_integrate_is_bitwise_deterministic():
    f = lambda t, s: np.array([s[1], -np.sin(s[0]) + np.cos(3 * t)])  # noqa: E731
    a = integrate(f, np.array([0.1, 0.0]), 5.0, 1e-2)[1]
    b = integrate(f, np.array([0.1, 0.0]), 5.0, 1e-2)[1]
    assert a.tobytes() == b.tobytes()


def test_log_decimation_keeps_endpoints():
    t, Y = integrate(lambda t, s: -s, np.array([1.0]), 1.0, 0.01, log_every=30)
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0)
    assert len(t) == 1 + 3 + 1


def test_step_must_divide_horizon():
    with pytest.raises(ValueError):
        integrate(lambda t, s: s, np.zeros(1), 1.0, 0.3)


def test_example2_exosystem_is_bounded_and_decaying():
    sc = load_scenario("example2")
    D = sc.exo.D
    assert np.all(np.linalg.eigvals(D).real < 0)
    t, V = integrate(lambda t, v: D @ v, sc.v0, 25.0, 1e-3, log_every=100)
    norms = np.linalg.norm(V, axis=1)
    assert norms.max() <= 1.5 * norms[0]
    # envelope decays like exp(-0.1 t)
    late = norms[t >= 20].max()
    assert late < norms[t <= 5].max() * np.exp(-0.1 * 12)


def test_example1_plant_reaches_bounded_periodic_steady_state():
    sc = load_scenario("example1")
    A, B = sc.plant.A, sc.plant.B
    assert np.all(np.linalg.eigvals(A).real < 0)

    def f(t, x):
        return A @ x + B[:, 0] * 100 * np.sin(10 * t)

    period = 2 * np.pi / 10
    t, X = integrate(f, np.zeros(3), 25.0, 1e-3, log_every=1)
    last = X[t >= 25.0 - period]
    prev = X[(t >= 25.0 - 2 * period) & (t < 25.0 - period)]
    assert np.all(np.isfinite(X))
    n = min(len(last), len(prev))
    np.testing.assert_allclose(last[:n], prev[:n], atol=1e-2 * np.abs(last).max())


def test_state_layout_partitions_the_vector():
    lay = StateLayout()
    lay.add("x", 3)
    lay.add("F", (2, 2))
    lay.add("s0", ())
    assert lay.size == 8
    y = np.arange(8.0)
    np.testing.assert_array_equal(lay.get(y, "F"), [[3, 4], [5, 6]])
    assert lay.get(y, "s0") == 7.0
    covered = sorted(i for n in lay.names for i in range(*lay.slice(n).indices(lay.size)))
    assert covered == list(range(8))
    assert lay.column_names("F", "Psi") == ["Psi_1_1", "Psi_1_2", "Psi_2_1", "Psi_2_2"]
    assert lay.column_names("x") == ["x1", "x2", "x3"]
    assert lay.column_names("s0") == ["s0"]


def test_time_series_csv_round_trip(tmp_path):
    ts = TimeSeries(np.array([0.0, 0.5, 1.0]), {"x1": [1.0, 2.0, 1 / 3], "delta": [0, 0, 0]})
    text = ts.to_csv(tmp_path / "a.csv")
    assert text.splitlines()[0] == "t,x1,delta"
    back = TimeSeries.from_csv(tmp_path / "a.csv")
    assert back["x1"][2] == 1 / 3
    with pytest.raises(ValueError):
        TimeSeries(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        ts["bad"] = [1.0]
