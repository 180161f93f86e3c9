"""DREM parameter estimation with finite-time reconstruction.

Each scalar regression ``mixed_ij = delta * Theta*_ij`` is tracked by the
gradient law ``dTheta/dt = alpha delta (mixed - delta Theta)``. The auxiliary
scalar ``s0`` (``ds0/dt = -alpha delta^2 s0``, ``s0(0) = 1``) equals the
common contraction factor of every element error, which is what makes the
exact reconstruction ``(Theta - s Theta(0)) / (1 - s)`` possible once the
interval-excitation level is reached.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ExcitationError, ScenarioError
from .model import Exosystem, LtiPlant, ScenarioConfig
from .regressor import FilterBank, adjugate, filtered_derivative
from .sim import StateLayout, TimeSeries, integrate

log = logging.getLogger(__name__)


def update_rhs(Theta: np.ndarray, delta: float, mixed: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * delta * (mixed - delta * Theta)


def s0_rhs(s0: float, delta: float, alpha: float) -> float:
    return -alpha * delta * delta * s0


def _check_sigma(sigma: float) -> None:
    if sigma is None or not 0 < sigma < 1:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")


def clamp_s(s0, sigma: float):
    """Switching signal: ``1 - sigma`` while ``s0 > 1 - sigma``, else ``s0``."""
    _check_sigma(sigma)
    return np.minimum(s0, 1.0 - sigma)


def ie_threshold(alpha: float, sigma: float) -> float:
    """Integral of ``delta^2`` needed for interval excitation at level ``sigma``."""
    _check_sigma(sigma)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return -np.log1p(-sigma) / alpha


def back_calculate_sigma(s0_at_tc: float) -> float:
    """Largest excitation level met at ``t_c``: ``1 - s0(t_c)``."""
    if not s0_at_tc < 1.0:
        raise ExcitationError("no excitation occurred (s0 = 1); cannot reconstruct",
                              achieved=0.0)
    if s0_at_tc < 0:
        raise ValueError(f"s0 must be nonnegative, got {s0_at_tc}")
    return 1.0 - s0_at_tc


@dataclass
class EstimatorState:
    Theta: np.ndarray
    Theta0: np.ndarray
    s0: float = 1.0
    alpha: float = 0.05
    sigma: Optional[float] = None

    def __post_init__(self):
        self.Theta0 = np.array(self.Theta0, dtype=float)
        self.Theta0.setflags(write=False)


@dataclass(frozen=True)
class FiniteTimeEstimate:
    ThetaF: np.ndarray
    t_c: float
    sigma_used: float
    ie_satisfied: bool


def finite_time_estimate(state: EstimatorState, sigma: Optional[float] = None,
                         t: float = float("nan")) -> FiniteTimeEstimate:
    """Reconstruct ``Theta*`` as ``(Theta - s Theta0) / (1 - s)``.

    Without ``sigma`` (argument or ``state.sigma``) the level is
    back-calculated from ``s0``; this raises :class:`ExcitationError` when no
    excitation has occurred.
    """
    sigma = state.sigma if sigma is None else sigma
    if sigma is None:
        sigma = back_calculate_sigma(state.s0)
    s = float(clamp_s(state.s0, sigma))
    ThetaF = (state.Theta - s * state.Theta0) / (1.0 - s)
    ok = bool(state.s0 <= 1.0 - sigma)
    return FiniteTimeEstimate(ThetaF, t, float(sigma), ok)


def finite_time_series(Theta: np.ndarray, Theta0: np.ndarray, s0: np.ndarray,
                       sigma: float) -> np.ndarray:
    """Vectorized reconstruction over a logged trajectory ``Theta[t, i, j]``."""
    s = clamp_s(np.asarray(s0), sigma)[:, None, None]
    return (Theta - s * Theta0[None]) / (1.0 - s)


class DremPath:
    """One regression problem inside the coupled state: extension bank,
    estimate, auxiliary scalar and running integral of ``delta^2``."""

    def __init__(self, layout: StateLayout, tag: str, bank: FilterBank, n_out: int,
                 alpha: float, estimate: str):
        self.tag = tag
        self.bank = bank
        self.k = bank.k
        self.n_out = n_out
        self.alpha = alpha
        self.estimate = estimate
        self.F, self.H = f"F{tag}", f"H{tag}"
        self.est, self.s0, self.ids = estimate, f"s0{tag}", f"int_delta_sq{tag}"
        layout.add(self.F, (self.k, self.k))
        layout.add(self.H, (self.k, n_out))
        layout.add(self.est, (self.k, n_out))
        layout.add(self.s0, ())
        layout.add(self.ids, ())
        self.layout = layout

    def init(self, y: np.ndarray, Theta0: np.ndarray) -> None:
        self.layout.set(y, self.est, Theta0)
        self.layout.set(y, self.s0, 1.0)

    def rhs(self, y: np.ndarray, dy: np.ndarray, z: np.ndarray, reg: np.ndarray) -> None:
        lay = self.layout
        F = lay.get(y, self.F)
        H = lay.get(y, self.H)
        dF, dH = self.bank.extension_rhs(F, H, z, reg)
        delta = np.linalg.det(F)
        mixed = adjugate(F) @ H
        lay.set(dy, self.F, dF)
        lay.set(dy, self.H, dH)
        lay.set(dy, self.est, update_rhs(lay.get(y, self.est), delta, mixed, self.alpha))
        lay.set(dy, self.s0, s0_rhs(lay.get(y, self.s0), delta, self.alpha))
        lay.set(dy, self.ids, delta * delta)


@dataclass
class PathResult:
    """Outcome of one regression path at ``t_c``."""

    estimate: np.ndarray
    estimate0: np.ndarray
    truth: np.ndarray
    s0: float
    int_delta_sq: float
    finite: Optional[FiniteTimeEstimate]
    threshold: Optional[float]

    @property
    def ie_satisfied(self) -> bool:
        return self.finite is not None and self.finite.ie_satisfied

    @property
    def error(self) -> float:
        """Frobenius error of the finite-time estimate (nan if none)."""
        if self.finite is None:
            return float("nan")
        return float(np.linalg.norm(self.finite.ThetaF - self.truth))


@dataclass
class EstimationResult:
    series: TimeSeries
    abc: PathResult
    d: Optional[PathResult]
    t_c: float
    n: int
    m: int
    layout: StateLayout = field(repr=False)

    @property
    def ie_satisfied(self) -> bool:
        return self.abc.ie_satisfied and (self.d is None or self.d.ie_satisfied)

    def estimated_plant(self) -> LtiPlant:
        P = self.abc.finite.ThetaF
        n, m = self.n, self.m
        A = P[:n].T
        B = P[n:n + m].T
        C = P[n + m:].T if P.shape[0] > n + m else np.zeros((n, n))
        return LtiPlant(A, B, C)

    def estimated_exo(self, autonomous: bool = True) -> Exosystem:
        if self.d is None:
            raise ScenarioError("scenario has no exosystem to estimate")
        return Exosystem(self.d.finite.ThetaF.T, autonomous)


def _path_result(series: TimeSeries, Y: np.ndarray, lay: StateLayout, path: DremPath,
                 truth: np.ndarray, Theta0: np.ndarray, sigma: Optional[float],
                 t_c: float, prefix: str, err_prefix: str, tag: str) -> PathResult:
    Fs = lay.get(Y, path.F)
    est = lay.get(Y, path.est)
    s0 = lay.get(Y, path.s0)
    ids = lay.get(Y, path.ids)
    series[f"delta{tag}"] = np.linalg.det(Fs)
    series[f"int_delta_sq{tag}"] = ids
    series[f"s0{tag}"] = s0
    names = lay.column_names(path.est, prefix)
    series.add_block(names, est)
    series.add_block([f"{err_prefix}_{i + 1}_{j + 1}" for i in range(path.k)
                      for j in range(path.n_out)], est - truth[None])

    s0_c = float(s0[-1])
    finite = None
    threshold = None
    if sigma is None and s0_c < 1.0:
        sigma_used = back_calculate_sigma(s0_c)
    else:
        sigma_used = sigma
    if sigma_used is not None:
        threshold = ie_threshold(path.alpha, sigma_used)
        state = EstimatorState(est[-1], Theta0, s0_c, path.alpha, sigma_used)
        finite = finite_time_estimate(state, t=t_c)
        series[f"sigma{tag}"] = np.full(len(series), sigma_used)
        Fser = finite_time_series(est, Theta0, s0, sigma_used)
        series.add_block([f"{prefix}F_{i + 1}_{j + 1}" for i in range(path.k)
                          for j in range(path.n_out)], Fser)
    return PathResult(est[-1].copy(), Theta0, truth, s0_c, float(ids[-1]), finite, threshold)


def run_estimation(sc: ScenarioConfig, t_c: Optional[float] = None,
                   psi0: Optional[np.ndarray] = None,
                   theta0: Optional[np.ndarray] = None) -> EstimationResult:
    """Simulate plant, exosystem and both DREM paths over ``[0, t_c]``.

    The plant is driven by the scenario's ``u`` excitation. The (A, B, C)
    path regresses ``psi_y`` on ``col(psi_x, psi_u, psi_v)``; the D path
    regresses the filtered derivative of ``v`` on the filtered ``w``. Does
    not raise on missing excitation: inspect ``result.ie_satisfied``.
    """
    t_c = sc.t_c if t_c is None else t_c
    n, m = sc.n, sc.m
    plant, exo = sc.plant, sc.exo
    has_exo = exo is not None
    k = sc.k
    lam = sc.filters.lam

    lay = StateLayout()
    lay.add("x", n)
    if has_exo:
        lay.add("v", n)
    lay.add("psi_x", n)
    lay.add("psi_u", m)
    if has_exo:
        lay.add("psi_v", n)
    abc = DremPath(lay, "", FilterBank(lam, sc.filters.bank(k)), n, sc.alpha, "Psi")
    dpath = None
    if has_exo:
        q = exo.q
        lay.add("v_l", n)
        if not exo.autonomous:
            lay.add("z", q)
        dpath = DremPath(lay, "_D", FilterBank(lam, sc.filters.bank_d(q)), n, sc.alpha, "Theta")

    A, B, C = plant.A, plant.B, plant.C
    x0 = sc.x0
    v0 = sc.v0
    u_fn: Callable = sc.excitation
    w_fn = None if (not has_exo or exo.autonomous) else sc.w_excitation
    sl = {name: lay.slice(name) for name in lay.names}

    def rhs(t, y):
        dy = np.empty_like(y)
        x = y[sl["x"]]
        u = u_fn(t)
        psi_x = y[sl["psi_x"]]
        if has_exo:
            v = y[sl["v"]]
            dy[sl["x"]] = A @ x + B @ u + C @ v
            w = v if w_fn is None else w_fn(t)
            dy[sl["v"]] = exo.D @ w
            psi_v = y[sl["psi_v"]]
            dy[sl["psi_v"]] = -lam * psi_v + v
            z_abc = np.concatenate([psi_x, y[sl["psi_u"]], psi_v])
        else:
            dy[sl["x"]] = A @ x + B @ u
            z_abc = np.concatenate([psi_x, y[sl["psi_u"]]])
        dy[sl["psi_x"]] = -lam * psi_x + x
        dy[sl["psi_u"]] = -lam * y[sl["psi_u"]] + u
        psi_y = filtered_derivative(x, x0, psi_x, lam, t)
        abc.rhs(y, dy, z_abc, psi_y)
        if has_exo:
            v_l = y[sl["v_l"]]
            dy[sl["v_l"]] = -lam * v_l + v
            if w_fn is None:
                z_d = v_l
            else:
                z_d = y[sl["z"]]
                dy[sl["z"]] = -lam * z_d + w
            y_d = filtered_derivative(v, v0, v_l, lam, t)
            dpath.rhs(y, dy, z_d, y_d)
        return dy

    Psi0 = np.zeros((k, n)) if psi0 is None else np.asarray(psi0, dtype=float).reshape(k, n)
    y0 = lay.zeros()
    lay.set(y0, "x", x0)
    if has_exo:
        lay.set(y0, "v", v0)
    abc.init(y0, Psi0)
    Theta0 = None
    if has_exo:
        Theta0 = (np.zeros((exo.q, n)) if theta0 is None
                  else np.asarray(theta0, dtype=float).reshape(exo.q, n))
        dpath.init(y0, Theta0)

    log.info("estimating %s over [0, %g] s with step %g", sc.name, t_c, sc.step)
    t, Y = integrate(rhs, y0, t_c, sc.step, log_every=sc.log_every)

    series = TimeSeries(t)
    series.add_block(lay.column_names("x"), lay.get(Y, "x"))
    if has_exo:
        series.add_block(lay.column_names("v"), lay.get(Y, "v"))
    series.add_block([f"u{i + 1}" for i in range(m)], np.array([u_fn(ti) for ti in t]))

    truth_abc = np.vstack([A.T, B.T] + ([C.T] if has_exo else []))
    abc_res = _path_result(series, Y, lay, abc, truth_abc, Psi0, sc.sigma, t_c,
                           "Psi", "err", "")
    d_res = None
    if has_exo:
        d_res = _path_result(series, Y, lay, dpath, exo.D.T.copy(), Theta0, sc.sigma, t_c,
                             "Theta", "errD", "_D")
    return EstimationResult(series, abc_res, d_res, float(t[-1]), n, m, lay)


def run_synthetic(theta_star: np.ndarray, regressor: Callable[[float], np.ndarray],
                  lambdas, alpha: float, t_end: float, step: float,
                  theta0: Optional[np.ndarray] = None, log_every: int = 1):
    """Run the estimator on a synthetic regression ``y = theta_star^T z(t)``.

    Returns ``(t, Theta[t], s0[t], int_delta_sq[t], delta[t])``. Useful for
    checking the estimator in isolation from any plant.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    k, n = theta_star.shape
    bank = FilterBank(1.0, lambdas)
    lay = StateLayout()
    path = DremPath(lay, "", bank, n, alpha, "Theta")
    Theta0 = np.zeros((k, n)) if theta0 is None else np.asarray(theta0, dtype=float)

    def rhs(t, y):
        dy = np.empty_like(y)
        z = regressor(t)
        path.rhs(y, dy, z, theta_star.T @ z)
        return dy

    y0 = lay.zeros()
    path.init(y0, Theta0)
    t, Y = integrate(rhs, y0, t_end, step, log_every=log_every)
    return (t, lay.get(Y, "Theta"), lay.get(Y, "s0"), lay.get(Y, "int_delta_sq"),
            np.linalg.det(lay.get(Y, "F")))
