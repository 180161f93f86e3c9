"""The three phases of a run: identify, search the gain, close the loop."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import lqr
from .errors import ExcitationError, NotStabilizingError
from .estimator import run_estimation
from .model import Exosystem, LtiPlant, ScenarioConfig
from .sim import StateLayout, TimeSeries, integrate

log = logging.getLogger(__name__)


def _complex_list(eig) -> list:
    return [[float(e.real), float(e.imag)] for e in eig]


@dataclass
class RunReport:
    scenario: str
    estimation: dict = field(default_factory=dict)
    synthesis: dict = field(default_factory=dict)
    tracking: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "estimation": self.estimation,
                "synthesis": self.synthesis, "tracking": self.tracking}

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "RunReport":
        with open(path) as fh:
            data = json.load(fh)
        return cls(data.get("scenario", "scenario"), data.get("estimation", {}),
                   data.get("synthesis", {}), data.get("tracking", {}))


def _path_summary(res) -> dict:
    out = {
        "s0": res.s0,
        "int_delta_sq": res.int_delta_sq,
        "ie_threshold": res.threshold,
        "ie_satisfied": res.ie_satisfied,
    }
    if res.finite is not None:
        out["sigma_used"] = res.finite.sigma_used
        out["estimate"] = res.finite.ThetaF.tolist()
        out["error_norm"] = res.error
        out["max_abs_error"] = float(np.abs(res.finite.ThetaF - res.truth).max())
    return out


def run_estimate(sc: ScenarioConfig, out_dir: Optional[Path] = None):
    """Identify the plant (and exosystem) over ``[0, t_c]``.

    Returns ``(result, fragment)``. Raises :class:`ExcitationError` when the
    excitation level is not reached, after writing the CSV so the shortfall
    can be inspected.
    """
    res = run_estimation(sc)
    frag = {"t_c": res.t_c, "alpha": sc.alpha, "sigma_config": sc.sigma,
            "abc": _path_summary(res.abc)}
    if res.d is not None:
        frag["d"] = _path_summary(res.d)
    if res.ie_satisfied:
        plant = res.estimated_plant()
        frag["A"] = plant.A.tolist()
        frag["B"] = plant.B.tolist()
        frag["C"] = plant.C.tolist()
        if res.d is not None:
            frag["D"] = res.estimated_exo().D.tolist()
    if out_dir is not None:
        path = Path(out_dir) / "estimate.csv"
        res.series.to_csv(path)
        frag["csv"] = str(path)
    if not res.ie_satisfied:
        worst = res.abc if not res.abc.ie_satisfied else res.d
        if worst.threshold is None:
            need = "any positive amount (s0 stayed at 1)"
        else:
            need = f"{worst.threshold:.6g}"
        raise ExcitationError(
            f"interval excitation not reached by t_c={res.t_c:g} s: "
            f"integral of delta^2 = {worst.int_delta_sq:.6g}, required {need}",
            required=worst.threshold, achieved=worst.int_delta_sq)
    return res, frag


def estimated_models(frag: dict, autonomous: bool = True):
    """Plant and exosystem rebuilt from an estimation fragment."""
    plant = LtiPlant(frag["A"], frag["B"], frag["C"])
    exo = Exosystem(frag["D"], autonomous) if "D" in frag else None
    return plant, exo


def run_solve(sc: ScenarioConfig, plant: Optional[LtiPlant] = None,
              exo: Optional[Exosystem] = None, K0=None, tol_grad: Optional[float] = None,
              t0: float = 0.0, out_dir: Optional[Path] = None):
    """Gradient-flow gain search on the (estimated or true) augmented system."""
    problem = sc.augmented(plant, exo)
    if K0 is None:
        K0 = sc.K0 if sc.K0 is not None else np.zeros((sc.m, 2 * sc.n))
    K0 = np.atleast_2d(np.asarray(K0, dtype=float))
    ok, eig0 = lqr.is_stabilizing(problem, K0)
    if not ok:
        raise NotStabilizingError(
            "initial gain rejected: shifted closed loop has eigenvalues with "
            f"nonnegative real part (max {eig0.real.max():.6g})", eigenvalues=eig0)
    tol = sc.tol_grad if tol_grad is None else tol_grad
    trace = lqr.gradient_flow(problem, K0, tol_grad=tol, max_time=sc.max_search_time, t0=t0)
    ref = lqr.kleinman(problem, K0)
    consts = lqr.smoothness_constants(problem, K0)
    ok_final, eig = lqr.is_stabilizing(problem, trace.K)
    frag = {
        "K0": K0.tolist(),
        "K0_spectrum": _complex_list(eig0),
        "K": trace.K.tolist(),
        "P": trace.final.P.tolist(),
        "cost": trace.final.cost,
        "grad_norm": trace.final.grad_norm,
        "converged": trace.converged,
        "iterations": len(trace.iterates) - 1,
        "rejected_steps": trace.rejected_steps,
        "search_time": trace.final.t - t0,
        "spectrum": _complex_list(eig),
        "mu": consts.mu,
        "lipschitz": consts.lipschitz,
        "K_kleinman": ref.K.tolist(),
        "P_kleinman": ref.P.tolist(),
        "kleinman_gap": float(np.abs(ref.K - trace.K).max()),
    }
    if out_dir is not None:
        path = Path(out_dir) / "search.csv"
        trace.to_csv(path)
        frag["csv"] = str(path)
    return trace, frag, problem, ref


def simulate_tracking(sc: ScenarioConfig, K, t_end: Optional[float] = None) -> TimeSeries:
    """Closed loop ``u = -K col(x - v, v)`` on the true plant from ``(x0, v0)``."""
    if sc.exo is None:
        raise ValueError("tracking needs an exosystem")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n, m = sc.n, sc.m
    A, B, C, D = sc.plant.A, sc.plant.B, sc.plant.C, sc.exo.D
    if not sc.exo.autonomous:
        raise ValueError("tracking runs with an autonomous exosystem")
    lay = StateLayout()
    lay.add("x", n)
    lay.add("v", n)
    Kx, Kv = K[:, :n], K[:, n:]

    def control(x, v):
        return -(Kx @ (x - v) + Kv @ v)

    def rhs(t, y):
        x, v = y[:n], y[n:]
        return np.concatenate([A @ x + B @ control(x, v) + C @ v, D @ v])

    y0 = np.concatenate([sc.x0, sc.v0])
    t, Y = integrate(rhs, y0, sc.t_end if t_end is None else t_end, sc.step,
                     log_every=sc.log_every)
    X, V = Y[:, :n], Y[:, n:]
    ts = TimeSeries(t)
    ts.add_block(lay.column_names("x"), X)
    ts.add_block(lay.column_names("v"), V)
    U = -(((X - V) @ Kx.T) + V @ Kv.T)
    ts.add_block([f"u{i + 1}" for i in range(m)], U)
    ts["err_norm"] = np.linalg.norm(X - V, axis=1)
    return ts


def run_track(sc: ScenarioConfig, K, out_dir: Optional[Path] = None):
    ts = simulate_tracking(sc, K)
    frag = {"K": np.atleast_2d(K).tolist(),
            "final_error_norm": float(ts["err_norm"][-1]),
            "max_error_norm_last_5s": float(ts["err_norm"][ts.t >= ts.t[-1] - 5].max()),
            "t_end": float(ts.t[-1])}
    if out_dir is not None:
        path = Path(out_dir) / "track.csv"
        ts.to_csv(path)
        frag["csv"] = str(path)
    return ts, frag


def run_pipeline(sc: ScenarioConfig, out_dir: Optional[Path] = None):
    """Identify, then search from ``K0`` on the identified model starting at
    ``t_c``, then track with the resulting gain. Returns the report and the
    intermediate objects."""
    report = RunReport(sc.name)
    est, frag = run_estimate(sc, out_dir)
    report.estimation = frag
    plant = est.estimated_plant()
    exo = est.estimated_exo(sc.exo.autonomous) if est.d is not None else None
    trace, sfrag, problem, _ = run_solve(sc, plant, exo, t0=est.t_c, out_dir=out_dir)
    true_K = lqr.kleinman(sc.augmented(), trace.iterates[0].K).K
    sfrag["K_true_model"] = true_K.tolist()
    sfrag["gain_error_vs_true_model"] = float(np.linalg.norm(trace.K - true_K))
    report.synthesis = sfrag
    tr, tfrag = run_track(sc, trace.K, out_dir)
    report.tracking = tfrag
    return report, est, trace, tr
