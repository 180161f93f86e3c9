"""Command line entry point: ``drem-lqt {estimate,solve,track,pipeline,kleinman}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import lqr
from .errors import ExcitationError, IntegrationError, NotStabilizingError, ScenarioError
from .model import load_scenario
from .pipeline import (RunReport, estimated_models, run_estimate, run_pipeline, run_solve,
                       run_track)

log = logging.getLogger("drem_lqt")

EXIT_OK = 0
EXIT_SCENARIO = 1
EXIT_USAGE = 2
EXIT_EXCITATION = 3
EXIT_INIT_REJECTED = 4
EXIT_BLOWUP = 5


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="scenario JSON file, or a bundled name (example1, example2)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--step", type=float, help="integration step [s]")
    common.add_argument("--tc", type=float, help="estimation horizon t_c [s]")
    common.add_argument("--sigma", type=float,
                        help="excitation level in (0, 1); 0 back-calculates it from s0(t_c)")
    common.add_argument("--alpha", type=float, help="estimator learning rate")
    common.add_argument("--gamma", type=float, help="discount factor [1/s]")
    common.add_argument("--tol", type=float, help="gradient-norm stopping threshold")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="drem-lqt",
        description="Identify a plant and exosystem with finite-time DREM, then search "
                    "the discounted LQR tracking gain by gradient flow.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="identify A, B, C, D in finite time")
    s = sub.add_parser("solve", parents=[common], help="gradient-flow gain search")
    s.add_argument("--estimates", help="report.json whose estimation section supplies the model "
                                       "(default: the scenario's true matrices)")
    t = sub.add_parser("track", parents=[common], help="closed-loop tracking rollout")
    t.add_argument("--report", help="report.json whose synthesis section supplies K "
                                    "(default: search on the true matrices first)")
    sub.add_parser("pipeline", parents=[common], help="estimate, solve and track")
    sub.add_parser("kleinman", parents=[common], help="Kleinman iteration on the true matrices")
    return p


def _apply_overrides(sc, args):
    changes = {}
    if args.step is not None:
        changes["step"] = args.step
    if args.tc is not None:
        changes["t_c"] = args.tc
        if args.tc > sc.t_end:
            changes["t_end"] = args.tc
    if args.sigma is not None:
        changes["sigma"] = None if args.sigma == 0 else args.sigma
    if args.alpha is not None:
        changes["alpha"] = args.alpha
    if args.gamma is not None:
        changes["gamma"] = args.gamma
    if args.tol is not None:
        changes["tol_grad"] = args.tol
    return sc.replace(**changes) if changes else sc


def _load_report(out: Path, scenario: str) -> RunReport:
    path = out / "report.json"
    if path.exists():
        rep = RunReport.read(path)
        rep.scenario = scenario
        return rep
    return RunReport(scenario)


def _estimate(sc, out, plots, report):
    res, frag = run_estimate(sc, out)
    report.estimation = frag
    if plots:
        from .plotting import plot_estimation
        frag["figure"] = plot_estimation(res.series, out)
    return res


def _solve(sc, out, plots, report, plant=None, exo=None, t0=0.0):
    trace, frag, problem, ref = run_solve(sc, plant, exo, t0=t0, out_dir=out)
    report.synthesis.update(frag)
    if plots:
        from .plotting import plot_search
        gaps = np.array([lqr.cost_gap(problem, it.K, ref.K) for it in trace.iterates])
        frag["figure"] = plot_search(trace, out, ref.K, gaps)
        report.synthesis["figure"] = frag["figure"]
    return trace


def _track(sc, out, plots, report, K):
    ts, frag = run_track(sc, K, out)
    report.tracking = frag
    if plots:
        from .plotting import plot_tracking
        frag["figure"] = plot_tracking(ts, out)
    return ts


def _run(args) -> int:
    sc = _apply_overrides(load_scenario(args.config), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plots = not args.no_plots
    report = _load_report(out, sc.name)

    try:
        if args.command == "estimate":
            _estimate(sc, out, plots, report)
        elif args.command == "solve":
            plant = exo = None
            if args.estimates:
                est = RunReport.read(args.estimates).estimation
                if "A" not in est:
                    raise ScenarioError(f"{args.estimates} has no successful estimation")
                plant, exo = estimated_models(est)
            _solve(sc, out, plots, report, plant, exo)
        elif args.command == "track":
            if args.report:
                K = RunReport.read(args.report).synthesis.get("K")
                if K is None:
                    raise ScenarioError(f"{args.report} has no synthesized gain")
            else:
                K = _solve(sc, out, plots, report).K
            _track(sc, out, plots, report, np.array(K))
        elif args.command == "pipeline":
            rep, est, trace, tr = run_pipeline(sc, out)
            report = rep
            if plots:
                from .plotting import plot_estimation, plot_search, plot_tracking
                problem = sc.augmented(est.estimated_plant(), est.estimated_exo())
                ref = lqr.kleinman(problem, trace.iterates[0].K)
                gaps = np.array([lqr.cost_gap(problem, it.K, ref.K) for it in trace.iterates])
                report.estimation["figure"] = plot_estimation(est.series, out)
                report.synthesis["figure"] = plot_search(trace, out, ref.K, gaps)
                report.tracking["figure"] = plot_tracking(tr, out)
        elif args.command == "kleinman":
            problem = sc.augmented()
            K0 = sc.K0 if sc.K0 is not None else np.zeros((sc.m, 2 * sc.n))
            res = lqr.kleinman(problem, K0)
            ok, eig = lqr.is_stabilizing(problem, res.K)
            report.synthesis.update({
                "K_kleinman": res.K.tolist(), "P_kleinman": res.P.tolist(),
                "kleinman_iterations": res.iterations,
                "are_residual": float(np.linalg.norm(lqr.are_residual(problem, res.P))),
                "kleinman_spectrum": [[float(e.real), float(e.imag)] for e in eig],
            })
            print(json.dumps({"K": res.K.tolist(), "P": res.P.tolist()}, indent=2))
    except ExcitationError as exc:
        report.estimation = {"ie_satisfied": False, "required": exc.required,
                             "achieved": exc.achieved, "message": str(exc)}
        raise
    finally:
        report.write(out / "report.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except ExcitationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXCITATION
    except NotStabilizingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.eigenvalues is not None:
            spec = ", ".join(f"{e.real:+.6g}{e.imag:+.6g}j" for e in exc.eigenvalues)
            print(f"spectrum of calA - calB K0 - gamma/2 I: {spec}", file=sys.stderr)
        return EXIT_INIT_REJECTED
    except IntegrationError as exc:
        print(f"error: integration blew up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
