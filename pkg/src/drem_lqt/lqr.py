"""Discounted LQR tracking synthesis by gradient flow on the feedback gain.

For a gain ``K`` put ``A_K = calA - calB K - gamma/2 I``. The cost is
``f(K) = tr(P(K) Pi)`` with ``A_K^T P + P A_K + K^T R K + Qhat = 0`` when
``A_K`` is Hurwitz and ``+inf`` otherwise. Its gradient is
``2 (R K - calB^T P) Z`` with ``A_K Z + Z A_K^T + Pi = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import NotStabilizingError
from .model import AugmentedSystem

log = logging.getLogger(__name__)

DiscountedLqrProblem = AugmentedSystem


def solve_lyapunov(M: np.ndarray, W: np.ndarray, check_stable: bool = True) -> np.ndarray:
    """Solve ``M^T X + X M + W = 0`` through the Kronecker-vectorized system.

    Raises :class:`NotStabilizingError` if ``M`` is not Hurwitz (the solution
    would not be the positive one even if it exists).
    """
    M = np.asarray(M, dtype=float)
    W = np.asarray(W, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or W.shape != (n, n):
        raise ValueError(f"solve_lyapunov: M{M.shape}, W{W.shape}")
    if check_stable:
        eig = np.linalg.eigvals(M)
        if np.any(eig.real >= 0):
            raise NotStabilizingError("matrix is not Hurwitz", eigenvalues=eig)
    I = np.eye(n)
    # row-major vec: vec(M^T X) = (M^T kron I) vec X, vec(X M) = (I kron M^T) vec X
    L = np.kron(M.T, I) + np.kron(I, M.T)
    try:
        x = np.linalg.solve(L, -W.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NotStabilizingError(f"singular Lyapunov operator: {exc}") from exc
    X = x.reshape(n, n)
    return 0.5 * (X + X.T)


def closed_loop(problem: DiscountedLqrProblem, K: np.ndarray) -> np.ndarray:
    """Shifted closed-loop matrix ``calA - calB K - gamma/2 I``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (problem.m, problem.dim):
        raise ValueError(f"gain must be {problem.m}x{problem.dim}, got {K.shape}")
    return problem.calA - problem.calB @ K - 0.5 * problem.gamma * np.eye(problem.dim)


def is_stabilizing(problem: DiscountedLqrProblem, K: np.ndarray):
    """``(flag, eigenvalues)`` of the shifted closed loop."""
    eig = np.linalg.eigvals(closed_loop(problem, K))
    order = np.lexsort((eig.imag, eig.real))
    eig = eig[order]
    return bool(np.all(eig.real < 0)), eig


def value_matrix(problem: DiscountedLqrProblem, K: np.ndarray) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Acl = closed_loop(problem, K)
    return solve_lyapunov(Acl, K.T @ problem.R @ K + problem.Qhat)


def cost(problem: DiscountedLqrProblem, K: np.ndarray) -> float:
    """``tr(P(K) Pi)``, or ``inf`` outside the stabilizing set."""
    try:
        P = value_matrix(problem, K)
    except NotStabilizingError:
        return float("inf")
    return float(np.trace(P @ problem.Pi))


def state_covariance(problem: DiscountedLqrProblem, K: np.ndarray) -> np.ndarray:
    """``Z`` with ``A_K Z + Z A_K^T + Pi = 0``."""
    return solve_lyapunov(closed_loop(problem, K).T, problem.Pi)


def gradient(problem: DiscountedLqrProblem, K: np.ndarray,
             P: Optional[np.ndarray] = None) -> np.ndarray:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if P is None:
        P = value_matrix(problem, K)
    Z = state_covariance(problem, K)
    return 2.0 * (problem.R @ K - problem.calB.T @ P) @ Z


def are_residual(problem: DiscountedLqrProblem, P: np.ndarray) -> np.ndarray:
    """Left side of the discounted Riccati equation at ``P``."""
    A, B = problem.calA, problem.calB
    return (P @ A + A.T @ P - problem.gamma * P
            - P @ B @ np.linalg.solve(problem.R, B.T @ P) + problem.Qhat)


def cost_gap(problem: DiscountedLqrProblem, K: np.ndarray, K_star: np.ndarray) -> float:
    """``f(K) - f(K*)`` without cancellation.

    With ``K* = R^-1 calB^T P*``, ``P(K) - P*`` solves the Lyapunov equation
    of ``A_K`` with weight ``(K - K*)^T R (K - K*)``, so the gap stays
    accurate when it is far below ``eps * f``.
    """
    E = np.atleast_2d(K) - np.atleast_2d(K_star)
    X = solve_lyapunov(closed_loop(problem, K), E.T @ problem.R @ E)
    return float(np.trace(X @ problem.Pi))


def cost_change(problem: DiscountedLqrProblem, K_new: np.ndarray, K: np.ndarray,
                P: np.ndarray) -> float:
    """``f(K_new) - f(K)`` given ``P = P(K)``, free of cancellation.

    ``P(K_new) - P`` solves the Lyapunov equation of ``A_{K_new}`` with weight
    ``E^T R E + E^T G + G^T E``, ``E = K_new - K``, ``G = R K - calB^T P``.
    """
    E = np.atleast_2d(K_new) - np.atleast_2d(K)
    G = problem.R @ np.atleast_2d(K) - problem.calB.T @ P
    W = E.T @ problem.R @ E + E.T @ G + G.T @ E
    X = solve_lyapunov(closed_loop(problem, K_new), W)
    return float(np.trace(X @ problem.Pi))


@dataclass
class KleinmanResult:
    P: np.ndarray
    K: np.ndarray
    iterations: int
    gains: List[np.ndarray] = field(default_factory=list)


def kleinman(problem: DiscountedLqrProblem, K0: np.ndarray, iters: int = 50,
             tol: float = 1e-13) -> KleinmanResult:
    """Newton iteration on the discounted Riccati equation from a stabilizing ``K0``."""
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    ok, eig = is_stabilizing(problem, K)
    if not ok:
        raise NotStabilizingError("Kleinman iteration needs a stabilizing initial gain",
                                  eigenvalues=eig)
    gains = [K.copy()]
    P = value_matrix(problem, K)
    it = 0
    for it in range(1, iters + 1):
        K_next = np.linalg.solve(problem.R, problem.calB.T @ P)
        ok, eig = is_stabilizing(problem, K_next)
        if not ok:
            raise NotStabilizingError(f"iterate {it} lost stability", eigenvalues=eig)
        step = np.abs(K_next - K).max()
        K = K_next
        gains.append(K.copy())
        P = value_matrix(problem, K)
        if step <= tol * (1.0 + np.abs(K).max()):
            break
    return KleinmanResult(P, K, it, gains)


@dataclass
class GainIterate:
    t: float
    K: np.ndarray
    cost: float
    grad: np.ndarray
    P: Optional[np.ndarray] = None

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


@dataclass
class GainSearchTrace:
    iterates: List[GainIterate]
    converged: bool
    rejected_steps: int = 0

    @property
    def final(self) -> GainIterate:
        return self.iterates[-1]

    @property
    def K(self) -> np.ndarray:
        return self.final.K

    @property
    def times(self) -> np.ndarray:
        return np.array([it.t for it in self.iterates])

    @property
    def costs(self) -> np.ndarray:
        return np.array([it.cost for it in self.iterates])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([it.grad_norm for it in self.iterates])

    @property
    def gains(self) -> np.ndarray:
        return np.array([it.K for it in self.iterates])

    def to_csv(self, path=None) -> str:
        """Columns ``t, K_1..K_{m*2n}, cost, grad_norm`` (gain flattened row-major)."""
        nk = self.final.K.size
        rows = [["t"] + [f"K_{i + 1}" for i in range(nk)] + ["cost", "grad_norm"]]
        for it in self.iterates:
            rows.append([repr(float(v)) for v in
                         [it.t, *it.K.reshape(-1), it.cost, it.grad_norm]])
        text = "".join(",".join(r) + "\n" for r in rows)
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _flow_step(problem, K, h):
    def g(Kc):
        return gradient(problem, Kc)

    k1 = g(K)
    k2 = g(K - 0.5 * h * k1)
    k3 = g(K - 0.5 * h * k2)
    k4 = g(K - h * k3)
    return K - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def gradient_flow(problem: DiscountedLqrProblem, K0: np.ndarray, tol_grad: float = 1e-8,
                  max_time: float = 1e4, h0: float = 0.05, h_max: float = 1.0,
                  h_min: float = 1e-12, t0: float = 0.0,
                  max_steps: int = 200_000) -> GainSearchTrace:
    """Integrate ``dK/dt = -grad f(K)`` with RK4 until ``|grad f| <= tol_grad``.

    A step is rejected and halved if it leaves the stabilizing set or raises
    the cost (measured with :func:`cost_change`, which stays accurate far
    below the rounding level of ``f`` itself), so every accepted iterate stays in the sublevel set of ``K0``.
    After an accepted step the step size grows by 25 percent up to ``h_max``.
    """
    K = np.atleast_2d(np.asarray(K0, dtype=float)).copy()
    ok, eig = is_stabilizing(problem, K)
    if not ok:
        raise NotStabilizingError("initial gain is not stabilizing", eigenvalues=eig)
    P = value_matrix(problem, K)
    f = float(np.trace(P @ problem.Pi))
    G = gradient(problem, K, P)
    t = t0
    trace = [GainIterate(t, K.copy(), f, G, P)]
    h = h0
    rejected = 0
    while np.linalg.norm(G) > tol_grad:
        if t - t0 >= max_time or len(trace) > max_steps:
            log.warning("gradient flow stopped at t=%g with |grad|=%.3g", t, np.linalg.norm(G))
            return GainSearchTrace(trace, False, rejected)
        try:
            K_new = _flow_step(problem, K, h)
            P_new = value_matrix(problem, K_new)
            df = cost_change(problem, K_new, K, P)
        except NotStabilizingError:
            P_new, df = None, np.inf
        if P_new is None or df > 0:
            rejected += 1
            h *= 0.5
            if h < h_min:
                raise NotStabilizingError("gradient flow step size underflow")
            continue
        t += h
        K, P = K_new, P_new
        f = float(np.trace(P @ problem.Pi))
        G = gradient(problem, K, P)
        trace.append(GainIterate(t, K.copy(), f, G, P))
        h = min(h * 1.25, h_max)
    return GainSearchTrace(trace, True, rejected)


@dataclass(frozen=True)
class SmoothnessConstants:
    lipschitz: float
    mu: float
    zeta: float
    gamma_k0: float
    f_k0: float


def smoothness_constants(problem: DiscountedLqrProblem, K0: np.ndarray) -> SmoothnessConstants:
    """Lipschitz constant of the gradient and PL constant on the sublevel set of ``K0``.

    The state weight enters through ``lambda_min`` of its nonzero block,
    since ``Qhat = diag(Q, 0)`` is singular. ``n`` in the formulas is the
    augmented dimension. Diagnostics only; the search does not use them.
    """
    f0 = cost(problem, K0)
    if not np.isfinite(f0):
        raise NotStabilizingError("K0 is not stabilizing")
    nq = problem.dim // 2
    Q = problem.Qhat[:nq, :nq]
    lq = np.linalg.eigvalsh(Q).min()
    lr = np.linalg.eigvalsh(problem.R)
    lpi = np.linalg.eigvalsh(problem.Pi).min()
    nb = np.linalg.norm(problem.calB)
    na = np.linalg.norm(problem.calA)
    n = problem.dim
    gamma_k0 = f0 * nb / (lpi * lq)
    zeta = np.sqrt(n) * f0 / lpi * (gamma_k0 + (gamma_k0 ** 2 + lr.max()))
    lip = 2 * f0 / lq * (lr.max() + nb * zeta)
    mu = (lr.min() * lpi ** 2 * lq
          / (8 * f0 * (na + 0.5 * problem.gamma * n + nb ** 2 * f0 / (lpi * lr.min()))))
    return SmoothnessConstants(float(lip), float(mu), float(zeta), float(gamma_k0), float(f0))


def fit_exponential_rate(t: np.ndarray, phi: np.ndarray):
    """Least-squares line through ``log(phi)``; returns ``(slope, r_squared)``."""
    t = np.asarray(t, dtype=float)
    y = np.log(np.asarray(phi, dtype=float))
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(r2)
