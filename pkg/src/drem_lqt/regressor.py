"""Derivative-free regression filters, regressor extension and adjugate mixing.

A linear regression ``y = Theta*^T z`` (``Theta*`` k x n) is extended with a
bank of k distinct first-order filters ``1/(p + lambda_i)`` into the square
system ``H_y = F Theta*``. Multiplying by ``adj(F)`` gives the decoupled
scalar regressions ``mixed_ij = delta * Theta*_ij`` with ``delta = det(F)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ScenarioError

# cofactor expansion up to this size, SVD formula above it
COFACTOR_MAX_K = 6


def filtered_derivative(v_now, v0, v_l_now, lambda0: float, t: float) -> np.ndarray:
    """``1/(p + lambda0)`` applied to ``dv/dt``, from ``v`` and its filtered copy.

    ``v_l`` must be ``v`` filtered by ``1/(p + lambda0)`` from a zero state.
    Integration by parts gives ``v(t) - exp(-lambda0 t) v(0) - lambda0 v_l(t)``.
    """
    return (np.asarray(v_now, dtype=float) - np.exp(-lambda0 * t) * np.asarray(v0, dtype=float)
            - lambda0 * np.asarray(v_l_now, dtype=float))


def assemble_regressand(lam: float, psi_x, x, x0=None, t: float = 0.0) -> np.ndarray:
    """Filtered state derivative ``psi_y = x - lam * psi_x`` (minus ``exp(-lam t) x0``).

    With ``x0`` given, the initial-condition transient is removed so that
    ``psi_y = A psi_x + B psi_u + C psi_v`` holds exactly for any ``x(0)``;
    for ``x(0) = 0`` both forms agree.
    """
    if x0 is None:
        return np.asarray(x, dtype=float) - lam * np.asarray(psi_x, dtype=float)
    return filtered_derivative(x, x0, psi_x, lam, t)


@dataclass(frozen=True)
class FilterBank:
    """Derivative filter constant ``lambda0`` and extension constants ``lambdas``."""

    lambda0: float
    lambdas: np.ndarray

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if not self.lambda0 > 0:
            raise ScenarioError(f"lambda0 must be positive, got {self.lambda0}")
        if np.any(lams <= 0) or len(np.unique(lams)) != lams.size:
            raise ScenarioError(f"extension constants must be positive and distinct: {lams}")
        object.__setattr__(self, "lambdas", lams)

    @property
    def k(self) -> int:
        return self.lambdas.size

    def extension_rhs(self, F: np.ndarray, H: np.ndarray, z: np.ndarray, y: np.ndarray):
        """Derivatives of the extended pair: row i of ``F`` filters ``z^T`` through
        ``1/(p + lambda_i)``, and likewise ``H`` filters ``y^T``."""
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        if F.shape != (self.k, self.k) or z.shape != (self.k,) or H.shape != (self.k, y.size):
            raise ScenarioError(
                f"extension_rhs: F{F.shape}, H{H.shape}, z{z.shape}, y{y.shape} "
                f"do not fit k={self.k}")
        lam = self.lambdas[:, None]
        return -lam * F + z[None, :], -lam * H + y[None, :]

    def derivative_filter_rhs(self, psi, signal) -> np.ndarray:
        """``d psi/dt = -lambda0 psi + signal``."""
        psi = np.asarray(psi, dtype=float)
        signal = np.asarray(signal, dtype=float)
        if psi.shape != signal.shape:
            raise ScenarioError(f"filter state {psi.shape} vs input {signal.shape}")
        return -self.lambda0 * psi + signal


def filter_rhs(bank: FilterBank, filters: dict, inputs: dict, F, H, z, y):
    """Derivatives for a whole bank.

    ``filters`` maps a name to the current state of a ``lambda0`` filter and
    ``inputs`` maps the same name to that filter's input. Returns the dict of
    filter derivatives plus ``dF`` and ``dH``.
    """
    out = {name: bank.derivative_filter_rhs(filters[name], inputs[name]) for name in filters}
    dF, dH = bank.extension_rhs(F, H, z, y)
    return out, dF, dH


@lru_cache(maxsize=None)
def _minor_index(k: int):
    keep = np.array([[j for j in range(k) if j != i] for i in range(k)])
    rows = keep[:, None, :, None]
    cols = keep[None, :, None, :]
    idx = np.arange(k)
    sign = np.where((idx[:, None] + idx[None, :]) % 2 == 0, 1.0, -1.0)
    return rows, cols, sign


def adjugate(F: np.ndarray) -> np.ndarray:
    """Adjugate (transposed cofactor matrix); defined for singular ``F`` too."""
    F = np.asarray(F, dtype=float)
    k = F.shape[0]
    if F.shape != (k, k):
        raise ValueError(f"adjugate needs a square matrix, got {F.shape}")
    if k == 1:
        return np.ones((1, 1))
    if k == 2:
        return np.array([[F[1, 1], -F[0, 1]], [-F[1, 0], F[0, 0]]])
    if k <= COFACTOR_MAX_K:
        rows, cols, sign = _minor_index(k)
        cof = sign * np.linalg.det(F[rows, cols])
        return cof.T
    # adj(U S V^T) = det(U) det(V) V adj(S) U^T, adj(S) = diag(prod_{j != i} s_j)
    U, s, Vt = np.linalg.svd(F)
    prods = np.array([np.prod(np.delete(s, i)) for i in range(k)])
    scale = np.linalg.det(U) * np.linalg.det(Vt)
    return scale * (Vt.T * prods) @ U.T


@dataclass(frozen=True)
class DremSignals:
    delta: float
    mixed: np.ndarray
    int_delta_sq: float = 0.0


def mix(F: np.ndarray, H: np.ndarray, int_delta_sq: float = 0.0) -> DremSignals:
    """``delta = det(F)``, ``mixed = adj(F) @ H``."""
    F = np.asarray(F, dtype=float)
    adj = adjugate(F)
    return DremSignals(float(np.linalg.det(F)), adj @ np.asarray(H, dtype=float), int_delta_sq)
