"""Plant, exosystem and tracking-problem data model.

The plant is ``dx/dt = A x + B u + C v`` and the exosystem ``dv/dt = D w``,
with ``w = v`` for an autonomous exosystem. For LQR synthesis both are
stacked into the augmented state ``X = col(x - v, v)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ScenarioError


def _matrix(value, name: str, shape: Optional[tuple] = None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 1 and shape is not None and len(shape) == 2 and shape[1] == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ScenarioError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise ScenarioError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _vector(value, name: str, size: int) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.size != size:
        raise ScenarioError(f"{name} must have {size} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_pd(M: np.ndarray, name: str, semi: bool = False) -> None:
    if M.shape[0] != M.shape[1]:
        raise ScenarioError(f"{name} must be square")
    if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ScenarioError(f"{name} must be symmetric")
    lo = np.linalg.eigvalsh(M).min()
    if lo < 0 or (not semi and lo <= 0):
        kind = "positive semidefinite" if semi else "positive definite"
        raise ScenarioError(f"{name} must be {kind} (min eigenvalue {lo:.3g})")


@dataclass(frozen=True)
class LtiPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ScenarioError(f"A must be square, got {A.shape}")
        B = _matrix(self.B, "B")
        if B.shape[0] != n:
            raise ScenarioError(f"B must have {n} rows, got {B.shape}")
        C = _matrix(self.C, "C", (n, n))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Exosystem:
    """Leader dynamics ``dv/dt = D w``; ``autonomous`` means ``w = v``."""

    D: np.ndarray
    autonomous: bool = True

    def __post_init__(self):
        D = _matrix(self.D, "D")
        if self.autonomous and D.shape[0] != D.shape[1]:
            raise ScenarioError(f"autonomous exosystem needs square D, got {D.shape}")
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @property
    def q(self) -> int:
        return self.D.shape[1]


@dataclass(frozen=True)
class AugmentedSystem:
    calA: np.ndarray
    calB: np.ndarray
    Qhat: np.ndarray
    R: np.ndarray
    gamma: float
    Pi: np.ndarray

    @property
    def dim(self) -> int:
        return self.calA.shape[0]

    @property
    def m(self) -> int:
        return self.calB.shape[1]


def build_augmented(plant: LtiPlant, exo: Exosystem, Q, R, gamma: float = 0.0,
                    Pi=None) -> AugmentedSystem:
    """Stack plant and exosystem into the tracking-error LQR problem.

    ``calA = [[A, A + C - D], [0, D]]``, ``calB = [B; 0]``, ``Qhat = diag(Q, 0)``.
    ``Pi`` defaults to the identity.
    """
    n, m = plant.n, plant.m
    if exo.D.shape != (n, n):
        raise ScenarioError(f"exosystem D must be {n}x{n} for tracking, got {exo.D.shape}")
    Q = _matrix(Q, "Q", (n, n))
    R = _matrix(np.atleast_2d(R), "R", (m, m))
    _check_pd(Q, "Q")
    _check_pd(R, "R")
    if not np.isfinite(gamma) or gamma < 0:
        raise ScenarioError(f"gamma must be a finite nonnegative number, got {gamma}")
    Pi = np.eye(2 * n) if Pi is None else _matrix(Pi, "Pi", (2 * n, 2 * n))
    _check_pd(Pi, "Pi")

    A, B, C, D = plant.A, plant.B, plant.C, exo.D
    calA = np.block([[A, A + C - D], [np.zeros((n, n)), D]])
    calB = np.vstack([B, np.zeros((n, m))])
    Qhat = np.zeros((2 * n, 2 * n))
    Qhat[:n, :n] = Q
    return AugmentedSystem(calA, calB, Qhat, np.array(R), float(gamma), np.array(Pi))


def split_augmented(aug: AugmentedSystem) -> tuple:
    """Recover ``(A, B, C, D)`` from an augmented system."""
    n = aug.dim // 2
    A = aug.calA[:n, :n]
    D = aug.calA[n:, n:]
    C = aug.calA[:n, n:] - A + D
    B = aug.calB[:n]
    return A.copy(), B.copy(), C, D.copy()


def plant_rhs(plant: LtiPlant, x, u, v) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.asarray(v, dtype=float)
    if x.shape != (plant.n,) or u.shape != (plant.m,) or v.shape != (plant.n,):
        raise ScenarioError(
            f"plant_rhs: expected x({plant.n}), u({plant.m}), v({plant.n}); "
            f"got {x.shape}, {u.shape}, {v.shape}")
    return plant.A @ x + plant.B @ u + plant.C @ v


def exo_rhs(exo: Exosystem, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (exo.q,):
        raise ScenarioError(f"exo_rhs: expected w({exo.q}), got {w.shape}")
    return exo.D @ w


@dataclass(frozen=True)
class ExcitationSpec:
    """Per-channel ``offset + sum(amp * sin(omega * t + phase))``.

    ``channels`` holds one ``(offset, [(amp, omega, phase), ...])`` pair per
    output channel.
    """

    channels: tuple

    def __post_init__(self):
        chans = []
        for offset, terms in self.channels:
            terms = tuple((float(a), float(w), float(p)) for a, w, p in terms)
            if not np.isfinite(offset) or not all(np.isfinite(t).all() for t in terms):
                raise ScenarioError("excitation amplitudes and frequencies must be finite")
            chans.append((float(offset), terms))
        object.__setattr__(self, "channels", tuple(chans))

    @property
    def size(self) -> int:
        return len(self.channels)

    def __call__(self, t: float) -> np.ndarray:
        out = np.empty(len(self.channels))
        for i, (offset, terms) in enumerate(self.channels):
            val = offset
            for amp, omega, phase in terms:
                val += amp * np.sin(omega * t + phase)
            out[i] = val
        return out

    @classmethod
    def zero(cls, size: int) -> "ExcitationSpec":
        return cls(tuple((0.0, ()) for _ in range(size)))

    @classmethod
    def from_json(cls, data: Sequence[dict]) -> "ExcitationSpec":
        return cls(tuple((ch.get("offset", 0.0), [tuple(t) for t in ch.get("terms", [])])
                         for ch in data))

    def to_json(self) -> list:
        return [{"offset": off, "terms": [list(t) for t in terms]}
                for off, terms in self.channels]


def default_lambdas(k: int) -> list:
    return [0.01 * (i + 1) for i in range(k)]


@dataclass(frozen=True)
class FilterConfig:
    """``lam`` drives the derivative filters; ``lambdas`` the extension bank of
    the (A, B, C) path and ``lambdas_d`` the bank of the D path."""

    lam: float = 0.1
    lambdas: Optional[tuple] = None
    lambdas_d: Optional[tuple] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ScenarioError(f"filter constant lam must be positive, got {self.lam}")
        for name in ("lambdas", "lambdas_d"):
            vals = getattr(self, name)
            if vals is None:
                continue
            vals = tuple(float(v) for v in vals)
            if any(not v > 0 for v in vals):
                raise ScenarioError(f"{name} must be positive, got {vals}")
            if len(set(vals)) != len(vals):
                raise ScenarioError(f"{name} must be pairwise distinct, got {vals}")
            object.__setattr__(self, name, vals)

    def bank(self, k: int) -> np.ndarray:
        vals = self.lambdas if self.lambdas is not None else default_lambdas(k)
        if len(vals) < k:
            raise ScenarioError(f"need {k} extension constants, got {len(vals)}")
        return np.array(vals[:k])

    def bank_d(self, k: int) -> np.ndarray:
        vals = self.lambdas_d if self.lambdas_d is not None else self.bank(k)
        if len(vals) < k:
            raise ScenarioError(f"need {k} D-path extension constants, got {len(vals)}")
        return np.array(vals[:k])


@dataclass(frozen=True)
class ScenarioConfig:
    plant: LtiPlant
    exo: Optional[Exosystem]
    x0: np.ndarray
    v0: Optional[np.ndarray]
    excitation: ExcitationSpec
    w_excitation: Optional[ExcitationSpec] = None
    filters: FilterConfig = field(default_factory=FilterConfig)
    alpha: float = 0.05
    sigma: Optional[float] = None
    t_c: float = 25.0
    gamma: float = 0.5
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    Pi: Optional[np.ndarray] = None
    K0: Optional[np.ndarray] = None
    step: float = 1e-3
    t_end: float = 25.0
    tol_grad: float = 1e-8
    max_search_time: float = 1e4
    log_every: int = 1
    name: str = "scenario"

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        object.__setattr__(self, "x0", _vector(self.x0, "x0", n))
        if self.exo is not None:
            if self.exo.n != n:
                raise ScenarioError(f"exosystem state dimension must be {n}, got {self.exo.n}")
            v0 = np.zeros(n) if self.v0 is None else self.v0
            object.__setattr__(self, "v0", _vector(v0, "v0", n))
            if not self.exo.autonomous:
                if self.w_excitation is None or self.w_excitation.size != self.exo.q:
                    raise ScenarioError(
                        f"non-autonomous exosystem needs a {self.exo.q}-channel w excitation")
        else:
            if np.any(self.plant.C != 0):
                raise ScenarioError("plant has nonzero C but no exosystem is given")
            object.__setattr__(self, "v0", None)
        if self.excitation.size != m:
            raise ScenarioError(f"u excitation needs {m} channels, got {self.excitation.size}")
        if not self.step > 0:
            raise ScenarioError(f"step must be positive, got {self.step}")
        if not 0 < self.t_c <= self.t_end:
            raise ScenarioError(f"need 0 < t_c <= t_end, got t_c={self.t_c}, t_end={self.t_end}")
        if not self.alpha > 0:
            raise ScenarioError(f"alpha must be positive, got {self.alpha}")
        if self.sigma is not None and not 0 < self.sigma < 1:
            raise ScenarioError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.gamma < 0:
            raise ScenarioError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.tol_grad > 0:
            raise ScenarioError(f"tol_grad must be positive, got {self.tol_grad}")
        if int(self.log_every) < 1:
            raise ScenarioError("log_every must be >= 1")
        object.__setattr__(self, "Q", np.eye(n) if self.Q is None else _matrix(self.Q, "Q", (n, n)))
        object.__setattr__(self, "R", np.eye(m) if self.R is None
                           else _matrix(np.atleast_2d(self.R), "R", (m, m)))
        if self.Pi is not None:
            object.__setattr__(self, "Pi", _matrix(self.Pi, "Pi", (2 * n, 2 * n)))
        if self.K0 is not None:
            object.__setattr__(self, "K0", _matrix(np.atleast_2d(self.K0), "K0", (m, 2 * n)))
        # the extension banks must cover the regressor sizes
        self.filters.bank(self.k)
        if self.exo is not None:
            self.filters.bank_d(self.exo.q)

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def m(self) -> int:
        return self.plant.m

    @property
    def k(self) -> int:
        """Regressor size of the (A, B, C) path: n + m, plus n when C is estimated."""
        return self.n + self.m + (self.n if self.exo is not None else 0)

    def replace(self, **changes) -> "ScenarioConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def augmented(self, plant: Optional[LtiPlant] = None,
                  exo: Optional[Exosystem] = None) -> AugmentedSystem:
        if self.exo is None and exo is None:
            raise ScenarioError("tracking synthesis needs an exosystem")
        return build_augmented(plant or self.plant, exo or self.exo,
                               self.Q, self.R, self.gamma, self.Pi)

    # -- JSON ---------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            p = data["plant"]
            A = np.array(p["A"], dtype=float)
            n = A.shape[0]
            plant = LtiPlant(A, np.array(p["B"], dtype=float).reshape(n, -1),
                             p.get("C", np.zeros((n, n))))
            exo = None
            if data.get("exosystem") is not None:
                e = data["exosystem"]
                exo = Exosystem(e["D"], bool(e.get("autonomous", True)))
            exc = data.get("excitation", {})
            u_exc = (ExcitationSpec.from_json(exc["u"]) if "u" in exc
                     else ExcitationSpec.zero(plant.m))
            w_exc = ExcitationSpec.from_json(exc["w"]) if "w" in exc else None
            f = data.get("filters", {})
            filters = FilterConfig(f.get("lam", 0.1), f.get("lambdas"), f.get("lambdas_d"))
            est = data.get("estimation", {})
            lqr = data.get("lqr", {})
            integ = data.get("integration", {})
            return cls(
                plant=plant, exo=exo,
                x0=data.get("x0", np.zeros(n)), v0=data.get("v0"),
                excitation=u_exc, w_excitation=w_exc, filters=filters,
                alpha=float(est.get("alpha", 0.05)),
                sigma=est.get("sigma"),
                t_c=float(est.get("t_c", 25.0)),
                gamma=float(lqr.get("gamma", 0.5)),
                Q=lqr.get("Q"), R=lqr.get("R"), Pi=lqr.get("Pi"), K0=lqr.get("K0"),
                tol_grad=float(lqr.get("tol_grad", 1e-8)),
                max_search_time=float(lqr.get("max_time", 1e4)),
                step=float(integ.get("step", 1e-3)),
                t_end=float(integ.get("t_end", 25.0)),
                log_every=int(integ.get("log_every", 1)),
                name=str(data.get("name", "scenario")),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ScenarioError(f"malformed scenario: {exc!r}") from exc

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "plant": {"A": self.plant.A.tolist(), "B": self.plant.B.tolist(),
                      "C": self.plant.C.tolist()},
            "exosystem": None if self.exo is None else
            {"D": self.exo.D.tolist(), "autonomous": self.exo.autonomous},
            "x0": self.x0.tolist(),
            "v0": None if self.v0 is None else self.v0.tolist(),
            "excitation": {"u": self.excitation.to_json()},
            "filters": {"lam": self.filters.lam,
                        "lambdas": None if self.filters.lambdas is None else list(self.filters.lambdas),
                        "lambdas_d": None if self.filters.lambdas_d is None else list(self.filters.lambdas_d)},
            "estimation": {"alpha": self.alpha, "sigma": self.sigma, "t_c": self.t_c},
            "lqr": {"gamma": self.gamma, "Q": self.Q.tolist(), "R": self.R.tolist(),
                    "Pi": None if self.Pi is None else self.Pi.tolist(),
                    "K0": None if self.K0 is None else self.K0.tolist(),
                    "tol_grad": self.tol_grad, "max_time": self.max_search_time},
            "integration": {"step": self.step, "t_end": self.t_end, "log_every": self.log_every},
        }
        if self.w_excitation is not None:
            out["excitation"]["w"] = self.w_excitation.to_json()
        return out


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario from a JSON file, or a bundled one by name (``example1``)."""
    p = Path(path)
    if not p.exists():
        bundled = Path(__file__).parent / "scenarios" / f"{path}.json"
        if bundled.exists():
            p = bundled
        else:
            raise ScenarioError(f"scenario file not found: {path}")
    with open(p) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{p}: invalid JSON ({exc})") from exc
    return ScenarioConfig.from_dict(data)
