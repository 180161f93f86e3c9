"""Fixed-step RK4 integration and time-series logging."""
from __future__ import annotations

import csv
import io
from typing import Callable, Dict, Iterable, Optional

import numpy as np

from .errors import IntegrationError

VectorField = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(f: VectorField, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(out).all():
        raise IntegrationError(f"non-finite state after step at t={t:.6g}", t=t)
    return out


class StateLayout:
    """Named slices of a flat coupled-state vector.

    >>> lay = StateLayout()
    >>> lay.add("x", 2); lay.add("F", (2, 2))
    >>> lay.size
    6
    """

    def __init__(self):
        self._slices: Dict[str, slice] = {}
        self._shapes: Dict[str, tuple] = {}
        self.size = 0

    def add(self, name: str, shape) -> None:
        if name in self._slices:
            raise ValueError(f"duplicate component {name!r}")
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        self._slices[name] = slice(self.size, self.size + count)
        self._shapes[name] = shape
        self.size += count

    def __contains__(self, name: str) -> bool:
        return name in self._slices

    @property
    def names(self):
        return list(self._slices)

    def slice(self, name: str) -> slice:
        return self._slices[name]

    def shape(self, name: str) -> tuple:
        return self._shapes[name]

    def get(self, y: np.ndarray, name: str) -> np.ndarray:
        """View of component ``name``; works on a single state or a stack of states."""
        sl = self._slices[name]
        return y[..., sl].reshape(y.shape[:-1] + self._shapes[name])

    def set(self, y: np.ndarray, name: str, value) -> None:
        y[..., self._slices[name]] = np.asarray(value, dtype=float).reshape(
            y.shape[:-1] + (-1,))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def column_names(self, name: str, prefix: Optional[str] = None) -> list:
        """CSV column names, 1-based: ``x1``, ``x2`` or ``F_1_2`` for matrices."""
        prefix = name if prefix is None else prefix
        shape = self._shapes[name]
        if len(shape) == 0:
            return [prefix]
        if len(shape) == 1:
            return [f"{prefix}{i + 1}" for i in range(shape[0])]
        return [f"{prefix}_{i + 1}_{j + 1}" for i in range(shape[0]) for j in range(shape[1])]


class TimeSeries:
    """Named columns sampled on a uniform grid."""

    def __init__(self, t: np.ndarray, columns: Optional[Dict[str, np.ndarray]] = None):
        self.t = np.asarray(t, dtype=float)
        if self.t.ndim != 1:
            raise ValueError("time grid must be 1-D")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("time grid must be strictly increasing")
        self.columns: Dict[str, np.ndarray] = {}
        for name, col in (columns or {}).items():
            self[name] = col

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        return self.columns[name]

    def __setitem__(self, name: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self.t.shape:
            raise ValueError(f"column {name!r} has {values.shape}, grid has {self.t.shape}")
        self.columns[name] = values

    def __contains__(self, name: str) -> bool:
        return name == "t" or name in self.columns

    @property
    def names(self) -> list:
        return list(self.columns)

    def add_block(self, names: Iterable[str], data: np.ndarray) -> None:
        data = np.asarray(data, dtype=float).reshape(len(self.t), -1)
        names = list(names)
        if data.shape[1] != len(names):
            raise ValueError(f"{len(names)} names for {data.shape[1]} columns")
        for j, name in enumerate(names):
            self[name] = data[:, j]

    def to_csv(self, path=None) -> str:
        """Write as CSV (first column ``t``); returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + self.names)
        block = np.column_stack([self.t] + [self.columns[c] for c in self.names])
        for row in block:
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(body[:, 0], {name: body[:, j] for j, name in enumerate(header) if j})


def integrate(f: VectorField, y0: np.ndarray, t_end: float, step: float,
              t0: float = 0.0, log_every: int = 1):
    """Integrate ``dy/dt = f(t, y)`` from ``t0`` to ``t_end`` with fixed RK4 steps.

    Returns ``(t, Y)`` with ``Y[i]`` the state at ``t[i]``; every
    ``log_every``-th step is kept, and the final state is always kept.
    Time points are computed as ``t0 + i * step`` so repeated runs are
    bitwise identical.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    span = t_end - t0
    nsteps = int(round(span / step))
    if nsteps < 0 or abs(nsteps * step - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"step {step} does not divide the horizon {span}")
    y = np.array(y0, dtype=float)
    if not np.isfinite(y).all():
        raise IntegrationError("non-finite initial state", t=t0)
    ts = [t0]
    ys = [y.copy()]
    for i in range(nsteps):
        t = t0 + i * step
        y = rk4_step(f, t, y, step)
        if (i + 1) % log_every == 0 or i + 1 == nsteps:
            ts.append(t0 + (i + 1) * step)
            ys.append(y.copy())
    return np.array(ts), np.array(ys)
