"""Paths on a uniform time grid, the discrete stand-in for continuous paths."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["GridPath"]


@dataclass(frozen=True, eq=False)
class GridPath:
    """n+1 values at times k*T/n, k = 0..n."""

    T: float
    values: np.ndarray

    def __init__(self, T: float, values):
        vals = np.ascontiguousarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("a grid path needs at least two nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("path values must be finite")
        if not (T > 0 and math.isfinite(T)):
            raise ValueError("horizon T must be positive and finite")
        object.__setattr__(self, "T", float(T))
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def dt(self) -> float:
        return self.T / self.n

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    def midpoints(self) -> np.ndarray:
        v = self.values
        return 0.5 * (v[:-1] + v[1:])

    def derivative(self) -> np.ndarray:
        """Forward-difference slope per cell."""
        return np.diff(self.values) / self.dt

    def interp(self, t) -> np.ndarray:
        return np.interp(t, self.times, self.values)

    # -- constructors --------------------------------------------------------

    @classmethod
    def line(cls, T: float, n: int, x0: float, x1: float) -> "GridPath":
        return cls(T, np.linspace(x0, x1, n + 1))

    @classmethod
    def constant(cls, T: float, n: int, x: float) -> "GridPath":
        return cls(T, np.full(n + 1, float(x)))

    def resampled(self, n: int) -> "GridPath":
        t = np.linspace(0.0, self.T, n + 1)
        return GridPath(self.T, self.interp(t))

    # -- CSV interface -------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh: io.TextIOBase) -> None:
        fh.write("t,f\n")
        for t, v in zip(self.times, self.values):
            fh.write(f"{t:.17g},{v:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "GridPath":
        with open(path, "r", newline="") as fh:
            header = fh.readline().strip()
            if header.replace(" ", "") != "t,f":
                raise ValueError(f"expected header 't,f', got {header!r}")
            rows = [line.split(",") for line in fh if line.strip()]
        t = np.array([float(r[0]) for r in rows])
        v = np.array([float(r[1]) for r in rows])
        if t.size < 2:
            raise ValueError("a grid path needs at least two rows")
        if t[0] != 0.0:
            raise ValueError("path must start at t = 0")
        steps = np.diff(t)
        if np.any(steps <= 0) or np.max(steps) - np.min(steps) > 1e-9 * t[-1]:
            raise ValueError("time grid is not uniform")
        return cls(t[-1], v)
