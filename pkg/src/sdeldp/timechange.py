"""Deterministic time-change correspondence between a path and its
reparametrisation by the cumulative clock built from the jump multiplier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paths import GridPath
from .piecewise import PiecewiseFunction

__all__ = ["Clock", "ClockShort", "eta_clock", "apply_time_change", "invert_time_change"]


class ClockShort(ValueError):
    """The clock does not reach the requested horizon."""


@dataclass(frozen=True, eq=False)
class Clock:
    """Cumulative strictly increasing clock sampled on a uniform grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must align")
        if self.values[0] != 0.0:
            raise ValueError("clock must start at zero")
        if np.any(np.diff(self.values) <= 0.0):
            raise ValueError("clock must be strictly increasing")

    @property
    def total(self) -> float:
        return float(self.values[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def inverse(self, s):
        return np.interp(s, self.values, self.times)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)


def eta_clock(upsilon: PiecewiseFunction, y: GridPath) -> Clock:
    """Clock t -> int_0^t upsilon(y_s)**2 ds by the midpoint rule."""
    u2 = np.asarray(upsilon(y.midpoints()), dtype=np.float64) ** 2
    vals = np.concatenate(([0.0], np.cumsum(u2 * y.dt)))
    return Clock(y.times, vals)


def apply_time_change(upsilon: PiecewiseFunction, y: GridPath, T: float) -> GridPath:
    """Run the path against the inverted clock: f_t = y(tau_t) on [0, T].

    The result is resampled onto a uniform grid with y's cell count."""
    clock = eta_clock(upsilon, y)
    if clock.total < T * (1.0 - 1e-12):
        raise ClockShort(f"clock reaches {clock.total:g} < horizon {T:g}")
    t = np.linspace(0.0, float(T), y.n + 1)
    tau = clock.inverse(t)
    return GridPath(T, y.interp(tau))


def invert_time_change(upsilon: PiecewiseFunction, f: GridPath):
    """Recover the pre-change path: y_t = f(pi_t) on [0, zeta_T] where
    zeta_t = int_0^t upsilon(f_s)**2 ds and pi is its inverse.

    Returns (y, zeta_T); y keeps f's cell count on the shrunken horizon."""
    u2 = np.asarray(upsilon(f.midpoints()), dtype=np.float64) ** 2
    zeta_vals = np.concatenate(([0.0], np.cumsum(u2 * f.dt)))
    zeta_T = float(zeta_vals[-1])
    s = np.linspace(0.0, zeta_T, f.n + 1)
    pi = np.interp(s, zeta_vals, f.times)
    return GridPath(zeta_T, f.interp(pi)), zeta_T
