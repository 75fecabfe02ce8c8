"""Small-noise SDE samplers: explicit Euler scheme, pasted constant-coefficient
pieces for piecewise-constant models, and exponential reweighting between the
original and drift-shifted laws.

Every path is driven by its own counter-based stream keyed by
``(seed, path_index)``, so results are reproducible for any batch split or
thread count.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Tuple

import numpy as np

from . import _kernels
from .paths import GridPath
from .piecewise import PiecewiseFunction, SdeModel

__all__ = [
    "SimConfig",
    "TiltSpec",
    "Misaligned",
    "NotPiecewiseConstant",
    "standard_normals",
    "euler_maruyama",
    "patchwork_sample",
    "girsanov_weight",
    "tilted_sampler",
    "terminal_values",
    "write_terminal_dump",
    "read_terminal_dump",
]

BATCH = 8192


class Misaligned(ValueError):
    """Noise record does not line up with the path grid."""


class NotPiecewiseConstant(ValueError):
    """The pasted-pieces sampler needs piecewise-constant coefficients."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation setup.  The step h is rounded to an integer number of steps
    over [0, T]; epsilon = 0 degenerates to the deterministic flow."""

    model: SdeModel
    epsilon: float
    h: float
    n_paths: int
    seed: int
    record_noise: bool = False

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not (0 < self.h <= self.model.T):
            raise ValueError("need 0 < h <= T")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.model.T / self.h)))

    @property
    def dt(self) -> float:
        return self.model.T / self.n_steps


@dataclass(frozen=True, eq=False)
class TiltSpec:
    """Bounded drift shift a -> a + alpha * sigma with its declared bound."""

    alpha: PiecewiseFunction
    gamma: float

    def __post_init__(self):
        sup = self.alpha.sup_abs()
        if not math.isfinite(sup):
            raise ValueError("tilt must be bounded")
        if sup > self.gamma + 1e-12:
            raise ValueError(f"sup |alpha| = {sup:g} exceeds declared bound {self.gamma:g}")


def standard_normals(seed: int, path_index: int, n: int) -> np.ndarray:
    """The i.i.d. standard normals driving one path, from a counter-based
    stream keyed by (seed, path_index)."""
    key = np.array([seed, path_index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal(n)


def _noise_block(seed: int, start: int, count: int, n: int) -> np.ndarray:
    out = np.empty((count, n))
    for i in range(count):
        out[i] = standard_normals(seed, start + i, n)
    return out


def euler_maruyama(cfg: SimConfig, path_index: int):
    """One explicit-scheme path; deterministic given (cfg, path_index).

    With ``cfg.record_noise`` returns ``(path, increments)`` where
    ``increments[k]`` is the Brownian increment used on step k."""
    noise = standard_normals(cfg.seed, path_index, cfg.n_steps)[None, :]
    rows = _kernels.em_paths(noise, cfg.model.x0, cfg.dt, cfg.epsilon,
                             cfg.model.a.packed, cfg.model.sigma.packed)
    path = GridPath(cfg.model.T, rows[0])
    if cfg.record_noise:
        return path, math.sqrt(cfg.dt) * noise[0]
    return path


def _patchwork_pack(model: SdeModel):
    a, s = model.a, model.sigma
    if any(seg.c1 != 0.0 for seg in a.segments + s.segments):
        raise NotPiecewiseConstant("pasted-pieces sampling needs piecewise-constant a and sigma")
    bps = np.asarray(sorted(set(a.breakpoints) | set(s.breakpoints)))
    aL = np.array([a.left_limit(z) for z in bps])
    aR = np.array([a.right_limit(z) for z in bps])
    sL = np.array([s.left_limit(z) for z in bps])
    sR = np.array([s.right_limit(z) for z in bps])
    hits = np.nonzero(bps == model.x0)[0]
    mode0 = int(hits[0]) if hits.size else -1
    return bps, aL, aR, sL, sR, float(a(model.x0)), float(s(model.x0)), mode0


def patchwork_sample(cfg: SimConfig, path_index: int) -> GridPath:
    """Piecewise-constant model sampled as drifted Brownian pieces with exact
    Gaussian steps; coefficients freeze until a node-detected hit of the next
    breakpoint, then switch to that breakpoint's two-sided values."""
    pack = _patchwork_pack(cfg.model)
    noise = standard_normals(cfg.seed, path_index, cfg.n_steps)[None, :]
    rows = _kernels.patchwork_paths(noise, cfg.model.x0, cfg.dt, cfg.epsilon, pack)
    return GridPath(cfg.model.T, rows[0])


def girsanov_weight(tilt: TiltSpec, path: GridPath, increments: np.ndarray,
                    epsilon: float, direction: str = "to_original") -> float:
    """Exponential density between the original law and the drift-shifted one,
    evaluated along a discrete path.

    ``to_original`` converts expectations over shift-sampled paths back to the
    original law; ``to_tilted`` is the reciprocal convention evaluated on
    original-law paths."""
    if epsilon <= 0:
        raise ValueError("reweighting needs epsilon > 0")
    increments = np.asarray(increments, dtype=np.float64)
    if increments.shape != (path.n,):
        raise Misaligned(f"need {path.n} increments, got {increments.shape}")
    if direction not in ("to_original", "to_tilted"):
        raise ValueError(f"unknown direction {direction!r}")
    al = np.asarray(tilt.alpha(path.values[:-1]), dtype=np.float64)
    stoch = float(np.sum(al * increments))
    quad = float(np.sum(al * al)) * path.dt
    sign = -1.0 if direction == "to_original" else 1.0
    return math.exp(sign * stoch / epsilon - 0.5 * quad / (epsilon * epsilon))


def tilted_sampler(cfg: SimConfig, tilt: TiltSpec) -> Iterator[Tuple[GridPath, float]]:
    """Stream of (path, weight) pairs from the drift-shifted dynamics; the
    weighted indicator mean is unbiased for original-law probabilities."""
    if cfg.epsilon <= 0:
        raise ValueError("tilted sampling needs epsilon > 0")
    a_pack = cfg.model.a.packed
    s_pack = cfg.model.sigma.packed
    t_pack = tilt.alpha.packed
    sq = math.sqrt(cfg.dt)
    for idx in range(cfg.n_paths):
        noise = standard_normals(cfg.seed, idx, cfg.n_steps)[None, :]
        rows = _kernels.em_paths(noise, cfg.model.x0, cfg.dt, cfg.epsilon,
                                 a_pack, s_pack, t_pack)
        path = GridPath(cfg.model.T, rows[0])
        w = girsanov_weight(tilt, path, sq * noise[0], cfg.epsilon)
        yield path, w


def terminal_values(cfg: SimConfig, sampler: str = "euler",
                    tilt: Optional[TiltSpec] = None,
                    ref: Optional[np.ndarray] = None,
                    batch: int = BATCH, threads: int = 1):
    """Batched terminal statistics over all cfg.n_paths paths.

    Returns (x_T, log_weight, sup_deviation) arrays in path-index order.
    ``ref`` (length n_steps+1, on the simulation grid) switches on tracking of
    max_k |X_k - ref_k|.  Results do not depend on batch size or thread count.
    """
    if sampler not in ("euler", "patchwork"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if tilt is not None and cfg.epsilon <= 0:
        raise ValueError("tilted sampling needs epsilon > 0")
    if tilt is not None and sampler == "patchwork":
        raise ValueError("tilt is only wired into the euler sampler")
    a_pack = cfg.model.a.packed
    s_pack = cfg.model.sigma.packed
    t_pack = tilt.alpha.packed if tilt is not None else None
    pw_pack = _patchwork_pack(cfg.model) if sampler == "patchwork" else None
    starts = list(range(0, cfg.n_paths, batch))

    def run(start):
        count = min(batch, cfg.n_paths - start)
        noise = _noise_block(cfg.seed, start, count, cfg.n_steps)
        if sampler == "patchwork":
            xT = _kernels.patchwork_terminal(noise, cfg.model.x0, cfg.dt,
                                             cfg.epsilon, pw_pack)
            return xT, np.zeros(count), np.zeros(count)
        return _kernels.em_terminal(noise, cfg.model.x0, cfg.dt, cfg.epsilon,
                                    a_pack, s_pack, t_pack, ref)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    xT = np.concatenate([p[0] for p in parts])
    logw = np.concatenate([p[1] for p in parts])
    dev = np.concatenate([p[2] for p in parts])
    return xT, logw, dev


def write_terminal_dump(path, values: np.ndarray) -> None:
    """Length-prefixed little-endian float64 dump of terminal values."""
    data = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", data.size))
        fh.write(data.tobytes())


def read_terminal_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * n), dtype="<f8")
    if data.size != n:
        raise ValueError("truncated terminal dump")
    return data.astype(np.float64)
