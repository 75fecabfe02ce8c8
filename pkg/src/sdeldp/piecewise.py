"""Piecewise constant/affine functions of one real variable with jump
discontinuities, plus the derived coefficient transforms used by the
small-noise rate functional.

A :class:`PiecewiseFunction` has finitely many breakpoints, finite one-sided
limits everywhere, and is constant beyond a clamp radius.  From a drift /
diffusion pair ``(a, sigma)`` this module builds:

* the lower-semicontinuous modification ``(a_bar, sigma_bar)`` — at every
  breakpoint either the drift is zeroed out (when the surrounding field
  points inward from both sides) or the side with the smaller ``a**2 /
  sigma**2`` ratio is selected;
* the antiderivative transforms ``S(x) = int_0^x a_bar / sigma_bar**2`` and
  ``Sigma(x) = int_0^x 1 / sigma_bar``, both in closed form per segment;
* the jump-product factorisation ``(a_tilde, sigma_tilde, upsilon)`` that
  moves all diffusion jumps not visible in ``a / sigma**2`` into a separate
  multiplier ``upsilon``, and the modified pair of the factorised
  coefficients ``(a_hat, sigma_hat)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "NonElliptic",
    "UnboundedGrowth",
    "RatioNotPiecewiseConstant",
    "ConsistencyError",
    "Segment",
    "PiecewiseFunction",
    "SdeModel",
    "BreakpointChoice",
    "ModifiedPair",
    "side_limits",
    "validate_bounds",
    "modify",
    "s_transform",
    "sigma_transform",
    "tilde_decomposition",
    "hat_coefficients",
]


class NonElliptic(ValueError):
    """sigma**2 can reach zero (or below) somewhere on the line."""


class UnboundedGrowth(ValueError):
    """A coefficient grows without bound and no clamp radius caps it."""


class RatioNotPiecewiseConstant(ValueError):
    """a / sigma**2 is not piecewise constant, so the jump-product
    factorisation does not apply."""


class ConsistencyError(AssertionError):
    """Two routes to the same derived coefficient disagree."""


@dataclass(frozen=True)
class Segment:
    """One piece of a piecewise function: ``c0 + c1 * x`` on an open interval."""

    kind: str
    c0: float
    c1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "affine"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind == "constant" and self.c1 != 0.0:
            raise ValueError("constant segment must have c1 == 0")

    def value(self, x: float) -> float:
        return self.c0 + self.c1 * x

    @property
    def is_zero(self) -> bool:
        return self.c0 == 0.0 and self.c1 == 0.0


def _as_segment(seg) -> Segment:
    if isinstance(seg, Segment):
        return seg
    if isinstance(seg, (int, float)):
        return Segment("constant", float(seg))
    kind, *coef = seg
    return Segment(kind, *map(float, coef))


@dataclass(frozen=True, eq=False)
class PiecewiseFunction:
    """Scalar function with finitely many first-kind discontinuities.

    ``segments[k]`` rules the open interval between ``breakpoints[k-1]`` and
    ``breakpoints[k]`` (unbounded at the ends).  The value *at* breakpoint
    ``z_k`` is ``at_breakpoints[k]`` and defaults to the right limit.
    Evaluation clamps the argument to ``[-clamp_radius, clamp_radius]``, so
    the function is constant beyond the clamp even on affine end segments.
    """

    breakpoints: tuple
    segments: tuple
    at_breakpoints: tuple
    clamp_radius: float

    def __init__(self, breakpoints: Sequence[float], segments: Sequence,
                 at_breakpoints: Optional[Sequence[Optional[float]]] = None,
                 clamp_radius: float = math.inf):
        bps = tuple(float(z) for z in breakpoints)
        segs = tuple(_as_segment(s) for s in segments)
        if len(segs) != len(bps) + 1:
            raise ValueError(f"need {len(bps) + 1} segments for {len(bps)} breakpoints, got {len(segs)}")
        if any(not math.isfinite(z) for z in bps):
            raise ValueError("breakpoints must be finite")
        if any(b >= c for b, c in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        R = float(clamp_radius)
        if R <= 0:
            raise ValueError("clamp_radius must be positive")
        if at_breakpoints is None:
            at_vals = tuple(segs[k + 1].value(z) for k, z in enumerate(bps))
        else:
            if len(at_breakpoints) != len(bps):
                raise ValueError("need one at-breakpoint value per breakpoint")
            at_vals = tuple(segs[k + 1].value(z) if v is None else float(v)
                            for k, (z, v) in enumerate(zip(bps, at_breakpoints)))
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "at_breakpoints", at_vals)
        object.__setattr__(self, "clamp_radius", R)

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value: float, clamp_radius: float = math.inf) -> "PiecewiseFunction":
        return cls((), (Segment("constant", float(value)),), clamp_radius=clamp_radius)

    @classmethod
    def step(cls, breakpoints: Sequence[float], values: Sequence[float],
             at_breakpoints: Optional[Sequence[Optional[float]]] = None,
             clamp_radius: float = math.inf) -> "PiecewiseFunction":
        """Piecewise constant function from per-interval values."""
        segs = [Segment("constant", float(v)) for v in values]
        return cls(breakpoints, segs, at_breakpoints, clamp_radius)

    # -- packed view for the simulation kernels -----------------------------

    @cached_property
    def packed(self):
        """(bps, c0, c1, at_values, clamp) as float64 arrays/scalars."""
        bps = np.asarray(self.breakpoints, dtype=np.float64)
        c0 = np.array([s.c0 for s in self.segments], dtype=np.float64)
        c1 = np.array([s.c1 for s in self.segments], dtype=np.float64)
        atv = np.asarray(self.at_breakpoints, dtype=np.float64)
        R = self.clamp_radius if math.isfinite(self.clamp_radius) else 1e300
        return bps, c0, c1, atv, R

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x):
        bps, c0, c1, atv, R = self.packed
        arr = np.asarray(x, dtype=np.float64)
        xc = np.clip(arr, -R, R)
        idx = np.searchsorted(bps, xc, side="left")
        out = c0[idx] + c1[idx] * xc
        if bps.size:
            j = np.minimum(idx, bps.size - 1)
            hit = bps[j] == xc
            if np.any(hit):
                out = np.where(hit, atv[j], out)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    def _clamped(self, x: float) -> float:
        R = self.clamp_radius
        return min(max(float(x), -R), R)

    def left_limit(self, x: float) -> float:
        xc = self._clamped(x)
        k = self._bp_index(xc)
        if k is not None:
            return self.segments[k].value(xc)
        return float(self(xc))

    def right_limit(self, x: float) -> float:
        xc = self._clamped(x)
        k = self._bp_index(xc)
        if k is not None:
            return self.segments[k + 1].value(xc)
        return float(self(xc))

    def _bp_index(self, x: float) -> Optional[int]:
        bps = self.packed[0]
        i = int(np.searchsorted(bps, x, side="left"))
        if i < bps.size and bps[i] == x:
            return i
        return None

    def segment_at(self, x: float) -> Segment:
        """Segment ruling the clamped point x (right segment on a breakpoint)."""
        xc = self._clamped(x)
        bps = self.packed[0]
        i = int(np.searchsorted(bps, xc, side="right"))
        return self.segments[i]

    def affine_on(self, x: float):
        """(c0, c1) of the effective affine formula at x, clamp included."""
        R = self.clamp_radius
        if x <= -R:
            return self.left_limit(-R), 0.0
        if x >= R:
            return self.right_limit(R), 0.0
        seg = self.segment_at(x)
        return seg.c0, seg.c1

    def derivative_at(self, x):
        """Slope of the active segment; zero in the clamp zones.  At a
        breakpoint the right segment's slope is used (a measure-zero choice)."""
        bps, _, c1, _, R = self.packed
        arr = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(bps, arr, side="right")
        out = np.where(np.abs(arr) >= R, 0.0, c1[idx])
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    # -- algebra -------------------------------------------------------------

    def with_breakpoints(self, breakpoints: Sequence[float]) -> "PiecewiseFunction":
        """Re-express on a finer breakpoint set (must contain the current one)."""
        new_bps = tuple(sorted(set(map(float, breakpoints)) | set(self.breakpoints)))
        segs = []
        atv = []
        edges = (-math.inf,) + new_bps
        for lo in edges:
            probe = lo if math.isfinite(lo) else (new_bps[0] - 1.0 if new_bps else 0.0)
            # segment ruling the interval just right of lo
            segs.append(self._segment_right_of(probe))
        for z in new_bps:
            k = self._bp_index(self._clamped(z))
            atv.append(self.at_breakpoints[k] if k is not None else float(self(z)))
        return PiecewiseFunction(new_bps, segs, atv, self.clamp_radius)

    def _segment_right_of(self, x: float) -> Segment:
        bps = self.packed[0]
        i = int(np.searchsorted(bps, x, side="right"))
        return self.segments[i]

    def sup_abs(self) -> float:
        """sup |f| over the line (extrema sit at segment ends or the clamp)."""
        ext = _segment_extremes(self, "function")
        top = max(max(abs(v1), abs(v2)) for _, v1, v2 in ext)
        for z in self.breakpoints:
            top = max(top, abs(float(self(z))))
        return top


def pw_mul(f: PiecewiseFunction, g: PiecewiseFunction) -> PiecewiseFunction:
    """Pointwise product.  At most one factor may be affine on any segment,
    and the factors must share a clamp radius (unless one is globally
    constant, whose clamp is then irrelevant)."""
    if f.clamp_radius == g.clamp_radius:
        R = f.clamp_radius
    elif not f.breakpoints and all(s.c1 == 0.0 for s in f.segments):
        R = g.clamp_radius
    elif not g.breakpoints and all(s.c1 == 0.0 for s in g.segments):
        R = f.clamp_radius
    else:
        raise ValueError("product factors must share a clamp radius")
    merged = tuple(sorted(set(f.breakpoints) | set(g.breakpoints)))
    fa = f.with_breakpoints(merged)
    ga = g.with_breakpoints(merged)
    segs = []
    for sf, sg in zip(fa.segments, ga.segments):
        if sf.c1 != 0.0 and sg.c1 != 0.0:
            raise ValueError("product of two affine segments is not representable")
        c0 = sf.c0 * sg.c0
        c1 = sf.c0 * sg.c1 + sf.c1 * sg.c0
        segs.append(Segment("constant" if c1 == 0.0 else "affine", c0, c1))
    atv = [fa.at_breakpoints[k] * ga.at_breakpoints[k] for k in range(len(merged))]
    return PiecewiseFunction(merged, segs, atv, R)


# ---------------------------------------------------------------------------
# model container and bound certification
# ---------------------------------------------------------------------------


def side_limits(f: PiecewiseFunction, x: float):
    """(left, right) limits of f at x; equal away from breakpoints."""
    return f.left_limit(x), f.right_limit(x)


def _segment_extremes(f: PiecewiseFunction, label: str):
    """Per-segment (k, lo_value, hi_value).  Exact for constant/affine pieces:
    the extrema sit at the (clamped) segment ends."""
    m = len(f.breakpoints)
    R = f.clamp_radius
    out = []
    for k, seg in enumerate(f.segments):
        if seg.c1 == 0.0:
            out.append((k, seg.c0, seg.c0))
            continue
        lo = f.breakpoints[k - 1] if k > 0 else -R
        hi = f.breakpoints[k] if k < m else R
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise UnboundedGrowth(
                f"{label} segment {k} is affine with no finite clamp radius")
        out.append((k, seg.value(lo), seg.value(hi)))
    return out


def validate_bounds(a: PiecewiseFunction, sigma: PiecewiseFunction):
    """Certify |a| <= C(1+|x|) and c <= sigma**2 <= C symbolically.

    Extrema of constant/affine pieces sit at segment ends or the clamp, so
    checking the finite node set is exact.  Returns (C, c).
    """
    a_ext = _segment_extremes(a, "drift")
    s_ext = _segment_extremes(sigma, "sigma")
    c = math.inf
    s2_max = 0.0
    for k, v1, v2 in s_ext:
        if min(v1, v2) <= 0.0 or v1 * v2 < 0.0:
            raise NonElliptic(f"sigma segment {k} touches zero")
        c = min(c, v1 * v1, v2 * v2)
        s2_max = max(s2_max, v1 * v1, v2 * v2)
    for k, z in enumerate(sigma.breakpoints):
        v = float(sigma(z))
        if v <= 0.0:
            raise NonElliptic(f"sigma value at breakpoint {k} (x={z:g}) is not positive")
        c = min(c, v * v)
        s2_max = max(s2_max, v * v)
    a_max = max(max(abs(v1), abs(v2)) for _, v1, v2 in a_ext)
    for z in a.breakpoints:
        a_max = max(a_max, abs(float(a(z))))
    return max(a_max, s2_max), c


@dataclass(frozen=True, eq=False)
class SdeModel:
    """Drift/diffusion pair with initial value, horizon and certified bounds."""

    a: PiecewiseFunction
    sigma: PiecewiseFunction
    x0: float
    T: float
    bounds: tuple

    @classmethod
    def build(cls, a: PiecewiseFunction, sigma: PiecewiseFunction,
              x0: float, T: float) -> "SdeModel":
        if T <= 0:
            raise ValueError("horizon T must be positive")
        C, c = validate_bounds(a, sigma)
        return cls(a, sigma, float(x0), float(T), (C, c))

    @cached_property
    def modified(self) -> "ModifiedPair":
        return modify(self.a, self.sigma)


# ---------------------------------------------------------------------------
# the lower-semicontinuous modification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BreakpointChoice:
    """How a breakpoint value was selected when building the modified pair."""

    z: float
    rule: str            # "zero-drift" (inward field) or "min-ratio"
    side: Optional[str]  # "left" / "right" for min-ratio, None for zero-drift
    tie: bool
    a_value: float
    sigma_value: float


@dataclass(frozen=True, eq=False)
class ModifiedPair:
    """Modified coefficients (a_bar, sigma_bar) plus the per-breakpoint log."""

    a_bar: PiecewiseFunction
    sigma_bar: PiecewiseFunction
    provenance: tuple = ()

    @property
    def breakpoints(self):
        return self.a_bar.breakpoints

    def b_bar(self, x):
        """a_bar**2 / sigma_bar**2, the potential term of the rate density."""
        ab = self.a_bar(x)
        sb = self.sigma_bar(x)
        return (ab * ab) / (sb * sb)

    def b_bar_limits(self, z: float):
        al, ar = side_limits(self.a_bar, z)
        sl, sr = side_limits(self.sigma_bar, z)
        return (al * al) / (sl * sl), (ar * ar) / (sr * sr)

    @cached_property
    def _s_table(self):
        return _AntiderivativeTable.drift_over_variance(self.a_bar, self.sigma_bar)

    @cached_property
    def _sigma_table(self):
        return _AntiderivativeTable.inverse(self.sigma_bar)


def modify(a: PiecewiseFunction, sigma: PiecewiseFunction) -> ModifiedPair:
    """Build the modified pair (a_bar, sigma_bar) on the merged breakpoints.

    At each breakpoint: if the drift points inward from both sides
    (``a(z-) >= 0 >= a(z+)``) the drift value is zeroed and sigma keeps its
    own at-breakpoint value; otherwise the one-sided pair with the smaller
    ``a**2 / sigma**2`` is taken, right side on ties.
    """
    merged = tuple(sorted(set(a.breakpoints) | set(sigma.breakpoints)))
    am = a.with_breakpoints(merged)
    sm = sigma.with_breakpoints(merged)
    a_at, s_at, prov = [], [], []
    for z in merged:
        al, ar = side_limits(a, z)
        sl, sr = side_limits(sigma, z)
        if al >= 0.0 >= ar:
            a_at.append(0.0)
            s_at.append(float(sigma(z)))
            prov.append(BreakpointChoice(z, "zero-drift", None, False, 0.0, s_at[-1]))
        else:
            rl = (al * al) / (sl * sl)
            rr = (ar * ar) / (sr * sr)
            tie = rl == rr
            if rr <= rl:
                side, av, sv = "right", ar, sr
            else:
                side, av, sv = "left", al, sl
            a_at.append(av)
            s_at.append(sv)
            prov.append(BreakpointChoice(z, "min-ratio", side, tie, av, sv))
    a_bar = PiecewiseFunction(merged, am.segments, a_at, am.clamp_radius)
    sigma_bar = PiecewiseFunction(merged, sm.segments, s_at, sm.clamp_radius)
    return ModifiedPair(a_bar, sigma_bar, tuple(prov))


# ---------------------------------------------------------------------------
# closed-form antiderivatives of the transform integrands
# ---------------------------------------------------------------------------


class _AntiderivativeTable:
    """Exact antiderivative of N(z) / D(z)**p with N, D piecewise affine.

    The line is partitioned by the union of the input breakpoints and finite
    clamp edges; on each cell the integrand is a fixed rational expression
    with a closed-form antiderivative.  Beyond the outermost node the
    integrand is the constant boundary value, so the integral extends
    linearly.
    """

    def __init__(self, nodes, num, den, power):
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.n0 = np.array([c[0] for c in num])
        self.n1 = np.array([c[1] for c in num])
        if den is None:
            self.d0 = np.ones_like(self.n0)
            self.d1 = np.zeros_like(self.n0)
        else:
            self.d0 = np.array([c[0] for c in den])
            self.d1 = np.array([c[1] for c in den])
        self.power = power
        if self.nodes.size:
            cum = [0.0]
            for i in range(self.nodes.size - 1):
                lo, hi = self.nodes[i], self.nodes[i + 1]
                cum.append(cum[-1] + self._anti(hi, i + 1) - self._anti(lo, i + 1))
            self.cum = np.asarray(cum)
            self.g_left = self._rate(self.nodes[0], 0)
            self.g_right = self._rate(self.nodes[-1], self.nodes.size)
        else:
            self.cum = np.zeros(1)
            self.g_left = self.g_right = 0.0
        self._offset = 0.0
        self._offset = float(self._raw_vec(np.zeros(1))[0])

    @classmethod
    def _build(cls, funcs, pick_num, pick_den, power):
        nodes = set()
        for f in funcs:
            nodes.update(f.breakpoints)
            if math.isfinite(f.clamp_radius):
                nodes.update((-f.clamp_radius, f.clamp_radius))
        nodes = sorted(nodes)
        num, den = [], []
        cells = [nodes[0] - 1.0] if nodes else [0.0]
        cells += [0.5 * (a + b) for a, b in zip(nodes, nodes[1:])]
        cells += [nodes[-1] + 1.0] if nodes else []
        for mid in cells:
            num.append(pick_num(mid))
            den.append(pick_den(mid) if pick_den is not None else None)
        return cls(nodes, num, den if pick_den is not None else None, power)

    @classmethod
    def drift_over_variance(cls, a_bar, sigma_bar):
        return cls._build([a_bar, sigma_bar], a_bar.affine_on, sigma_bar.affine_on, 2)

    @classmethod
    def inverse(cls, sigma_bar):
        return cls._build([sigma_bar], lambda m: (1.0, 0.0), sigma_bar.affine_on, 1)

    @classmethod
    def plain(cls, f):
        return cls._build([f], f.affine_on, None, 0)

    def _coef(self, cell):
        return (self.n0[cell], self.n1[cell], self.d0[cell], self.d1[cell])

    def _rate(self, z, cell):
        a0, a1, b0, b1 = self._coef(cell)
        den = (b0 + b1 * z) ** self.power if self.power else 1.0
        return (a0 + a1 * z) / den

    def _anti(self, z, cell):
        a0, a1, b0, b1 = self._coef(cell)
        if self.power == 0:
            return a0 * z + 0.5 * a1 * z * z
        if b1 == 0.0:
            base = a0 * z + 0.5 * a1 * z * z
            return base / (b0 * b0 if self.power == 2 else b0)
        u = b0 + b1 * z
        p = a1 / b1
        q = a0 - a1 * b0 / b1
        if self.power == 1:
            return (p * u + q * math.log(abs(u))) / b1
        return (p * math.log(abs(u)) + q / u) / b1

    def _anti_vec(self, z: np.ndarray, cell: np.ndarray) -> np.ndarray:
        a0, a1 = self.n0[cell], self.n1[cell]
        b0, b1 = self.d0[cell], self.d1[cell]
        if self.power == 0:
            return a0 * z + 0.5 * a1 * z * z
        out = np.empty_like(z)
        lin = b1 == 0.0
        if np.any(lin):
            base = a0[lin] * z[lin] + 0.5 * a1[lin] * z[lin] ** 2
            den = b0[lin] * b0[lin] if self.power == 2 else b0[lin]
            out[lin] = base / den
        gen = ~lin
        if np.any(gen):
            a0g, a1g, b0g, b1g = a0[gen], a1[gen], b0[gen], b1[gen]
            u = b0g + b1g * z[gen]
            p = a1g / b1g
            q = a0g - a1g * b0g / b1g
            if self.power == 1:
                out[gen] = (p * u + q * np.log(np.abs(u))) / b1g
            else:
                out[gen] = (p * np.log(np.abs(u)) + q / u) / b1g
        return out

    def _raw_vec(self, x: np.ndarray) -> np.ndarray:
        nodes = self.nodes
        if nodes.size == 0:
            cells = np.zeros(x.shape, dtype=np.intp)
            return self._anti_vec(x, cells) - self._anti(0.0, 0)
        out = np.empty_like(x)
        left = x <= nodes[0]
        right = x >= nodes[-1]
        mid = ~(left | right)
        out[left] = (x[left] - nodes[0]) * self.g_left
        out[right] = self.cum[-1] + (x[right] - nodes[-1]) * self.g_right
        if np.any(mid):
            i = np.searchsorted(nodes, x[mid], side="right") - 1
            out[mid] = (self.cum[i]
                        + self._anti_vec(x[mid], i + 1)
                        - self._anti_vec(nodes[i], i + 1))
        return out

    def __call__(self, x):
        """int_0^x of the integrand (vectorised)."""
        arr = np.asarray(x, dtype=np.float64)
        out = self._raw_vec(np.atleast_1d(arr)) - self._offset
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def s_transform(pair: ModifiedPair, x):
    """S(x) = int_0^x a_bar / sigma_bar**2, exact per segment."""
    return pair._s_table(x)


def sigma_transform(pair: ModifiedPair, x):
    """Sigma(x) = int_0^x 1 / sigma_bar, exact per segment; strictly increasing."""
    return pair._sigma_table(x)


# ---------------------------------------------------------------------------
# jump-product factorisation and its modified pair
# ---------------------------------------------------------------------------


def _ratio_per_segment(a: PiecewiseFunction, sigma: PiecewiseFunction, merged):
    """a / sigma**2 per merged segment; None entries flag a failure."""
    am = a.with_breakpoints(merged)
    sm = sigma.with_breakpoints(merged)
    ratios = []
    for sa, ss in zip(am.segments, sm.segments):
        if sa.is_zero:
            ratios.append(0.0)
        elif sa.c1 == 0.0 and ss.c1 == 0.0:
            ratios.append(sa.c0 / (ss.c0 * ss.c0))
        else:
            ratios.append(None)
    return am, sm, ratios


def tilde_decomposition(a: PiecewiseFunction, sigma: PiecewiseFunction):
    """Factor (a, sigma) into piecewise-constant (a_tilde, sigma_tilde) and a
    multiplier upsilon = sigma_tilde / sigma.

    Requires a / sigma**2 piecewise constant with both coefficients constant
    per segment.  sigma_tilde jumps only where the ratio jumps (the product of
    the diffusion jump factors at those points), so upsilon is continuous at
    every ratio jump and absorbs all other diffusion jumps.
    """
    merged = tuple(sorted(set(a.breakpoints) | set(sigma.breakpoints)))
    am, sm, ratios = _ratio_per_segment(a, sigma, merged)
    if any(r is None for r in ratios):
        bad = [k for k, r in enumerate(ratios) if r is None]
        raise RatioNotPiecewiseConstant(
            f"a / sigma**2 is not constant on segment(s) {bad}")
    if any(s.c1 != 0.0 for s in sm.segments):
        raise RatioNotPiecewiseConstant("sigma must be piecewise constant here")

    scale = max(1.0, max(abs(r) for r in ratios))
    jump = [abs(ratios[k + 1] - ratios[k]) > 1e-9 * scale for k in range(len(merged))]
    tilde_vals = [1.0]
    for k, z in enumerate(merged):
        factor = sigma.right_limit(z) / sigma.left_limit(z) if jump[k] else 1.0
        tilde_vals.append(tilde_vals[-1] * factor)
    sigma_tilde = PiecewiseFunction.step(merged, tilde_vals, clamp_radius=sm.clamp_radius)
    ups_vals = [tv / s.c0 for tv, s in zip(tilde_vals, sm.segments)]
    ups_at = [sigma_tilde(z) / float(sigma(z)) for z in merged]
    upsilon = PiecewiseFunction.step(merged, ups_vals, ups_at, clamp_radius=sm.clamp_radius)
    a_tilde = pw_mul(am, pw_mul(upsilon, upsilon))
    return a_tilde, sigma_tilde, upsilon


def hat_coefficients(pair: ModifiedPair, upsilon: PiecewiseFunction,
                     tilde: Optional[tuple] = None):
    """Modified coefficients of the factorised pair: a_hat = a_bar * upsilon**2
    and sigma_hat = sigma_bar * upsilon away from upsilon's jumps, with
    breakpoint values re-derived from one-sided limits.

    When the factorised pair ``tilde = (a_tilde, sigma_tilde)`` is supplied,
    the result is cross-checked against its direct modification at sampled
    continuity points of upsilon (tolerance 1e-12).
    """
    ups2 = pw_mul(upsilon, upsilon)
    hat = modify(pw_mul(pair.a_bar, ups2), pw_mul(pair.sigma_bar, upsilon))
    if tilde is not None:
        a_t, s_t = tilde[0], tilde[1]
        direct = modify(a_t, s_t)
        pts = _continuity_probes(upsilon)
        da = np.max(np.abs(hat.a_bar(pts) - direct.a_bar(pts))) if pts.size else 0.0
        ds = np.max(np.abs(hat.sigma_bar(pts) - direct.sigma_bar(pts))) if pts.size else 0.0
        if max(da, ds) > 1e-12:
            raise ConsistencyError(
                f"factorised modification mismatch: |da|={da:g}, |ds|={ds:g}")
    return hat.a_bar, hat.sigma_bar


def _continuity_probes(upsilon: PiecewiseFunction) -> np.ndarray:
    bps = np.asarray(upsilon.breakpoints)
    if bps.size == 0:
        return np.array([-1.0, 0.0, 1.0])
    edges = np.concatenate(([bps[0] - 1.0], bps, [bps[-1] + 1.0]))
    return 0.5 * (edges[:-1] + edges[1:])
