"""Zero-cost flows of the modified drift and direct minimisation of the
discretised action over grid paths under endpoint / event constraints.

The action is piecewise smooth in the node values because the coefficients
jump; minimisation therefore runs a smoothing continuation (window-averaged
coefficients over a shrinking radius) with a quasi-Newton inner loop, followed
by an unsmoothed per-node polish whose candidate set includes exact
breakpoint alignments.
"""
from __future__ import annotations

import math
import warnings
from bisect import bisect_left
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .action import rate_functional
from .paths import GridPath
from .piecewise import ModifiedPair, SdeModel, _AntiderivativeTable

__all__ = [
    "FixedEndpoint",
    "TerminalInterval",
    "SupBall",
    "EventSpec",
    "MinimizeResult",
    "RepellingPointWarning",
    "zero_energy_trajectory",
    "minimize_action",
]

RHO_LADDER = (0.1, 0.03, 0.01, 0.003)


class RepellingPointWarning(UserWarning):
    """The zero-cost flow hit a point the field leaves in both directions; the
    rightward branch was taken by convention."""


@dataclass(frozen=True)
class FixedEndpoint:
    b: float
    kind = "fixed_endpoint"


@dataclass(frozen=True)
class TerminalInterval:
    lower: float
    upper: float
    kind = "terminal_interval"

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("need lower <= upper")


@dataclass(frozen=True, eq=False)
class SupBall:
    reference: GridPath
    delta: float
    kind = "sup_ball"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("ball radius must be positive")


EventSpec = Union[FixedEndpoint, TerminalInterval, SupBall]


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    argmin: GridPath
    value: float
    smoothing_trace: tuple
    restarts_used: int
    converged: bool


# ---------------------------------------------------------------------------
# zero-cost flow of the modified drift
# ---------------------------------------------------------------------------


def zero_energy_trajectory(pair: ModifiedPair, x_start: float, T: float, n: int) -> GridPath:
    """Exact flow of dx/dt = a_bar(x) sampled on a uniform grid.

    Within a segment the affine equation is solved in closed form.  On
    reaching a breakpoint the flow freezes if the field points inward from
    both sides, passes through if pushed, and continues rightward (with a
    warning) if the field leaves in both directions.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    abar = pair.a_bar
    pts = set(abar.breakpoints)
    if math.isfinite(abar.clamp_radius):
        pts.update((-abar.clamp_radius, abar.clamp_radius))
    pts = np.asarray(sorted(pts))
    dt = T / n
    values = np.empty(n + 1)
    values[0] = x = float(x_start)
    warned = [False]
    for k in range(n):
        x = _flow_step(abar, pts, x, dt, warned)
        values[k + 1] = x
    return GridPath(T, values)


def _flow_step(abar, pts, x, dt, warned):
    rem = dt
    for _ in range(100000):
        if rem <= 0.0:
            return x
        j = int(np.searchsorted(pts, x, side="left")) if pts.size else 0
        at_pt = pts.size and j < pts.size and pts[j] == x
        if at_pt:
            l = abar.left_limit(x)
            r = abar.right_limit(x)
            if l >= 0.0 >= r:
                return x  # inward field: frozen for the rest of the step
            if r > 0.0:
                if l < 0.0 and not warned[0]:
                    warned[0] = True
                    warnings.warn(
                        f"field leaves x={x:g} in both directions; continuing rightward",
                        RepellingPointWarning)
                lo, hi = x, pts[j + 1] if j + 1 < pts.size else math.inf
            else:
                lo, hi = pts[j - 1] if j > 0 else -math.inf, x
            probe = _interval_probe(lo, hi)
        else:
            lo = pts[j - 1] if j > 0 else -math.inf
            hi = pts[j] if j < pts.size else math.inf
            probe = x
        c0, c1 = abar.affine_on(probe)
        x, rem = _affine_advance(x, rem, c0, c1, lo, hi)
        if rem < 0:  # settled inside the interval or at an equilibrium
            return x
    raise RuntimeError("flow integration did not terminate")


def _interval_probe(lo, hi):
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def _affine_advance(x, rem, c0, c1, lo, hi):
    """Advance dx/dt = c0 + c1*x from x for up to `rem`, stopping at lo/hi.

    Returns (new_x, remaining); remaining = -1 flags that the step finished
    inside the interval."""
    v0 = c0 + c1 * x
    if v0 == 0.0:
        return x, -1.0
    b = hi if v0 > 0.0 else lo
    if c1 == 0.0:
        if math.isinf(b):
            return x + c0 * rem, -1.0
        t_hit = (b - x) / c0
        if t_hit > rem:
            return x + c0 * rem, -1.0
        return b, rem - t_hit
    xstar = -c0 / c1
    if not math.isinf(b):
        ratio = (b - xstar) / (x - xstar)
        if ratio > 0.0:
            t_hit = math.log(ratio) / c1
            if 0.0 < t_hit <= rem:
                return b, rem - t_hit
    return xstar + (x - xstar) * math.exp(c1 * rem), -1.0


# ---------------------------------------------------------------------------
# smoothed coefficients
# ---------------------------------------------------------------------------


class _Mollified:
    """Window averages of a_bar and sigma_bar over radius rho, with exact
    antiderivatives so evaluation stays closed-form."""

    def __init__(self, pair: ModifiedPair):
        self.pair = pair
        self._ia = _AntiderivativeTable.plain(pair.a_bar)
        self._is = _AntiderivativeTable.plain(pair.sigma_bar)

    def a(self, x, rho):
        if rho == 0.0:
            return self.pair.a_bar(x)
        return (self._ia(x + rho) - self._ia(x - rho)) / (2.0 * rho)

    def da(self, x, rho):
        if rho == 0.0:
            return self.pair.a_bar.derivative_at(x)
        return (self.pair.a_bar(x + rho) - self.pair.a_bar(x - rho)) / (2.0 * rho)

    def s(self, x, rho):
        if rho == 0.0:
            return self.pair.sigma_bar(x)
        return (self._is(x + rho) - self._is(x - rho)) / (2.0 * rho)

    def ds(self, x, rho):
        if rho == 0.0:
            return self.pair.sigma_bar.derivative_at(x)
        return (self.pair.sigma_bar(x + rho) - self.pair.sigma_bar(x - rho)) / (2.0 * rho)


def objective_and_gradient(mol: _Mollified, values: np.ndarray, dt: float, rho: float):
    """Discretised action of the node vector and its gradient at radius rho."""
    v = np.diff(values) / dt
    m = 0.5 * (values[:-1] + values[1:])
    A = mol.a(m, rho)
    S = mol.s(m, rho)
    S2 = S * S
    r = v - A
    obj = 0.5 * float(np.sum(r * r / S2)) * dt
    dA = mol.da(m, rho)
    dS = mol.ds(m, rho)
    dm = dt * (-r * dA / S2 - r * r * S * dS / (S2 * S2))
    grad = np.zeros_like(values)
    core = r / S2
    grad[:-1] += -core + 0.5 * dm
    grad[1:] += core + 0.5 * dm
    return obj, grad


# ---------------------------------------------------------------------------
# event bookkeeping
# ---------------------------------------------------------------------------


def _event_setup(model: SdeModel, event: EventSpec, n: int):
    """(free_idx, lo, hi, pinned_terminal, ref_values) for the node vector."""
    inf = math.inf
    if isinstance(event, FixedEndpoint):
        free = np.arange(1, n)
        lo = np.full(n + 1, -inf)
        hi = np.full(n + 1, inf)
        return free, lo, hi, float(event.b), None
    if isinstance(event, TerminalInterval):
        free = np.arange(1, n + 1)
        lo = np.full(n + 1, -inf)
        hi = np.full(n + 1, inf)
        lo[n], hi[n] = event.lower, event.upper
        return free, lo, hi, None, None
    if isinstance(event, SupBall):
        ref = event.reference.interp(np.linspace(0.0, model.T, n + 1))
        if abs(model.x0 - ref[0]) > event.delta:
            raise ValueError("infeasible event: start lies outside the ball")
        free = np.arange(1, n + 1)
        lo = ref - event.delta
        hi = ref + event.delta
        return free, lo, hi, None, ref
    raise TypeError(f"unknown event {event!r}")


def _event_target(model: SdeModel, event: EventSpec, ref: Optional[np.ndarray]):
    if isinstance(event, FixedEndpoint):
        return event.b
    if isinstance(event, TerminalInterval):
        return min(max(model.x0, event.lower), event.upper)
    return float(ref[-1])


def _starts(model, pair, event, n, restarts, seed, lo, hi, ref):
    T, x0 = model.T, model.x0
    target = _event_target(model, event, ref)
    grid = np.linspace(0.0, T, n + 1)
    starts = []
    if isinstance(event, SupBall):
        starts.append(ref.copy())
    starts.append(np.linspace(x0, target, n + 1))
    ze = zero_energy_trajectory(pair, x0, T, n).values
    for frac in (0.0, 1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0):
        j = int(round((1.0 - frac) * n))
        prof = ze.copy()
        if j < n:
            prof[j:] = np.linspace(ze[j], target, n - j + 1)
        starts.append(prof)
    rng = np.random.default_rng(seed)
    scale = 0.3 * (abs(target - x0) + 1.0)
    while len(starts) < restarts:
        bump = np.sin(math.pi * grid / T) * rng.normal(0.0, scale)
        wob = rng.normal(0.0, scale / 4.0, n + 1) * np.sin(math.pi * grid / T)
        starts.append(np.linspace(x0, target, n + 1) + bump + wob)
    out = []
    for s in starts[:restarts]:
        s = np.clip(s, lo, hi)
        s[0] = x0
        out.append(s)
    return out


# ---------------------------------------------------------------------------
# the minimiser
# ---------------------------------------------------------------------------


def minimize_action(model: SdeModel, pair: ModifiedPair, event: EventSpec,
                    n: int, restarts: int = 8, seed: int = 0) -> MinimizeResult:
    """Minimise the discretised action over paths from x0 satisfying the event.

    Multi-start (straight line, zero-cost flow followed by a dash, seeded
    perturbations), smoothing continuation over RHO_LADDER with L-BFGS-B, and
    an unsmoothed per-node polish with exact breakpoint candidates.  The
    result's ``value`` is the unsmoothed action of the returned path.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if restarts < 1:
        raise ValueError("need at least one restart")
    free, lo, hi, pinned, ref = _event_setup(model, event, n)
    dt = model.T / n
    mol = _Mollified(pair)
    bnds = [(None if math.isinf(lo[i]) else lo[i],
             None if math.isinf(hi[i]) else hi[i]) for i in free]

    def assemble(theta):
        vals = np.empty(n + 1)
        vals[0] = model.x0
        if pinned is not None:
            vals[n] = pinned
        vals[free] = theta
        return vals

    def fun(theta, rho):
        vals = assemble(theta)
        obj, grad = objective_and_gradient(mol, vals, dt, rho)
        return obj, grad[free]

    best = None
    for idx, start in enumerate(_starts(model, pair, event, n, restarts, seed, lo, hi, ref)):
        if pinned is not None:
            start = start.copy()
            start[n] = pinned
        theta = start[free]
        trace = []
        stage_best = (fun(theta, 0.0)[0], theta)
        for rho in RHO_LADDER:
            res = _scipy_minimize(fun, theta, args=(rho,), jac=True,
                                  method="L-BFGS-B", bounds=bnds,
                                  options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-10})
            theta = res.x
            raw = fun(theta, 0.0)[0]
            trace.append((rho, raw))
            if raw < stage_best[0]:
                stage_best = (raw, theta)
        # polish the best unsmoothed iterate seen so far, not necessarily the
        # last one: heavy smoothing can walk away from an already-optimal start
        vals, value, converged = _polish(assemble(stage_best[1]), dt, free, lo, hi, pair)
        trace.append((0.0, value))
        if best is None or value < best[1]:
            best = (vals, value, tuple(trace), converged)
    vals, _, trace, converged = best
    path = GridPath(model.T, vals)
    value = rate_functional(pair, path, model.x0).total
    return MinimizeResult(path, value, trace, restarts, converged)


class _FastEval:
    """Scalar piecewise evaluation on plain floats (hot path of the polish)."""

    def __init__(self, pw):
        bps, c0, c1, atv, R = pw.packed
        self.bps = bps.tolist()
        self.c0 = c0.tolist()
        self.c1 = c1.tolist()
        self.atv = atv.tolist()
        self.R = float(R)
        self.m = len(self.bps)

    def __call__(self, x: float) -> float:
        if x > self.R:
            x = self.R
        elif x < -self.R:
            x = -self.R
        i = bisect_left(self.bps, x)
        if i < self.m and self.bps[i] == x:
            return self.atv[i]
        return self.c0[i] + self.c1[i] * x

    def affine(self, x: float):
        """(c0, c1) of the segment at a non-breakpoint x (clamp included)."""
        if x <= -self.R:
            return self(-self.R), 0.0
        if x >= self.R:
            return self(self.R), 0.0
        i = bisect_left(self.bps, x)
        if i < self.m and self.bps[i] == x:
            i += 1
        return self.c0[i], self.c1[i]


def _polish(values, dt, free, lo, hi, pair, max_sweeps: int = 60):
    """Cyclic exact per-node descent on the unsmoothed objective.

    The local cost of node i over its two cells is piecewise rational in the
    node value, with kinks exactly where a cell midpoint crosses a breakpoint.
    Between kinks it is quadratic whenever sigma_bar is constant there, so the
    vertex is solved exactly; affine sigma_bar falls back to a golden search.
    Kink points themselves are evaluated directly (their midpoints take the
    modified breakpoint values)."""
    fa = _FastEval(pair.a_bar)
    fs = _FastEval(pair.sigma_bar)
    vals = values.copy().tolist()
    n = len(vals) - 1
    bps = list(pair.breakpoints)
    lo_l = lo.tolist()
    hi_l = hi.tolist()

    def cell(a, b):
        m = 0.5 * (a + b)
        ab = fa(m)
        sb = fs(m)
        v = (b - a) / dt
        return 0.5 * (v - ab) ** 2 / (sb * sb) * dt

    def local(i, t):
        c = cell(vals[i - 1], t)
        if i < n:
            c += cell(t, vals[i + 1])
        return c

    def subinterval_min(i, k1, k2):
        """Exact/golden minimum of local(i, .) on the open interval (k1, k2)."""
        mid = 0.5 * (k1 + k2)
        left = vals[i - 1]
        p1, q1 = fa.affine(0.5 * (left + mid))
        s1c0, s1c1 = fs.affine(0.5 * (left + mid))
        quads = []
        # cell i-1: residual ((t - left)/dt - p1 - q1*(left + t)/2)
        quads.append((1.0 / dt - 0.5 * q1,
                      -left / dt - p1 - 0.5 * q1 * left,
                      s1c0, s1c1, left))
        if i < n:
            right = vals[i + 1]
            p2, q2 = fa.affine(0.5 * (mid + right))
            s2c0, s2c1 = fs.affine(0.5 * (mid + right))
            quads.append((-1.0 / dt - 0.5 * q2,
                          right / dt - p2 - 0.5 * q2 * right,
                          s2c0, s2c1, right))
        if all(sc1 == 0.0 for _, _, _, sc1, _ in quads):
            # residuals affine in t with constant variances: quadratic total
            A = B = 0.0
            for u, w, sc0, _, _ in quads:
                inv = 1.0 / (sc0 * sc0)
                A += u * u * inv
                B += u * w * inv
            if A > 0.0:
                t = -B / A
                if k1 < t < k2:
                    return t, local(i, t)
            c1v = local(i, k1 + 1e-13 * (1.0 + abs(k1)))
            c2v = local(i, k2 - 1e-13 * (1.0 + abs(k2)))
            return (k1, c1v) if c1v <= c2v else (k2, c2v)
        return _golden(lambda t: local(i, t), k1, k2)

    total = sum(cell(vals[k], vals[k + 1]) for k in range(n))
    converged = False
    for _ in range(max_sweeps):
        improved = 0.0
        for i in free:
            t0 = vals[i]
            base = local(i, t0)
            span = abs(vals[i - 1] - t0) + (abs(vals[i + 1] - t0) if i < n else 0.0)
            w = max(1.0, 4.0 * span)
            lo_i = lo_l[i] if lo_l[i] > -math.inf else t0 - w
            hi_i = hi_l[i] if hi_l[i] < math.inf else t0 + w
            kinks = {lo_i, hi_i}
            for z in bps:
                for t in (2.0 * z - vals[i - 1],) + ((2.0 * z - vals[i + 1],) if i < n else ()):
                    if lo_i < t < hi_i:
                        kinks.add(t)
            kinks = sorted(kinks)
            best_t, best_c = t0, base
            for t in kinks:
                c = local(i, t)
                if c < best_c:
                    best_c, best_t = c, t
            for k1, k2 in zip(kinks, kinks[1:]):
                t, c = subinterval_min(i, k1, k2)
                if c < best_c:
                    best_c, best_t = c, t
            if best_c < base:
                improved += base - best_c
                vals[i] = best_t
        if improved <= 1e-13 * (1.0 + abs(total)):
            converged = True
            break
        total -= improved
    total = sum(cell(vals[k], vals[k + 1]) for k in range(n))
    return np.asarray(vals), total, converged


def _golden(f, a, b, iters: int = 60):
    """Golden-section minimisation on [a, b]."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - inv * (b - a)
    x2 = a + inv * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv * (b - a)
            f2 = f(x2)
    t = 0.5 * (a + b)
    return t, f(t)
