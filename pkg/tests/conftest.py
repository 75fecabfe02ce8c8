"""Shared builders for randomized models and grid paths used across tests."""
from bisect import bisect_right

import numpy as np

from sdeldp import GridPath, PiecewiseFunction, SdeModel


def make_case3(rng, m=None, clamp=4.0):
    """Random piecewise-constant (a, sigma) whose a/sigma**2 is piecewise
    constant, with some adjacent ratios equal so sigma jumps that the ratio
    does not see actually occur."""
    m = int(m if m is not None else rng.integers(1, 4))
    while True:
        bps = np.sort(rng.uniform(-1.5, 1.5, m))
        if m == 1 or np.min(np.diff(bps)) > 0.2:
            break
    sig = rng.uniform(0.6, 1.8, m + 1)
    pool = rng.uniform(-1.5, 1.5, 2)
    ratios = rng.choice(pool, m + 1)
    a_vals = ratios * sig ** 2
    a = PiecewiseFunction.step(bps.tolist(), a_vals.tolist(), clamp_radius=clamp)
    s = PiecewiseFunction.step(bps.tolist(), sig.tolist(), clamp_radius=clamp)
    return a, s


def make_model(rng, clamp=4.0):
    """Random piecewise model (constant segments, 0-2 breakpoints)."""
    m = int(rng.integers(0, 3))
    bps = np.sort(rng.uniform(-1.2, 1.2, m)) if m else np.empty(0)
    if m == 2 and bps[1] - bps[0] < 0.2:
        bps[1] = bps[0] + 0.3
    a_vals = rng.uniform(-1.5, 1.5, m + 1)
    s_vals = rng.uniform(0.5, 2.0, m + 1)
    a = PiecewiseFunction.step(bps.tolist(), a_vals.tolist(), clamp_radius=clamp)
    s = PiecewiseFunction.step(bps.tolist(), s_vals.tolist(), clamp_radius=clamp)
    x0 = float(rng.uniform(-1.0, 1.0))
    while any(abs(x0 - z) < 0.05 for z in bps):
        x0 = float(rng.uniform(-1.0, 1.0))
    return SdeModel.build(a, s, x0, 1.0)


def node_crossing_path(rng, breakpoints, x0, T, n, waypoints=4, reach=1.0):
    """Piecewise-linear grid path whose runs stay within one coefficient
    segment and touch breakpoints only at grid nodes."""
    bps = sorted(float(z) for z in breakpoints)

    def bounds(x):
        i = bisect_right(bps, x)
        lo = bps[i - 1] if i > 0 else x - reach
        hi = bps[i] if i < len(bps) else x + reach
        return lo, hi

    ts = np.sort(rng.choice(np.arange(1, n), size=waypoints, replace=False))
    ts = np.concatenate([[0], ts, [n]]).astype(int)
    vals = [float(x0)]
    cur = float(x0)
    for _ in range(len(ts) - 1):
        if cur in bps:
            i = bps.index(cur)
            lo = bps[i - 1] if i > 0 else cur - reach
            hi = bps[i + 1] if i + 1 < len(bps) else cur + reach
            lo = max(lo, cur - reach)
            hi = min(hi, cur + reach)
            if rng.random() < 0.5:
                nxt = float(rng.uniform(lo + 0.02, cur - 0.02))
            else:
                nxt = float(rng.uniform(cur + 0.02, hi - 0.02))
        else:
            lo, hi = bounds(cur)
            cands = [float(rng.uniform(max(lo, cur - reach) + 0.02,
                                       min(hi, cur + reach) - 0.02))]
            if lo in bps and cur - lo <= reach:
                cands.append(lo)
            if hi in bps and hi - cur <= reach:
                cands.append(hi)
            nxt = cands[int(rng.integers(0, len(cands)))]
        vals.append(nxt)
        cur = nxt
    values = np.empty(n + 1)
    for (t0, t1), (v0, v1) in zip(zip(ts, ts[1:]), zip(vals, vals[1:])):
        values[t0:t1 + 1] = np.linspace(v0, v1, t1 - t0 + 1)
    return GridPath(T, values)


def segmented_trapezoid(func_left, func_right, pieces, x, step=1e-4):
    """Trapezoid oracle for int_0^x of a piecewise integrand, splitting at the
    given discontinuity points and using one-sided limits at the split ends."""
    lo, hi = (0.0, x) if x >= 0 else (x, 0.0)
    cuts = [lo] + [z for z in sorted(pieces) if lo < z < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        k = max(2, int(np.ceil((b - a) / step)) + 1)
        grid = np.linspace(a, b, k)
        vals = func_right(0.5 * (grid[:-1] + grid[1:]))  # interior: no jumps
        ends = np.array([func_right(np.array([a + 1e-12 * (1 + abs(a))]))[0],
                         func_left(np.array([b - 1e-12 * (1 + abs(b))]))[0]])
        inner = np.concatenate([[ends[0]], vals, [ends[1]]])
        xs = np.concatenate([[a], 0.5 * (grid[:-1] + grid[1:]), [b]])
        total += np.trapezoid(inner, xs)
    return total if x >= 0 else -total
