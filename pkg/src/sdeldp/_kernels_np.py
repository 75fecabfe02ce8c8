"""Pure-numpy simulation kernels (vectorised across paths).

Semantics match `_kernels_nb` exactly; this module is the fallback when
numba is unavailable or disabled via SDELDP_NO_NUMBA=1.
"""
from __future__ import annotations

import math

import numpy as np


def pw_eval_vec(x, bps, c0, c1, atv, R):
    """Vectorised piecewise constant/affine evaluation with clamping and
    at-breakpoint values."""
    xc = np.clip(x, -R, R)
    idx = np.searchsorted(bps, xc, side="left")
    out = c0[idx] + c1[idx] * xc
    if bps.size:
        j = np.minimum(idx, bps.size - 1)
        hit = bps[j] == xc
        if np.any(hit):
            out = np.where(hit, atv[j], out)
    return out


def em_terminal(noise, x0, dt, eps, a_pack, s_pack, tilt_pack=None, ref=None):
    """Explicit left-node scheme; returns (x_T, log_weight, sup_deviation).

    log_weight accumulates the density converting tilted-path expectations
    back to the original law; sup_deviation tracks max_k |X_k - ref_k| when a
    reference path (on the same grid) is supplied.
    """
    npaths, nsteps = noise.shape
    sq = math.sqrt(dt)
    x = np.full(npaths, float(x0))
    logw = np.zeros(npaths)
    dev = np.full(npaths, abs(float(x0) - ref[0])) if ref is not None else None
    for k in range(nsteps):
        a = pw_eval_vec(x, *a_pack)
        s = pw_eval_vec(x, *s_pack)
        xi = noise[:, k]
        if tilt_pack is not None:
            al = pw_eval_vec(x, *tilt_pack)
            logw = logw - (al * (sq * xi) / eps + 0.5 * al * al * dt / (eps * eps))
            x = x + (a + al * s) * dt + eps * s * (sq * xi)
        else:
            x = x + a * dt + eps * s * (sq * xi)
        if dev is not None:
            dev = np.maximum(dev, np.abs(x - ref[k + 1]))
    if dev is None:
        dev = np.zeros(npaths)
    return x, logw, dev


def em_paths(noise, x0, dt, eps, a_pack, s_pack, tilt_pack=None):
    """Full node matrix (npaths, nsteps+1) of the explicit scheme."""
    npaths, nsteps = noise.shape
    sq = math.sqrt(dt)
    out = np.empty((npaths, nsteps + 1))
    x = np.full(npaths, float(x0))
    out[:, 0] = x
    for k in range(nsteps):
        a = pw_eval_vec(x, *a_pack)
        s = pw_eval_vec(x, *s_pack)
        xi = noise[:, k]
        if tilt_pack is not None:
            al = pw_eval_vec(x, *tilt_pack)
            x = x + (a + al * s) * dt + eps * s * (sq * xi)
        else:
            x = x + a * dt + eps * s * (sq * xi)
        out[:, k + 1] = x
    return out


def _patchwork_step(x, mode, noise_col, dt, eps, bps, aL, aR, sL, sR, a0, s0):
    sq = math.sqrt(dt)
    free = mode < 0
    anchor = np.maximum(mode, 0)
    hi = x >= bps[anchor]
    a = np.where(free, a0, np.where(hi, aR[anchor], aL[anchor]))
    s = np.where(free, s0, np.where(hi, sR[anchor], sL[anchor]))
    xn = x + a * dt + eps * s * (sq * noise_col)
    best = np.full(x.shape, -1, dtype=np.int64)
    bestd = np.full(x.shape, np.inf)
    for j in range(bps.size):
        zj = bps[j]
        crossed = (((x - zj) * (xn - zj)) < 0.0) | (xn == zj)
        crossed &= mode != j
        d = np.abs(zj - x)
        upd = crossed & (d < bestd)
        bestd = np.where(upd, d, bestd)
        best = np.where(upd, j, best)
    mode = np.where(best >= 0, best, mode)
    return xn, mode


def patchwork_terminal(noise, x0, dt, eps, pack):
    """Constant-coefficient pieces pasted at node-detected breakpoint hits."""
    bps, aL, aR, sL, sR, a0, s0, mode0 = pack
    npaths, nsteps = noise.shape
    x = np.full(npaths, float(x0))
    mode = np.full(npaths, int(mode0), dtype=np.int64)
    for k in range(nsteps):
        x, mode = _patchwork_step(x, mode, noise[:, k], dt, eps,
                                  bps, aL, aR, sL, sR, a0, s0)
    return x


def patchwork_paths(noise, x0, dt, eps, pack):
    bps, aL, aR, sL, sR, a0, s0, mode0 = pack
    npaths, nsteps = noise.shape
    out = np.empty((npaths, nsteps + 1))
    x = np.full(npaths, float(x0))
    mode = np.full(npaths, int(mode0), dtype=np.int64)
    out[:, 0] = x
    for k in range(nsteps):
        x, mode = _patchwork_step(x, mode, noise[:, k], dt, eps,
                                  bps, aL, aR, sL, sR, a0, s0)
        out[:, k + 1] = x
    return out
