"""Numba-jitted simulation kernels (per-path inner loops).

Same call surface and semantics as `_kernels_np`; see that module for the
reference implementation.  The piecewise evaluation is spelled out inline in
each loop: a helper call here costs more than the whole step.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_EMPTY = np.empty(0, dtype=np.float64)


@njit(cache=True, nogil=True)
def _em_terminal(noise, x0, dt, eps,
                 a_bps, a_c0, a_c1, a_atv, a_R,
                 s_bps, s_c0, s_c1, s_atv, s_R,
                 use_tilt, t_bps, t_c0, t_c1, t_atv, t_R,
                 use_ref, ref):
    npaths, nsteps = noise.shape
    sq = math.sqrt(dt)
    na, ns, nt = a_bps.size, s_bps.size, t_bps.size
    xT = np.empty(npaths)
    logw = np.zeros(npaths)
    dev = np.zeros(npaths)
    for p in range(npaths):
        x = x0
        lw = 0.0
        dv = abs(x0 - ref[0]) if use_ref else 0.0
        for k in range(nsteps):
            xc = x
            if xc > a_R:
                xc = a_R
            elif xc < -a_R:
                xc = -a_R
            i = 0
            hit = False
            a = 0.0
            for j in range(na):
                z = a_bps[j]
                if xc == z:
                    a = a_atv[j]
                    hit = True
                    break
                if xc < z:
                    break
                i += 1
            if not hit:
                a = a_c0[i] + a_c1[i] * xc
            xc = x
            if xc > s_R:
                xc = s_R
            elif xc < -s_R:
                xc = -s_R
            i = 0
            hit = False
            s = 0.0
            for j in range(ns):
                z = s_bps[j]
                if xc == z:
                    s = s_atv[j]
                    hit = True
                    break
                if xc < z:
                    break
                i += 1
            if not hit:
                s = s_c0[i] + s_c1[i] * xc
            xi = noise[p, k]
            if use_tilt:
                xc = x
                if xc > t_R:
                    xc = t_R
                elif xc < -t_R:
                    xc = -t_R
                i = 0
                hit = False
                al = 0.0
                for j in range(nt):
                    z = t_bps[j]
                    if xc == z:
                        al = t_atv[j]
                        hit = True
                        break
                    if xc < z:
                        break
                    i += 1
                if not hit:
                    al = t_c0[i] + t_c1[i] * xc
                lw = lw - (al * (sq * xi) / eps + 0.5 * al * al * dt / (eps * eps))
                x = x + (a + al * s) * dt + eps * s * (sq * xi)
            else:
                x = x + a * dt + eps * s * (sq * xi)
            if use_ref:
                d = abs(x - ref[k + 1])
                if d > dv:
                    dv = d
        xT[p] = x
        logw[p] = lw
        dev[p] = dv
    return xT, logw, dev


@njit(cache=True, nogil=True)
def _em_paths(noise, x0, dt, eps,
              a_bps, a_c0, a_c1, a_atv, a_R,
              s_bps, s_c0, s_c1, s_atv, s_R,
              use_tilt, t_bps, t_c0, t_c1, t_atv, t_R):
    npaths, nsteps = noise.shape
    sq = math.sqrt(dt)
    na, ns, nt = a_bps.size, s_bps.size, t_bps.size
    out = np.empty((npaths, nsteps + 1))
    for p in range(npaths):
        x = x0
        out[p, 0] = x
        for k in range(nsteps):
            xc = x
            if xc > a_R:
                xc = a_R
            elif xc < -a_R:
                xc = -a_R
            i = 0
            hit = False
            a = 0.0
            for j in range(na):
                z = a_bps[j]
                if xc == z:
                    a = a_atv[j]
                    hit = True
                    break
                if xc < z:
                    break
                i += 1
            if not hit:
                a = a_c0[i] + a_c1[i] * xc
            xc = x
            if xc > s_R:
                xc = s_R
            elif xc < -s_R:
                xc = -s_R
            i = 0
            hit = False
            s = 0.0
            for j in range(ns):
                z = s_bps[j]
                if xc == z:
                    s = s_atv[j]
                    hit = True
                    break
                if xc < z:
                    break
                i += 1
            if not hit:
                s = s_c0[i] + s_c1[i] * xc
            xi = noise[p, k]
            if use_tilt:
                xc = x
                if xc > t_R:
                    xc = t_R
                elif xc < -t_R:
                    xc = -t_R
                i = 0
                hit = False
                al = 0.0
                for j in range(nt):
                    z = t_bps[j]
                    if xc == z:
                        al = t_atv[j]
                        hit = True
                        break
                    if xc < z:
                        break
                    i += 1
                if not hit:
                    al = t_c0[i] + t_c1[i] * xc
                x = x + (a + al * s) * dt + eps * s * (sq * xi)
            else:
                x = x + a * dt + eps * s * (sq * xi)
            out[p, k + 1] = x
    return out


@njit(cache=True, nogil=True)
def _patchwork(noise, x0, dt, eps, bps, aL, aR, sL, sR, a0, s0, mode0, keep_paths):
    npaths, nsteps = noise.shape
    sq = math.sqrt(dt)
    rows = npaths if keep_paths else 1
    out = np.empty((rows, nsteps + 1))
    xT = np.empty(npaths)
    for p in range(npaths):
        x = x0
        mode = mode0
        if keep_paths:
            out[p, 0] = x
        for k in range(nsteps):
            if mode < 0:
                a = a0
                s = s0
            else:
                z = bps[mode]
                if x >= z:
                    a = aR[mode]
                    s = sR[mode]
                else:
                    a = aL[mode]
                    s = sL[mode]
            xn = x + a * dt + eps * s * (sq * noise[p, k])
            best = -1
            bestd = np.inf
            for j in range(bps.size):
                if j == mode:
                    continue
                zj = bps[j]
                if (x - zj) * (xn - zj) < 0.0 or xn == zj:
                    d = abs(zj - x)
                    if d < bestd:
                        bestd = d
                        best = j
            if best >= 0:
                mode = best
            x = xn
            if keep_paths:
                out[p, k + 1] = x
        xT[p] = x
    return xT, out


def em_terminal(noise, x0, dt, eps, a_pack, s_pack, tilt_pack=None, ref=None):
    tilt_empty = (_EMPTY, np.zeros(1), np.zeros(1), _EMPTY, 1e300)
    t = tilt_pack if tilt_pack is not None else tilt_empty
    r = ref if ref is not None else np.zeros(1)
    return _em_terminal(noise, float(x0), dt, eps, *a_pack, *s_pack,
                        tilt_pack is not None, *t, ref is not None, r)


def em_paths(noise, x0, dt, eps, a_pack, s_pack, tilt_pack=None):
    tilt_empty = (_EMPTY, np.zeros(1), np.zeros(1), _EMPTY, 1e300)
    t = tilt_pack if tilt_pack is not None else tilt_empty
    return _em_paths(noise, float(x0), dt, eps, *a_pack, *s_pack,
                     tilt_pack is not None, *t)


def patchwork_terminal(noise, x0, dt, eps, pack):
    bps, aL, aR, sL, sR, a0, s0, mode0 = pack
    xT, _ = _patchwork(noise, float(x0), dt, eps, bps, aL, aR, sL, sR,
                       float(a0), float(s0), int(mode0), False)
    return xT


def patchwork_paths(noise, x0, dt, eps, pack):
    bps, aL, aR, sL, sR, a0, s0, mode0 = pack
    _, out = _patchwork(noise, float(x0), dt, eps, bps, aL, aR, sL, sR,
                        float(a0), float(s0), int(mode0), True)
    return out
