"""Compiled replica drivers for the d = 3 nearest-neighbor lattice.

Point-started layers live on the l1 ball of radius N in a parity-packed
layout: a site (a, b, c) with |a|+|b|+|c| <= N and the parity of the current
time is stored at packed index (a, b, t) with c = 2t - N - s and
s = (N + k - |a| - |b|) mod 2.  In that layout all six stencil reads are
contiguous in t, so every pass over a row vectorizes.

Each layer is carried as B_k(x) = W_hat_k(x) / W_{k-1}, whose total is the
one-step mass ratio g_k = W_k / W_{k-1}; log W accumulates sum(log g_k).
Values below 1e-290 relative scale are flushed to zero (and accounted) to
keep the fringe of the cone out of denormal arithmetic.
"""

import numpy as np
from numba import njit

from ._rand import (mix64, absorb, u01, ndtri_central, ndtri_tail,
                    exp_bounded, POW2_TABLE)

FAMILY_GAUSSIAN = 0
FAMILY_TWO_POINT = 1
FAMILY_UNIFORM = 2

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_U21 = np.uint64(21)
_U42 = np.uint64(42)
_TINY = 1e-290
_NO_OVERRIDE = -(1 << 30)


@njit(cache=True, fastmath=True, inline="always")
def _fill_tails(urow, wrow, m):
    for i in range(m):
        u = urow[i]
        if u < 0.075 or u > 0.925:
            wrow[i] = ndtri_tail(u)


@njit(cache=True, fastmath=True)
def _zero_coverage(buf, N, astride, rowstride, off):
    """Zero every slot a replica of horizon N can have written."""
    for a in range(-N, N + 1):
        for b in range(-(N - abs(a)), N - abs(a) + 1):
            base = (a + off) * astride + (b + off) * rowstride
            for t in range(0, N + 3):
                buf[base + t] = 0.0


@njit(cache=True, fastmath=True)
def _point_replica(key, N, beta, lam, family, p0, p1, p2, wa, wb,
                   grid_times, log_thresholds,
                   ov_a, ov_b, ov_c, ov_val, has_override,
                   prev, cur, urow, wrow,
                   out_grid, out_cross, out_misc, pow2):
    off = N + 1
    LL = 2 * N + 3
    TT = N + 3
    astride = LL * TT
    rowstride = TT

    s0 = N & 1
    t0 = (N + s0) // 2
    prev[off * astride + off * rowstride + t0 + 1] = 1.0

    logW = 0.0
    sup_logW = 0.0
    sup_argn = 0.0
    sup_logWhat = 0.0
    flushed = 0.0
    inv_prev = 1.0
    maxmu_k = 1.0
    argmax_pack = float((512 * 1024 + 512) * 1024 + 512)

    n_grid = grid_times.shape[0]
    gi = 0
    while gi < n_grid and grid_times[gi] == 0:
        out_grid[gi] = 0.0
        gi += 1
    n_thr = log_thresholds.shape[0]
    ti = 0

    for k in range(1, N + 1):
        prefix = absorb(np.uint64(key), np.uint64(k))
        g = 0.0
        vmax = 0.0
        amax = 0
        bmax = 0
        layer_flushed = 0.0
        ovr_a = ov_a[k] if has_override else _NO_OVERRIDE
        for a in range(-k, k + 1):
            aa = a if a >= 0 else -a
            rb = k - aa
            abase = (a + off) * astride
            apack = np.uint64(a + (1 << 20))
            for b in range(-rb, rb + 1):
                ab = b if b >= 0 else -b
                rc = k - aa - ab
                s = (N + rc) & 1  # parity selector: c = 2t - N - s
                tlo = (N + s - rc) >> 1
                m = rc + 1
                base = abase + (b + off) * rowstride + 1  # +1: t halo
                bm = base - astride
                bp = base + astride
                bl = base - rowstride
                br = base + rowstride
                rowpack = apack | (np.uint64(b + (1 << 20)) << _U21)
                cb = 2 * tlo - N - s + (1 << 20)
                # fused pass: stencil gather + counter hash (+ central z)
                if family == FAMILY_GAUSSIAN:
                    for i in range(m):
                        t = tlo + i
                        cur[base + t] = (prev[bm + t] + prev[bp + t]
                                         + prev[bl + t] + prev[br + t]
                                         + prev[base + t - s]
                                         + prev[base + t + 1 - s]) * 0.16666666666666666
                        pack = rowpack | (np.uint64(cb + 2 * i) << _U42)
                        h = mix64(prefix ^ (pack + _GOLD))
                        u = u01(h)
                        urow[i] = u
                        wrow[i] = ndtri_central(u - 0.5)
                    _fill_tails(urow, wrow, m)
                    for i in range(m):
                        wrow[i] = exp_bounded(beta * wrow[i] - lam, pow2)
                else:
                    for i in range(m):
                        t = tlo + i
                        cur[base + t] = (prev[bm + t] + prev[bp + t]
                                         + prev[bl + t] + prev[br + t]
                                         + prev[base + t - s]
                                         + prev[base + t + 1 - s]) * 0.16666666666666666
                        pack = rowpack | (np.uint64(cb + 2 * i) << _U42)
                        h = mix64(prefix ^ (pack + _GOLD))
                        urow[i] = u01(h)
                    if family == FAMILY_TWO_POINT:
                        for i in range(m):
                            wrow[i] = wa if urow[i] < p2 else wb
                    else:
                        for i in range(m):
                            wrow[i] = exp_bounded(
                                beta * (p0 + urow[i] * (p1 - p0)) - lam, pow2)
                if ovr_a == a and ov_b[k] == b:
                    tov = (ov_c[k] + N + s) >> 1
                    wrow[tov - tlo] = exp_bounded(beta * ov_val[k] - lam, pow2)
                # writeback: scale, flush, row totals (vector-reducible)
                rsum = 0.0
                rmax = 0.0
                for i in range(m):
                    t = tlo + i
                    v = cur[base + t] * wrow[i] * inv_prev
                    keep = v >= _TINY
                    layer_flushed += v * (not keep)
                    v = v * keep
                    cur[base + t] = v
                    rsum += v
                    rmax = max(rmax, v)
                g += rsum
                if rmax > vmax:
                    vmax = rmax
                    amax = a
                    bmax = b
        # locate the argmax site by rescanning only the winning row
        aa = amax if amax >= 0 else -amax
        ab = bmax if bmax >= 0 else -bmax
        rc = k - aa - ab
        s = (N + rc) & 1
        tlo = (N + s - rc) >> 1
        base = (amax + off) * astride + (bmax + off) * rowstride + 1
        tmax = tlo
        for t in range(tlo, tlo + rc + 1):
            if cur[base + t] == vmax:
                tmax = t
        cmax = 2 * tmax - N - s

        logW += np.log(g)
        inv_prev = 1.0 / g
        flushed += layer_flushed * inv_prev
        maxmu_k = vmax * inv_prev
        argmax_pack = ((float(amax + 512) * 1024.0 + float(bmax + 512))
                       * 1024.0 + float(cmax + 512))
        logWhat_k = logW + np.log(maxmu_k)
        if logW > sup_logW:
            sup_logW = logW
            sup_argn = float(k)
        if logWhat_k > sup_logWhat:
            sup_logWhat = logWhat_k
        while gi < n_grid and grid_times[gi] == k:
            out_grid[gi] = logW
            gi += 1
        while ti < n_thr and logW >= log_thresholds[ti]:
            out_cross[4 * ti] = float(k)
            out_cross[4 * ti + 1] = logW
            out_cross[4 * ti + 2] = maxmu_k
            out_cross[4 * ti + 3] = logWhat_k
            ti += 1
        tmp = prev
        prev = cur
        cur = tmp

    out_misc[0] = logW
    out_misc[1] = sup_logW
    out_misc[2] = sup_argn
    out_misc[3] = sup_logWhat
    out_misc[4] = flushed
    out_misc[5] = maxmu_k
    out_misc[6] = argmax_pack


@njit(cache=True, fastmath=True)
def run_point_chunk(keys, N, beta, lam, family, p0, p1, p2,
                    grid_times, log_thresholds,
                    ov_a, ov_b, ov_c, ov_val, has_override,
                    prev, cur, urow, wrow,
                    out_grid, out_cross, out_misc, pow2):
    """Run a chunk of independent point-started replicas back to back."""
    off = N + 1
    LL = 2 * N + 3
    TT = N + 3
    wa = 0.0
    wb = 0.0
    if family == FAMILY_TWO_POINT:
        wa = exp_bounded(beta * p0 - lam, pow2)
        wb = exp_bounded(beta * p1 - lam, pow2)
    R = keys.shape[0]
    for rep in range(R):
        if rep > 0:
            _zero_coverage(prev, N, LL * TT, TT, off)
            _zero_coverage(cur, N, LL * TT, TT, off)
        if has_override:
            _point_replica(keys[rep], N, beta, lam, family, p0, p1, p2, wa, wb,
                           grid_times, log_thresholds,
                           ov_a[rep], ov_b[rep], ov_c[rep], ov_val[rep], True,
                           prev, cur, urow, wrow,
                           out_grid[rep], out_cross[rep], out_misc[rep], pow2)
        else:
            _point_replica(keys[rep], N, beta, lam, family, p0, p1, p2, wa, wb,
                           grid_times, log_thresholds,
                           ov_a[0], ov_b[0], ov_c[0], ov_val[0], False,
                           prev, cur, urow, wrow,
                           out_grid[rep], out_cross[rep], out_misc[rep], pow2)


@njit(cache=True, fastmath=True)
def _wrap_halo3(buf, L):
    """Copy periodic halo faces of an (L+2)^3 flat cube."""
    S2 = (L + 2) * (L + 2)
    S1 = L + 2
    for i in range(L + 2):
        for j in range(L + 2):
            buf[i * S2 + j * S1 + 0] = buf[i * S2 + j * S1 + L]
            buf[i * S2 + j * S1 + L + 1] = buf[i * S2 + j * S1 + 1]
    for i in range(L + 2):
        for z in range(L + 2):
            buf[i * S2 + 0 * S1 + z] = buf[i * S2 + L * S1 + z]
            buf[i * S2 + (L + 1) * S1 + z] = buf[i * S2 + 1 * S1 + z]
    for j in range(L + 2):
        for z in range(L + 2):
            buf[0 * S2 + j * S1 + z] = buf[L * S2 + j * S1 + z]
            buf[(L + 1) * S2 + j * S1 + z] = buf[1 * S2 + j * S1 + z]


@njit(cache=True, fastmath=True)
def run_plane3(key, n_steps, B, beta, lam, family, p0, p1, p2,
               f_arr, prev, cur, urow, wrow, out, pow2):
    """Evolve the plane-started field on a periodic box of half-width B.

    f_arr holds the test function on the box (flat, core indexing).
    out[0] = sum f * Y(n), out[1] = sum f, out[2] = mean of Y over the box.
    """
    L = 2 * B + 1
    S2 = (L + 2) * (L + 2)
    S1 = L + 2
    wa = 0.0
    wb = 0.0
    if family == FAMILY_TWO_POINT:
        wa = exp_bounded(beta * p0 - lam, pow2)
        wb = exp_bounded(beta * p1 - lam, pow2)
    for i in range(L):
        for j in range(L):
            base = (i + 1) * S2 + (j + 1) * S1 + 1
            for z in range(L):
                prev[base + z] = 1.0
    _wrap_halo3(prev, L)
    for k in range(1, n_steps + 1):
        prefix = absorb(np.uint64(key), np.uint64(k))
        for i in range(L):
            a = i - B
            apack = np.uint64(a + (1 << 20))
            for j in range(L):
                b = j - B
                base = (i + 1) * S2 + (j + 1) * S1 + 1
                rowpack = apack | (np.uint64(b + (1 << 20)) << _U21)
                cb = -B + (1 << 20)
                for z in range(L):
                    cur[base + z] = (prev[base + z - S2] + prev[base + z + S2]
                                     + prev[base + z - S1] + prev[base + z + S1]
                                     + prev[base + z - 1] + prev[base + z + 1]
                                     ) * 0.16666666666666666
                    pack = rowpack | (np.uint64(cb + z) << _U42)
                    h = mix64(prefix ^ (pack + _GOLD))
                    urow[z] = u01(h)
                if family == FAMILY_GAUSSIAN:
                    for z in range(L):
                        wrow[z] = ndtri_central(urow[z] - 0.5)
                    _fill_tails(urow, wrow, L)
                    for z in range(L):
                        wrow[z] = exp_bounded(beta * wrow[z] - lam, pow2)
                elif family == FAMILY_TWO_POINT:
                    for z in range(L):
                        wrow[z] = wa if urow[z] < p2 else wb
                else:
                    for z in range(L):
                        wrow[z] = exp_bounded(
                            beta * (p0 + urow[z] * (p1 - p0)) - lam, pow2)
                for z in range(L):
                    cur[base + z] = cur[base + z] * wrow[z]
        _wrap_halo3(cur, L)
        tmp = prev
        prev = cur
        cur = tmp
    sfy = 0.0
    sf = 0.0
    sy = 0.0
    for i in range(L):
        for j in range(L):
            base = (i + 1) * S2 + (j + 1) * S1 + 1
            fbase = (i * L + j) * L
            for z in range(L):
                y = prev[base + z]
                f = f_arr[fbase + z]
                sfy += f * y
                sf += f
                sy += y
    out[0] = sfy
    out[1] = sf
    out[2] = sy / (L * L * L)


# ---------------------------------------------------------------------------
# Python-side wrappers
# ---------------------------------------------------------------------------

class PointBuffers3:
    """Reusable packed buffers for point-started replicas of horizon N."""

    def __init__(self, N):
        self.N = N
        LL = 2 * N + 3
        TT = N + 3
        self.prev = np.zeros(LL * LL * TT)
        self.cur = np.zeros(LL * LL * TT)
        self.urow = np.empty(N + 2)
        self.wrow = np.empty(N + 2)
        self._astride = LL * TT
        self._rowstride = TT
        self._off = N + 1
        self._dirty = False

    def reset(self):
        if self._dirty:
            _zero_coverage(self.prev, self.N, self._astride, self._rowstride,
                           self._off)
            _zero_coverage(self.cur, self.N, self._astride, self._rowstride,
                           self._off)
        self._dirty = True


_DUMMY_OV = (np.full((1, 1), _NO_OVERRIDE, dtype=np.int64),
             np.zeros((1, 1), dtype=np.int64),
             np.zeros((1, 1), dtype=np.int64),
             np.zeros((1, 1)))


def run_point_replicas(keys, N, beta, lam, family, params, buffers,
                       grid_times=None, thresholds=None, overrides=None):
    """Run replicas for the given stream keys; returns dict of output arrays.

    overrides, when present, is (ov_a, ov_b, ov_c, ov_val) with one row per
    replica and one column per time layer (value at the row's site replaces
    the hashed draw at that layer).
    """
    keys = np.asarray(keys, dtype=np.uint64)
    R = len(keys)
    gt = np.asarray(grid_times if grid_times is not None else [], dtype=np.int64)
    thr = np.asarray(thresholds if thresholds is not None else [],
                     dtype=np.float64)
    log_thr = np.log(thr) if len(thr) else thr
    if overrides is not None:
        ov_a, ov_b, ov_c, ov_val = overrides
        has_ov = True
    else:
        ov_a, ov_b, ov_c, ov_val = _DUMMY_OV
        has_ov = False
    out_grid = np.full((R, len(gt)), np.nan)
    out_cross = np.full((R, 4 * len(thr)), -1.0)
    out_misc = np.zeros((R, 8))
    buffers.reset()
    buffers._dirty = True
    run_point_chunk(keys, N, beta, lam, family,
                    params[0], params[1], params[2],
                    gt, log_thr, ov_a, ov_b, ov_c, ov_val, has_ov,
                    buffers.prev, buffers.cur, buffers.urow, buffers.wrow,
                    out_grid, out_cross, out_misc, POW2_TABLE)
    return {
        "log_w_final": out_misc[:, 0],
        "sup_log_w": out_misc[:, 1],
        "sup_arg_n": out_misc[:, 2].astype(np.int64),
        "sup_log_w_pp": out_misc[:, 3],
        "flushed": out_misc[:, 4],
        "max_mu_final": out_misc[:, 5],
        "argmax_packed": out_misc[:, 6],
        "log_w_grid": out_grid,
        "crossings": out_cross.reshape(R, -1, 4),
    }


def unpack_argmax(packed):
    """Decode the packed argmax site back to (a, b, c)."""
    v = int(round(packed))
    c = v % 1024 - 512
    v //= 1024
    b = v % 1024 - 512
    a = v // 1024 - 512
    return a, b, c


def run_plane_replica(key, n_steps, B, beta, lam, family, params, f_arr,
                      bufs=None):
    """One plane-started replica; returns (sum fY, sum f, mean Y)."""
    L = 2 * B + 1
    if bufs is None:
        prev = np.zeros((L + 2) ** 3)
        cur = np.zeros((L + 2) ** 3)
        urow = np.empty(L)
        wrow = np.empty(L)
    else:
        prev, cur, urow, wrow = bufs
    out = np.zeros(3)
    run_plane3(np.uint64(key), n_steps, B, beta, lam, family,
               params[0], params[1], params[2],
               np.ascontiguousarray(f_arr, dtype=np.float64).ravel(),
               prev, cur, urow, wrow, out, POW2_TABLE)
    return out[0], out[1], out[2]


def plane_buffers(B):
    L = 2 * B + 1
    return (np.zeros((L + 2) ** 3), np.zeros((L + 2) ** 3),
            np.empty(L), np.empty(L))
