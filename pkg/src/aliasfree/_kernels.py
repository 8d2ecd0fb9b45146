"""Compiled tile kernel for the fused filtered leaky ReLU.

One call processes every (channel, tile) pair. For each pair the upsampled
region, including the halo needed by the downsampling filter, lives in a
per-tile scratch buffer. The upsampling loops visit only the taps that hit
real (non-interleaved) input samples, and the downsampling loops evaluate
only the output samples that are kept.
"""

from __future__ import annotations

import os

import numba as nb
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is often too old; workqueue is always available
    nb.config.THREADING_LAYER = "workqueue"


@nb.njit(cache=True)
def _gather(x, c, row_lo, col_lo, gy0, gy1, gx0, gx1):
    """Input samples ``gy0..gy1`` x ``gx0..gx1`` (global), zero outside the stored extent."""
    h, w = x.shape[1], x.shape[2]
    out = np.zeros((gy1 - gy0 + 1, gx1 - gx0 + 1), dtype=x.dtype)
    for i in range(max(gy0, row_lo), min(gy1, row_lo + h - 1) + 1):
        for j in range(max(gx0, col_lo), min(gx1, col_lo + w - 1) + 1):
            out[i - gy0, j - gx0] = x[c, i - row_lo, j - col_lo]
    return out


@nb.njit(cache=True)
def _up_separable(x, c, row_lo, col_lo, hu, up, pu, ty, tx, tny, tnx, out):
    nu = hu.shape[0]
    gy0 = (ty + pu - nu + 1 + up - 1) // up
    gx0 = (tx + pu - nu + 1 + up - 1) // up
    gy1 = (ty + tny - 1 + pu) // up
    gx1 = (tx + tnx - 1 + pu) // up
    xin = _gather(x, c, row_lo, col_lo, gy0, gy1, gx0, gx1)
    rows = xin.shape[0]
    # columns first, one output phase at a time
    tmp = np.empty((rows, tnx), dtype=out.dtype)
    for kx in range(up):
        ax0 = (tx + pu - kx + up - 1) // up
        ax1 = (tx + tnx - 1 + pu - kx) // up
        nax = ax1 - ax0 + 1
        if nax <= 0:
            continue
        acc = np.zeros((rows, nax), dtype=out.dtype)
        jx = 0
        while kx + up * jx < nu:
            coef = hu[kx + up * jx] * up
            cx = ax0 - jx - gx0
            for i in range(rows):
                src = xin[i]
                dst = acc[i]
                for j in range(nax):
                    dst[j] += coef * src[cx + j]
            jx += 1
        ox = up * ax0 - pu + kx - tx
        for i in range(rows):
            for j in range(nax):
                tmp[i, ox + up * j] = acc[i, j]
    for i in range(tny):
        u = ty + i
        g = (u + pu) // up
        k = u - up * g + pu
        dst = out[i]
        dst[:] = 0.0
        while k < nu:
            src = tmp[g - gy0]
            hk = hu[k] * up
            for j in range(tnx):
                dst[j] += hk * src[j]
            g -= 1
            k += up


@nb.njit(cache=True)
def _up_full(x, c, row_lo, col_lo, hu2, up, pu, ty, tx, tny, tnx, out):
    nu = hu2.shape[0]
    gain = up * up
    gy0 = (ty + pu - nu + 1 + up - 1) // up
    gx0 = (tx + pu - nu + 1 + up - 1) // up
    gy1 = (ty + tny - 1 + pu) // up
    gx1 = (tx + tnx - 1 + pu) // up
    xin = _gather(x, c, row_lo, col_lo, gy0, gy1, gx0, gx1)
    # temporary sample u = up*a - pu + k takes sum_j x[a - j] * h[k + up*j]
    for ky in range(up):
        ay0 = (ty + pu - ky + up - 1) // up
        ay1 = (ty + tny - 1 + pu - ky) // up
        nay = ay1 - ay0 + 1
        if nay <= 0:
            continue
        for kx in range(up):
            ax0 = (tx + pu - kx + up - 1) // up
            ax1 = (tx + tnx - 1 + pu - kx) // up
            nax = ax1 - ax0 + 1
            if nax <= 0:
                continue
            acc = np.zeros((nay, nax), dtype=out.dtype)
            jy = 0
            while ky + up * jy < nu:
                jx = 0
                while kx + up * jx < nu:
                    coef = hu2[ky + up * jy, kx + up * jx]
                    cx = ax0 - jx - gx0
                    for i in range(nay):
                        src = xin[ay0 + i - jy - gy0]
                        dst = acc[i]
                        for j in range(nax):
                            dst[j] += coef * src[cx + j]
                    jx += 1
                jy += 1
            oy = up * ay0 - pu + ky - ty
            ox = up * ax0 - pu + kx - tx
            for i in range(nay):
                for j in range(nax):
                    out[oy + up * i, ox + up * j] = acc[i, j] * gain


@nb.njit(cache=True)
def _activate(t, slope, gain, clamp, use_clamp):
    for i in range(t.shape[0]):
        for j in range(t.shape[1]):
            v = t[i, j]
            if v < 0:
                v *= slope
            v *= gain
            if use_clamp:
                if v > clamp:
                    v = clamp
                elif v < -clamp:
                    v = -clamp
            t[i, j] = v


@nb.njit(cache=True)
def _column_phases(t, down):
    """``out[r, i, j] = t[i, down * j + r]``, zero past the end."""
    rows = t.shape[0]
    width = (t.shape[1] + down - 1) // down
    out = np.zeros((down, rows, width), dtype=t.dtype)
    for r in range(down):
        count = (t.shape[1] - r + down - 1) // down
        for i in range(rows):
            src = t[i]
            dst = out[r, i]
            for j in range(count):
                dst[j] = src[down * j + r]
    return out


@nb.njit(cache=True)
def _down_separable(t, hd, down, ny, nx, y, c, oy, ox):
    nd = hd.shape[0]
    rows = t.shape[0]
    phases = _column_phases(t, down)
    tmp = np.zeros((rows, nx), dtype=t.dtype)
    for k in range(nd):
        coef = hd[k]
        ph = phases[k % down]
        shift = k // down
        for i in range(rows):
            src = ph[i]
            dst = tmp[i]
            for q in range(nx):
                dst[q] += coef * src[q + shift]
    acc = np.zeros(nx, dtype=t.dtype)
    for p in range(ny):
        acc[:] = 0.0
        base = down * p
        for k in range(nd):
            hk = hd[k]
            src = tmp[base + k]
            for q in range(nx):
                acc[q] += hk * src[q]
        for q in range(nx):
            y[c, oy + p, ox + q] = acc[q]


@nb.njit(cache=True)
def _down_full(t, hd2, down, ny, nx, y, c, oy, ox):
    nd = hd2.shape[0]
    phases = _column_phases(t, down)
    acc = np.zeros((ny, nx), dtype=t.dtype)
    for ky in range(nd):
        for kx in range(nd):
            coef = hd2[ky, kx]
            ph = phases[kx % down]
            shift = kx // down
            for p in range(ny):
                src = ph[down * p + ky]
                dst = acc[p]
                for q in range(nx):
                    dst[q] += coef * src[q + shift]
    for p in range(ny):
        for q in range(nx):
            y[c, oy + p, ox + q] = acc[p, q]


@nb.njit(cache=True, parallel=True)
def fused_filtered_lrelu(
    x, row_lo, col_lo, hu, sep_up, up, hd, sep_down, down,
    out_lo, out_len, tile, slope, gain, clamp, use_clamp, y,
):
    """Fill ``y[c, :, :]`` with global output samples ``out_lo .. out_lo + out_len - 1``.

    ``hu`` and ``hd`` are square 2D taps, or shape ``(1, n)`` holding 1D taps
    when the matching ``sep_*`` flag is set.
    """
    nu = hu.shape[1]
    nd = hd.shape[1]
    pu = (nu - up) // 2
    pd = (nd - down) // 2
    channels = x.shape[0]
    per_axis = (out_len + tile - 1) // tile
    jobs = channels * per_axis * per_axis
    for job in nb.prange(jobs):
        c = job // (per_axis * per_axis)
        rest = job % (per_axis * per_axis)
        by = rest // per_axis
        bx = rest % per_axis
        y0 = by * tile
        x0 = bx * tile
        ny = min(tile, out_len - y0)
        nx = min(tile, out_len - x0)
        ty = down * (out_lo + y0) - pd
        tx = down * (out_lo + x0) - pd
        tny = down * (ny - 1) + nd
        tnx = down * (nx - 1) + nd
        t = np.empty((tny, tnx), dtype=y.dtype)
        if sep_up:
            _up_separable(x, c, row_lo, col_lo, hu[0], up, pu, ty, tx, tny, tnx, t)
        else:
            _up_full(x, c, row_lo, col_lo, hu, up, pu, ty, tx, tny, tnx, t)
        _activate(t, slope, gain, clamp, use_clamp)
        if sep_down:
            _down_separable(t, hd[0], down, ny, nx, y, c, y0, x0)
        else:
            _down_full(t, hd, down, ny, nx, y, c, y0, x0)
