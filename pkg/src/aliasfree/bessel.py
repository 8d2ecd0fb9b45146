"""Bessel functions needed by the filter constructions.

``i0`` uses the power series, whose terms are all positive so there is no
cancellation. ``j1`` uses the power series for small arguments and Miller's
backward recurrence (normalized with ``J0 + 2 * sum(J_2k) = 1``) elsewhere.
Both are accurate to a few ulps over the argument ranges used here.
"""

from __future__ import annotations

import math

import numpy as np

_SERIES_LIMIT = 4.0
_RESCALE = 1e250


def i0(x):
    """Zeroth-order modified Bessel function of the first kind."""
    x = np.asarray(x, dtype=np.float64)
    half_sq = (0.5 * x) ** 2
    total = np.ones_like(x)
    term = np.ones_like(x)
    k = 1
    while True:
        term = term * half_sq / (k * k)
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
        k += 1
    return total[()] if total.ndim == 0 else total


def _j1_series(x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = half.copy()
    total = term.copy()
    for k in range(1, 40):
        term = -term * half * half / (k * (k + 1))
        total += term
        if np.all(np.abs(term) <= 1e-18 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _j1_miller(x: np.ndarray) -> np.ndarray:
    xmax = float(np.max(x))
    start = 2 * ((int(xmax) + 30 + int(math.sqrt(40.0 * xmax))) // 2)
    j_next = np.zeros_like(x)  # J_{k+1}
    j_cur = np.full_like(x, 1e-30)  # J_k
    norm = np.zeros_like(x)
    j1 = np.zeros_like(x)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next  # J_{k-1}
        j_next, j_cur = j_cur, j_prev
        if k - 1 == 1:
            j1 = j_cur.copy()
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j_cur
        big = np.abs(j_cur) > _RESCALE
        if np.any(big):
            scale = np.where(big, 1.0 / _RESCALE, 1.0)
            j_cur *= scale
            j_next *= scale
            norm *= scale
            j1 *= scale
    norm += j_cur  # J_0
    return j1 / norm


def j1(x):
    """First-order Bessel function of the first kind."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x).ravel()
    out = np.empty_like(ax)
    small = ax < _SERIES_LIMIT
    if np.any(small):
        out[small] = _j1_series(ax[small])
    if np.any(~small):
        out[~small] = _j1_miller(ax[~small])
    out = np.where(x.ravel() < 0, -out, out).reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def jinc(x):
    """``2 J1(pi x) / (pi x)`` with the removable singularity filled in as 1."""
    x = np.asarray(x, dtype=np.float64)
    px = np.pi * x
    safe = np.where(px == 0.0, 1.0, px)
    out = np.where(px == 0.0, 1.0, 2.0 * j1(safe) / safe)
    return out[()] if out.ndim == 0 else out
