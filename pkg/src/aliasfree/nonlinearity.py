"""Upsample -> leaky ReLU -> downsample, in a plain and a fused tiled form.

The plain form materializes the zero-interleaved signal and the full-rate
intermediate, convolving with ``scipy.signal.fftconvolve`` (full mode, so no
wraparound). The fused form is a compiled kernel that walks non-overlapping output tiles;
for each tile it upsamples the input region including filter halos (skipping
the interleaved zeros), applies the nonlinearity in place and evaluates the
downsampling filter only at the kept samples.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .filters import DiscreteFilter, resampling_filter
from ._kernels import fused_filtered_lrelu
from .resample import FeatureMap, ResampleError, _phase_offset, check_finite

DEFAULT_SLOPE = 0.2
DEFAULT_GAIN = math.sqrt(2.0)
DEFAULT_TILE = 32


def default_clamp(dtype) -> Optional[float]:
    return 256.0 if np.dtype(dtype) == np.float32 else None


@dataclass(frozen=True)
class _Geometry:
    up: int
    down: int
    rate_in: float
    rate_out: float
    in_lo: int
    out_lo: int
    out_len: int


def _geometry(fmap: FeatureMap, up: int, down: int, fu: DiscreteFilter, fd: DiscreteFilter, out_margin):
    for name, f in (("up", up), ("down", down)):
        if f < 1 or int(f) != f:
            raise ResampleError(f"{name} factor must be a positive integer, got {f}")
    tmp_rate = fmap.rate * up
    for what, filt in (("upsampling", fu), ("downsampling", fd)):
        if not math.isclose(filt.rate, tmp_rate, rel_tol=1e-12):
            raise ResampleError(f"{what} filter has rate {filt.rate}, expected {tmp_rate}")
    _phase_offset(fu.size, up)
    _phase_offset(fd.size, down)
    canvas_tmp = fmap.canvas_samples * up
    if canvas_tmp % down:
        raise ResampleError(f"canvas of {canvas_tmp} samples at the temporary rate is not divisible by {down}")
    rate_out = tmp_rate / down
    if out_margin is None:
        out_margin = (fmap.margin * up) // down
    out_len = canvas_tmp // down + 2 * out_margin
    return _Geometry(up, down, fmap.rate, rate_out, fmap.lo, -out_margin, out_len)


def _activate(t: np.ndarray, slope: float, gain: float, clamp: Optional[float]) -> np.ndarray:
    t = np.where(t >= 0, t, t * slope)
    t *= gain
    if clamp is not None:
        np.clip(t, -clamp, clamp, out=t)
    return t


# -- reference -------------------------------------------------------------


def _full_conv(x: np.ndarray, filt: DiscreteFilter) -> np.ndarray:
    if filt.separable:
        h = filt.taps.astype(x.dtype)
        x = fftconvolve(x, h[None, :], mode="full", axes=(-1,))
        return fftconvolve(x, h[:, None], mode="full", axes=(-2,))
    return fftconvolve(x, filt.taps.astype(x.dtype), mode="full", axes=(-2, -1))


def _reference_2d(x, g: _Geometry, fu, fd, slope, gain, clamp):
    up, down = g.up, g.down
    k = x.shape[-1]
    z = np.zeros((k * up, k * up), dtype=x.dtype)
    z[::up, ::up] = x
    t = _full_conv(z, fu) * np.asarray(up * up, dtype=x.dtype)
    # t[b] holds the temporary sample at global index u = up*in_lo - pu + b
    u0 = up * g.in_lo - (fu.size - up) // 2
    t = _activate(t, slope, gain, clamp)
    y = _full_conv(t, fd)
    # output q lands at y[down*q - pd + nd - 1 - u0]
    pd = (fd.size - down) // 2
    q = g.out_lo + np.arange(g.out_len)
    c = down * q - pd + fd.size - 1 - u0
    ok = (c >= 0) & (c < y.shape[-1])
    out = np.zeros((g.out_len, g.out_len), dtype=x.dtype)
    out[np.ix_(ok, ok)] = y[np.ix_(c[ok], c[ok])]
    return out


def filtered_lrelu_reference(
    fmap: FeatureMap,
    up: int,
    down: int,
    up_filter: DiscreteFilter,
    down_filter: DiscreteFilter,
    slope: float = DEFAULT_SLOPE,
    gain: float = DEFAULT_GAIN,
    clamp: Optional[float] = None,
    out_margin: Optional[int] = None,
    dtype=np.float64,
) -> FeatureMap:
    """Unfused filtered leaky ReLU.

    The temporary rate is ``up * fmap.rate``; the output rate is that divided
    by ``down``. With oversampling ``m`` a rate-preserving layer uses
    ``up = down = m`` and a rate-doubling layer ``up = 2m, down = m``.
    """
    g = _geometry(fmap, up, down, up_filter, down_filter, out_margin)
    x = np.asarray(fmap.data, dtype=dtype)
    lead = x.shape[:-2]
    flat = x.reshape((-1,) + x.shape[-2:])
    out = np.stack([_reference_2d(c, g, up_filter, down_filter, slope, gain, clamp) for c in flat])
    out = out.reshape(lead + out.shape[-2:])
    return check_finite(FeatureMap(out, g.rate_out, -g.out_lo))


# -- fused --------------------------------------------------------------------


def _kernel_taps(filt: DiscreteFilter, dtype) -> np.ndarray:
    taps = filt.taps if not filt.separable else filt.taps[None, :]
    return np.ascontiguousarray(taps, dtype=dtype)


def filtered_lrelu_fused(
    fmap: FeatureMap,
    up: int,
    down: int,
    up_filter: DiscreteFilter,
    down_filter: DiscreteFilter,
    slope: float = DEFAULT_SLOPE,
    gain: float = DEFAULT_GAIN,
    clamp: Optional[float] = None,
    out_margin: Optional[int] = None,
    dtype=np.float64,
    tile: int = DEFAULT_TILE,
) -> FeatureMap:
    """Tiled single-pass equivalent of :func:`filtered_lrelu_reference`.

    ``tile <= 0`` processes the whole output as one tile.
    """
    g = _geometry(fmap, up, down, up_filter, down_filter, out_margin)
    dtype = np.dtype(dtype)
    x = np.asarray(fmap.data, dtype=dtype)
    lead = x.shape[:-2]
    flat = np.ascontiguousarray(x.reshape((-1,) + x.shape[-2:]))
    out = np.empty((flat.shape[0], g.out_len, g.out_len), dtype=dtype)
    if tile <= 0:
        tile = g.out_len
    fused_filtered_lrelu(
        flat, g.in_lo, g.in_lo,
        _kernel_taps(up_filter, dtype), up_filter.separable, up,
        _kernel_taps(down_filter, dtype), down_filter.separable, down,
        g.out_lo, g.out_len, int(tile),
        float(slope), float(gain), float(clamp or 0.0), clamp is not None, out,
    )
    out = out.reshape(lead + out.shape[-2:])
    return check_finite(FeatureMap(out, g.rate_out, -g.out_lo))


# -- benchmark ------------------------------------------------------------------

BENCH_FACTORS = ((2, 2), (4, 2), (2, 4))
BENCH_COLUMNS = ("up", "down", "sep_up", "sep_down", "ref_ms", "fused_ms", "speedup")


@dataclass(frozen=True)
class BenchRow:
    up: int
    down: int
    sep_up: bool
    sep_down: bool
    ref_ms: float
    fused_ms: float

    @property
    def speedup(self) -> float:
        return self.ref_ms / self.fused_ms if self.fused_ms > 0 else math.inf


def _best_ms(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench_fused(
    size: int = 512,
    channels: int = 32,
    factors: Iterable = BENCH_FACTORS,
    separability: Sequence = ((True, True), (True, False), (False, True), (False, False)),
    taps: int = 6,
    repeats: int = 1,
    seed: int = 0,
    dtype=np.float64,
    tile: int = DEFAULT_TILE,
) -> List[BenchRow]:
    """Time reference against fused on each (factors x separability) cell.

    The filters are the ones a rate-preserving layer at ``size`` would use:
    cutoff ``size / 4`` with half-width ``size / 4`` and ``taps`` taps per
    input sample, adjusted to the temporary rate.
    """
    rng = np.random.default_rng(seed)
    fmap = FeatureMap(rng.standard_normal((channels, size, size)).astype(dtype), size, 0)
    fc = fh = size / 4
    # compile once outside the timed region
    warm = FeatureMap(np.zeros((1, 8, 8), dtype=dtype), 8, 0)
    rows = []
    for up, down in factors:
        for sep_up, sep_down in separability:
            fu = resampling_filter(fc, fh, size, taps, up, radial=not sep_up)
            fd = resampling_filter(fc, fh, size * up / down, taps, down, radial=not sep_down)
            wu = resampling_filter(2, 2, 8, taps, up, radial=not sep_up)
            wd = resampling_filter(2, 2, 8 * up / down, taps, down, radial=not sep_down)
            filtered_lrelu_fused(warm, up, down, wu, wd, dtype=dtype, tile=tile)
            ref = _best_ms(lambda: filtered_lrelu_reference(fmap, up, down, fu, fd, dtype=dtype), repeats)
            fused = _best_ms(lambda: filtered_lrelu_fused(fmap, up, down, fu, fd, dtype=dtype, tile=tile), repeats)
            rows.append(BenchRow(up, down, sep_up, sep_down, ref, fused))
    return rows


def bench_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r.up, r.down, int(r.sep_up), int(r.sep_down), f"{r.ref_ms:.3f}", f"{r.fused_ms:.3f}", f"{r.speedup:.3f}"])
    return buf.getvalue()
