"""Feature maps on an extended canvas and integer-factor resampling.

A map with sampling rate ``s`` and margin ``M`` stores ``s + 2M`` samples per
axis; sample ``k`` sits at canvas coordinate ``(k - M + 0.5) / s`` (pixel
centres). All resampling below is expressed with *global* sample indices
``g = k - M`` so that maps with different margins line up exactly. Samples
outside the stored extent are zero.

For a factor ``f`` and an ``n``-tap filter the tap index connecting a
low-rate sample ``g`` to a high-rate sample ``u`` is ``u - f*g + (n - f) / 2``.
``n - f`` must be even, which holds for ``n = taps * f`` with even ``f`` and
for the single-tap identity filter.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .filters import DiscreteFilter, lanczos_kernel

AFT_MAGIC = b"AFT1"
_AFT_HEADER = struct.Struct("<4sIIIId")


class ResampleError(ValueError):
    """Raised for rate, geometry or filter mismatches."""


@dataclass
class FeatureMap:
    """Multi-channel samples of a continuous signal on the extended unit canvas.

    ``data`` has shape ``(..., height, width)``; leading axes are channels and
    optionally a batch axis in front of them.
    """

    data: np.ndarray
    rate: float
    margin: int

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim < 2:
            raise ResampleError("feature map data needs at least two axes")
        if self.margin < 0:
            raise ResampleError(f"margin must be >= 0, got {self.margin}")
        expected = self.canvas_samples + 2 * self.margin
        if self.data.shape[-2:] != (expected, expected):
            raise ResampleError(
                f"rate {self.rate} with margin {self.margin} needs {expected}x{expected} samples, "
                f"got {self.data.shape[-2:]}"
            )

    @property
    def canvas_samples(self) -> int:
        return int(round(self.rate))

    @property
    def channels(self) -> int:
        return self.data.shape[-3] if self.data.ndim >= 3 else 1

    @property
    def height(self) -> int:
        return self.data.shape[-2]

    @property
    def width(self) -> int:
        return self.data.shape[-1]

    @property
    def lo(self) -> int:
        """Global index of the first stored sample."""
        return -self.margin

    def positions(self) -> np.ndarray:
        """Canvas coordinates of the stored samples along one axis."""
        return (np.arange(self.width) - self.margin + 0.5) / self.rate

    def with_data(self, data: np.ndarray) -> "FeatureMap":
        return FeatureMap(data, self.rate, self.margin)

    def canvas(self) -> np.ndarray:
        m = self.margin
        return self.data[..., m : self.height - m, m : self.width - m]


def check_finite(fmap: FeatureMap) -> FeatureMap:
    if not np.all(np.isfinite(fmap.data)):
        raise ResampleError("feature map contains non-finite values")
    return fmap


# -- polyphase kernels on one axis -------------------------------------------


def _phase_offset(ntaps: int, factor: int) -> int:
    if (ntaps - factor) % 2:
        raise ResampleError(
            f"a {ntaps}-tap filter cannot resample by {factor}: sample grids would be misaligned"
        )
    return (ntaps - factor) // 2


def _window_slice(x: np.ndarray, x_lo: int, lo: int, hi: int, axis: int) -> np.ndarray:
    """Samples ``lo..hi`` (global, inclusive) of ``x`` along ``axis``, zero outside."""
    n = x.shape[axis]
    length = hi - lo + 1
    a, b = max(lo, x_lo), min(hi, x_lo + n - 1)
    if a == lo and b == hi:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(lo - x_lo, hi - x_lo + 1)
        return x[tuple(idx)]
    shape = list(x.shape)
    shape[axis] = length
    out = np.zeros(shape, dtype=x.dtype)
    if a <= b:
        dst = [slice(None)] * x.ndim
        src = [slice(None)] * x.ndim
        dst[axis] = slice(a - lo, b - lo + 1)
        src[axis] = slice(a - x_lo, b - x_lo + 1)
        out[tuple(dst)] = x[tuple(src)]
    return out


@dataclass(frozen=True)
class _Polyphase:
    """Tap matrix ``mat[w, r]`` so that ``t[f*a + r] = sum_w x[a - i_hi + w] * mat[w, r]``."""

    i_lo: int
    i_hi: int
    mat: np.ndarray

    @property
    def width(self) -> int:
        return self.i_hi - self.i_lo + 1


def _polyphase(taps: np.ndarray, factor: int) -> _Polyphase:
    n = taps.shape[0]
    p = _phase_offset(n, factor)
    i_lo = min(-((r + p) // factor) for r in range(factor))
    i_hi = max((n - 1 - r - p) // factor for r in range(factor))
    width = i_hi - i_lo + 1
    mat = np.zeros((width, factor), dtype=np.float64)
    for w in range(width):
        for r in range(factor):
            k = factor * (i_hi - w) + r + p
            if 0 <= k < n:
                mat[w, r] = taps[k]
    return _Polyphase(i_lo, i_hi, mat)


def _take(src: np.ndarray, start: int, count: int, step: int = 1) -> np.ndarray:
    return src[..., start : start + step * (count - 1) + 1 : step]


def upfir_axis(x, x_lo, taps, factor, out_lo, out_len, axis=-1, dtype=None):
    """Upsample along ``axis`` by ``factor``; returns global samples ``out_lo..out_lo+out_len-1``.

    Gain ``factor`` is applied so that a constant keeps its level.
    """
    axis = axis % x.ndim
    pp = _polyphase(np.asarray(taps, dtype=np.float64), factor)
    mat = pp.mat * factor
    if dtype is not None:
        mat = mat.astype(dtype)
    a_lo = out_lo // factor
    a_hi = (out_lo + out_len - 1) // factor
    count = a_hi - a_lo + 1
    src = np.moveaxis(_window_slice(x, x_lo, a_lo - pp.i_hi, a_hi - pp.i_lo, axis), axis, -1)
    t = np.zeros(src.shape[:-1] + (count, factor), dtype=np.result_type(src, mat))
    for w in range(pp.width):
        seg = _take(src, w, count)[..., None]
        t += seg * mat[w]
    t = t.reshape(t.shape[:-2] + (-1,))
    start = out_lo - factor * a_lo
    return np.moveaxis(t[..., start : start + out_len], -1, axis)


def firdown_axis(x, x_lo, taps, factor, out_lo, out_len, axis=-1, dtype=None):
    """Filter along ``axis`` and keep one sample per group of ``factor``."""
    axis = axis % x.ndim
    taps = np.asarray(taps, dtype=np.float64 if dtype is None else dtype)
    n = taps.shape[0]
    p = _phase_offset(n, factor)
    first = factor * out_lo - p
    last = factor * (out_lo + out_len - 1) - p + n - 1
    src = np.moveaxis(_window_slice(x, x_lo, first, last, axis), axis, -1)
    y = np.zeros(src.shape[:-1] + (out_len,), dtype=np.result_type(src, taps))
    for w in range(n):
        y += taps[w] * _take(src, w, out_len, factor)
    return np.moveaxis(y, -1, axis)


# -- non-separable 2D variants ---------------------------------------------


def _ranges(out_lo, out_len):
    if np.ndim(out_lo) == 0:
        out_lo = (out_lo, out_lo)
    if np.ndim(out_len) == 0:
        out_len = (out_len, out_len)
    return int(out_lo[0]), int(out_len[0]), int(out_lo[1]), int(out_len[1])


def _origins(x_lo):
    if np.ndim(x_lo) == 0:
        return int(x_lo), int(x_lo)
    return int(x_lo[0]), int(x_lo[1])


def _polyphase_2d(taps2d: np.ndarray, factor: int):
    n = taps2d.shape[0]
    p = _phase_offset(n, factor)
    pp = _polyphase(np.zeros(n), factor)
    width = pp.width
    mat = np.zeros((width, width, factor, factor))
    for wy in range(width):
        ky = factor * (pp.i_hi - wy) + np.arange(factor) + p
        oky = (ky >= 0) & (ky < n)
        for wx in range(width):
            kx = factor * (pp.i_hi - wx) + np.arange(factor) + p
            okx = (kx >= 0) & (kx < n)
            block = np.zeros((factor, factor))
            block[np.ix_(oky, okx)] = taps2d[np.ix_(ky[oky], kx[okx])]
            mat[wy, wx] = block
    return pp, mat


def upfir_2d(x, x_lo, taps2d, factor, out_lo, out_len, dtype=None):
    """2D (non-separable) upsampling over the last two axes, gain ``factor**2``."""
    ylo, ylen, xlo, xlen = _ranges(out_lo, out_len)
    pp, mat = _polyphase_2d(np.asarray(taps2d, dtype=np.float64), factor)
    mat = mat * factor**2
    if dtype is not None:
        mat = mat.astype(dtype)
    ay_lo, ay_hi = ylo // factor, (ylo + ylen - 1) // factor
    ax_lo, ax_hi = xlo // factor, (xlo + xlen - 1) // factor
    cy, cx = ay_hi - ay_lo + 1, ax_hi - ax_lo + 1
    row_lo, col_lo = _origins(x_lo)
    src = _window_slice(x, col_lo, ax_lo - pp.i_hi, ax_hi - pp.i_lo, -1)
    src = _window_slice(src, row_lo, ay_lo - pp.i_hi, ay_hi - pp.i_lo, -2)
    t = np.zeros(src.shape[:-2] + (cy, cx, factor, factor), dtype=np.result_type(src, mat))
    for wy in range(pp.width):
        rows = src[..., wy : wy + cy, :]
        for wx in range(pp.width):
            block = mat[wy, wx]
            if not block.any():
                continue
            t += rows[..., wx : wx + cx, None, None] * block
    lead = t.shape[:-4]
    t = np.swapaxes(t, -3, -2).reshape(lead + (cy * factor, cx * factor))
    sy, sx = ylo - factor * ay_lo, xlo - factor * ax_lo
    return t[..., sy : sy + ylen, sx : sx + xlen]


def firdown_2d(x, x_lo, taps2d, factor, out_lo, out_len, dtype=None):
    """2D (non-separable) filtering plus decimation over the last two axes."""
    ylo, ylen, xlo, xlen = _ranges(out_lo, out_len)
    taps2d = np.asarray(taps2d, dtype=np.float64 if dtype is None else dtype)
    n = taps2d.shape[0]
    p = _phase_offset(n, factor)
    row_lo, col_lo = _origins(x_lo)
    src = _window_slice(x, col_lo, factor * xlo - p, factor * (xlo + xlen - 1) - p + n - 1, -1)
    src = _window_slice(src, row_lo, factor * ylo - p, factor * (ylo + ylen - 1) - p + n - 1, -2)
    y = np.zeros(src.shape[:-2] + (ylen, xlen), dtype=np.result_type(src, taps2d))
    for wy in range(n):
        rows = src[..., wy : wy + factor * (ylen - 1) + 1 : factor, :]
        for wx in range(n):
            y += taps2d[wy, wx] * rows[..., wx : wx + factor * (xlen - 1) + 1 : factor]
    return y


def upfir(x, x_lo, filt: DiscreteFilter, factor, out_lo, out_len, dtype=None):
    """Upsample the last two axes.

    ``x_lo``, ``out_lo`` and ``out_len`` are scalars or (rows, cols) pairs.
    """
    ylo, ylen, xlo, xlen = _ranges(out_lo, out_len)
    row_lo, col_lo = _origins(x_lo)
    if filt.separable:
        t = upfir_axis(x, col_lo, filt.taps, factor, xlo, xlen, axis=-1, dtype=dtype)
        return upfir_axis(t, row_lo, filt.taps, factor, ylo, ylen, axis=-2, dtype=dtype)
    return upfir_2d(x, x_lo, filt.taps, factor, (ylo, xlo), (ylen, xlen), dtype=dtype)


def firdown(x, x_lo, filt: DiscreteFilter, factor, out_lo, out_len, dtype=None):
    """Filter and decimate the last two axes (columns first, then the surviving rows)."""
    ylo, ylen, xlo, xlen = _ranges(out_lo, out_len)
    row_lo, col_lo = _origins(x_lo)
    if filt.separable:
        t = firdown_axis(x, col_lo, filt.taps, factor, xlo, xlen, axis=-1, dtype=dtype)
        return firdown_axis(t, row_lo, filt.taps, factor, ylo, ylen, axis=-2, dtype=dtype)
    return firdown_2d(x, x_lo, filt.taps, factor, (ylo, xlo), (ylen, xlen), dtype=dtype)


# -- public operations -----------------------------------------------------------


def _check_rate(filt: DiscreteFilter, rate: float, what: str):
    if not math.isclose(filt.rate, rate, rel_tol=1e-12):
        raise ResampleError(f"{what} filter is designed for rate {filt.rate}, expected {rate}")


def upsample(fmap: FeatureMap, factor: int, filt: DiscreteFilter) -> FeatureMap:
    """Zero-interleave by ``factor`` and low-pass filter at the new rate.

    The output covers the same extended canvas: margin ``factor * margin``.
    """
    if factor < 1 or int(factor) != factor:
        raise ResampleError(f"factor must be a positive integer, got {factor}")
    if factor == 1:
        return check_finite(fmap.with_data(fmap.data.copy()))
    _check_rate(filt, fmap.rate * factor, "upsampling")
    out_margin = fmap.margin * factor
    out_len = fmap.width * factor
    x = fmap.data.astype(np.float64, copy=False)
    y = upfir(x, fmap.lo, filt, factor, -out_margin, out_len)
    return check_finite(FeatureMap(y, fmap.rate * factor, out_margin))


def downsample(fmap: FeatureMap, factor: int, filt: DiscreteFilter, out_margin=None) -> FeatureMap:
    """Low-pass filter at the input rate, then keep the first sample of each group of ``factor``."""
    if factor < 1 or int(factor) != factor:
        raise ResampleError(f"factor must be a positive integer, got {factor}")
    _check_rate(filt, fmap.rate, "downsampling")
    canvas = fmap.canvas_samples
    if canvas % factor:
        raise ResampleError(f"canvas of {canvas} samples is not divisible by {factor}")
    if out_margin is None:
        if fmap.margin % factor:
            raise ResampleError(f"margin {fmap.margin} is not divisible by {factor}; pass out_margin")
        out_margin = fmap.margin // factor
    out_len = canvas // factor + 2 * out_margin
    x = fmap.data.astype(np.float64, copy=False)
    y = firdown(x, fmap.lo, filt, factor, -out_margin, out_len)
    return check_finite(FeatureMap(y, fmap.rate / factor, out_margin))


def crop_to_canvas(fmap: FeatureMap, margin: int) -> FeatureMap:
    """Trim the stored extent symmetrically down to ``margin`` samples beyond the canvas."""
    if margin < 0 or margin > fmap.margin:
        raise ResampleError(f"cannot crop margin {fmap.margin} to {margin}")
    d = fmap.margin - margin
    data = fmap.data[..., d : fmap.height - d, d : fmap.width - d] if d else fmap.data
    return FeatureMap(data, fmap.rate, margin)


def lanczos_shift_weights(frac: float, a: int) -> Tuple[np.ndarray, int]:
    """Normalized Lanczos weights for a sub-sample shift ``frac`` in [0, 1).

    Returns ``(weights, j0)`` so that ``out[p] = sum_j w[j - j0] * in[p - j]``.
    """
    if frac == 0:
        return np.ones(1), 0
    j = np.arange(-a + 1, a + 1)
    w = lanczos_kernel(j - frac, a)
    keep = w != 0
    j, w = j[keep], w[keep]
    return w / w.sum(), int(j[0])


def _shift_axis(x: np.ndarray, offset: float, a: int, axis: int) -> np.ndarray:
    whole = math.floor(offset)
    frac = offset - whole
    w, j0 = lanczos_shift_weights(frac, a)
    out = np.zeros_like(x)
    n = x.shape[axis]
    for k, wk in enumerate(w):
        s = whole + j0 + k  # out[p] += wk * x[p - s]
        lo, hi = max(0, s), min(n, n + s)
        if lo >= hi:
            continue
        dst = [slice(None)] * x.ndim
        src = [slice(None)] * x.ndim
        dst[axis] = slice(lo, hi)
        src[axis] = slice(lo - s, hi - s)
        out[tuple(dst)] += wk * x[tuple(src)]
    return out


def translate_fractional(fmap: FeatureMap, offset, a: int = 3) -> FeatureMap:
    """Shift content by ``offset = (dx, dy)`` samples with Lanczos resampling.

    ``dx`` moves along the last axis (columns). Each offset's discrete kernel is
    renormalized to unit sum. Samples shifted in from outside are zero.
    """
    if a < 1:
        raise ResampleError(f"Lanczos extent must be >= 1, got {a}")
    dx, dy = float(offset[0]), float(offset[1])
    x = fmap.data.astype(np.float64, copy=False)
    x = _shift_axis(x, dx, a, axis=-1)
    x = _shift_axis(x, dy, a, axis=-2)
    return check_finite(fmap.with_data(x))


# -- file formats ------------------------------------------------------------------


def write_aft(path, fmap: FeatureMap) -> None:
    """Write a single (channels, height, width) map in the AFT1 raw format."""
    data = fmap.data
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise ResampleError("AFT1 stores one (channels, height, width) map")
    c, h, w = data.shape
    header = _AFT_HEADER.pack(AFT_MAGIC, c, h, w, fmap.margin, float(fmap.rate))
    Path(path).write_bytes(header + np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_aft(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < _AFT_HEADER.size:
        raise ResampleError("file too short for an AFT1 header")
    magic, c, h, w, margin, rate = _AFT_HEADER.unpack_from(raw)
    if magic != AFT_MAGIC:
        raise ResampleError(f"bad magic {magic!r}")
    body = raw[_AFT_HEADER.size :]
    if len(body) != 4 * c * h * w:
        raise ResampleError(f"expected {4 * c * h * w} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f4").reshape(c, h, w).astype(np.float64)
    return FeatureMap(data, rate, margin)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Map [-1, 1] to [0, 255], rounding half away from zero."""
    v = (np.asarray(values, dtype=np.float64) + 1.0) * 127.5
    v = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def write_png(path, fmap_or_array) -> None:
    from PIL import Image

    data = fmap_or_array.canvas() if isinstance(fmap_or_array, FeatureMap) else np.asarray(fmap_or_array)
    if data.ndim == 3 and data.shape[0] == 1:
        data = data[0]
    if data.ndim == 3:
        if data.shape[0] != 3:
            raise ResampleError(f"PNG export needs 1 or 3 channels, got {data.shape[0]}")
        img = Image.fromarray(np.moveaxis(to_uint8(data), 0, -1), mode="RGB")
    else:
        img = Image.fromarray(to_uint8(data), mode="L")
    img.save(path)


def read_png(path) -> FeatureMap:
    """Read a PNG as a margin-free map with values in [-1, 1]; rate is the image width."""
    from PIL import Image

    img = np.asarray(Image.open(path))
    if img.ndim == 3:
        data = np.moveaxis(img[..., :3], -1, 0)
    else:
        data = img[None]
    if data.shape[-1] != data.shape[-2]:
        raise ResampleError(f"only square images are supported, got {data.shape[-2:]}")
    return FeatureMap(data.astype(np.float64) / 127.5 - 1.0, data.shape[-1], 0)
