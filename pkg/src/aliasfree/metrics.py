"""PSNR-based equivariance metrics for translation and rotation.

All three metrics compare a transformed output against the output for a
transformed input, pooling squared errors over every sample, valid pixel and
colour channel before converting to decibels with ``I_max = 2``.

Generators are accessed through a small protocol: ``resolution``,
``draw_latents(count, rng) -> (transforms, styles)`` and
``render(transforms, styles) -> (batch, channels, s, s)``. ``styles`` is a
list of per-layer arrays whose first axis runs over samples (or ``None``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.signal import fftconvolve

from .filters import DiscreteFilter
from .fourier import Transform2D
from .resample import FeatureMap, translate_fractional

I_MAX = 2.0
PSNR_CAP = 999.0
LANCZOS_A = 3
ROTATION_UP = 4


class MetricError(ValueError):
    """Raised for empty valid regions or malformed inputs."""


# -- PSNR ----------------------------------------------------------------------------


def psnr_from_mse(mse: float, i_max: float = I_MAX) -> float:
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * math.log10(i_max**2 / mse))


def psnr(reference, test, i_max: float = I_MAX, mask=None) -> float:
    """PSNR over the pixels where ``mask`` is true (all pixels if omitted)."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise MetricError(f"shape mismatch {reference.shape} vs {test.shape}")
    diff2 = (reference - test) ** 2
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), diff2.shape)
        diff2 = diff2[mask]
    if diff2.size == 0:
        raise MetricError("empty valid region")
    return psnr_from_mse(float(np.mean(diff2)), i_max)


@dataclass
class EquivReport:
    metric: str
    samples: int = 0
    sse: float = 0.0
    pixels: int = 0
    i_max: float = I_MAX
    sample_mse: List[float] = field(default_factory=list)

    def add(self, reference: np.ndarray, test: np.ndarray, mask: np.ndarray) -> None:
        """Accumulate one sample; ``mask`` is the (height, width) valid region."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise MetricError(f"{self.metric}: empty valid region")
        d = (np.asarray(reference, np.float64) - np.asarray(test, np.float64))[..., mask]
        sse = float(np.sum(d * d))
        self.sse += sse
        self.pixels += int(d.size)
        self.sample_mse.append(sse / d.size)
        self.samples += 1

    @property
    def mse(self) -> float:
        if self.pixels == 0:
            raise MetricError(f"{self.metric}: no samples accumulated")
        return self.sse / self.pixels

    @property
    def psnr_db(self) -> float:
        return psnr_from_mse(self.mse, self.i_max)

    def text(self) -> str:
        return f"{self.metric}: {self.psnr_db:.4f} dB ({self.samples} samples, {self.pixels} values)"

    def csv_row(self) -> List[str]:
        return [self.metric, f"{self.psnr_db:.6f}", str(self.samples), str(self.pixels)]


REPORT_COLUMNS = ("metric", "psnr_db", "samples", "pixels")


def reports_csv(reports: Sequence[EquivReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


# -- valid regions -----------------------------------------------------------------------


def _axis_range_mask(size: int, lo: float, hi: float) -> np.ndarray:
    idx = np.arange(size)
    return (idx >= lo) & (idx <= hi)


def valid_region_integer(size: int, offset: Tuple[int, int]) -> np.ndarray:
    """Pixels ``{max(x, 0) .. size + min(x, 0) - 1}`` per axis; ``offset = (x0, x1)`` = (columns, rows)."""
    x0, x1 = offset
    cols = _axis_range_mask(size, max(x0, 0), size + min(x0, 0) - 1)
    rows = _axis_range_mask(size, max(x1, 0), size + min(x1, 0) - 1)
    return rows[:, None] & cols[None, :]


def valid_region_fractional(size: int, offset: Tuple[float, float], a: int = LANCZOS_A) -> np.ndarray:
    """Pixels ``{max(x + a, 0) .. size + min(x - a, -1)}`` per axis."""
    x0, x1 = offset
    cols = _axis_range_mask(size, max(x0 + a, 0), size + min(x0 - a, -1))
    rows = _axis_range_mask(size, max(x1 + a, 0), size + min(x1 - a, -1))
    return rows[:, None] & cols[None, :]


# -- image-space operators ---------------------------------------------------------------


def translate_integer(img: np.ndarray, offset: Tuple[int, int]) -> np.ndarray:
    """``out[p] = img[p - x]`` with zeros shifted in; ``offset = (columns, rows)``."""
    x0, x1 = int(offset[0]), int(offset[1])
    out = np.zeros_like(img)
    h, w = img.shape[-2:]
    dst_r = slice(max(x1, 0), h + min(x1, 0))
    src_r = slice(max(-x1, 0), h + min(-x1, 0))
    dst_c = slice(max(x0, 0), w + min(x0, 0))
    src_c = slice(max(-x0, 0), w + min(-x0, 0))
    out[..., dst_r, dst_c] = img[..., src_r, src_c]
    return out


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _square_lowpass(x, y):
    return np.sinc(x) * np.sinc(y)


def _lanczos_window(x, y, a):
    return np.where((np.abs(x) < a) & (np.abs(y) < a), np.sinc(x / a) * np.sinc(y / a), 0.0)


def _rotated_pair_kernel(angle: float, a: int, extent: int, grid: int) -> Tuple[np.ndarray, np.ndarray]:
    """``(f * f(R x)) . (w * w(R x))`` on a grid of spacing ``1 / grid`` over ``[-extent, extent]``.

    ``f`` is the ideal square low-pass at 0.5 cycles per pixel and ``w`` the
    separable Lanczos window. Returns the kernel and the 1D tap offsets.
    """
    t = np.arange(-extent * grid, extent * grid + 1) / grid
    y, x = np.meshgrid(t, t, indexing="ij")
    r = _rot(angle)
    xr = r[0, 0] * x + r[0, 1] * y
    yr = r[1, 0] * x + r[1, 1] * y
    f = fftconvolve(_square_lowpass(x, y), _square_lowpass(xr, yr), mode="same") / grid**2
    w = fftconvolve(_lanczos_window(x, y, a), _lanczos_window(xr, yr, a), mode="same") / grid**2
    return f * w, t


def rotation_filter(
    angle: float, rate: float = 1.0, a: int = LANCZOS_A, up: int = ROTATION_UP,
    support: Optional[int] = None, extent: int = 64, grid: int = 4,
) -> DiscreteFilter:
    """Band-matching filter for rotating content by ``angle`` radians.

    The kernel is ``(psi * r_-angle[psi]) . (w * r_-angle[w])`` sampled every
    ``1 / up`` pixels within ``support`` pixels (default ``2 a`` for ``up = 1``
    and ``16`` otherwise), so it is an ``up``-times upsampling filter; every
    polyphase component sums to one. ``rate`` is the image's sampling rate.
    """
    if up < 1 or grid % up:
        raise MetricError(f"grid spacing 1/{grid} must be a multiple of 1/{up}")
    if support is None:
        support = 2 * a if up == 1 else 16
    if support >= extent:
        raise MetricError("support must be smaller than the construction extent")
    # r_-angle[psi](x) = psi(R_angle x)
    kernel, t = _rotated_pair_kernel(angle, a, extent, grid)
    step = grid // up
    centre = extent * grid
    half = support * up - 1
    idx = centre + step * np.arange(-half, half + 1)
    taps = kernel[np.ix_(idx, idx)]
    if up > 1:
        # each polyphase component gets unit sum
        n = taps.shape[0]
        phase = (np.arange(n) - half) % up
        for ry in range(up):
            for rx in range(up):
                sel = np.ix_(phase == ry, phase == rx)
                taps[sel] /= taps[sel].sum()
    else:
        taps = taps / taps.sum()
    return DiscreteFilter(taps, rate * up, separable=False, kind="rotation", meta={"angle": angle, "up": up})


def pseudo_rotation_filter(angle: float, rate: float = 1.0, a: int = LANCZOS_A, **kw) -> DiscreteFilter:
    """``(psi * r_angle[psi]) . (w * r_angle[w])`` at integer taps: band-matches without rotating."""
    return rotation_filter(-angle, rate, a, up=1, **kw)


def rotate_image(img: np.ndarray, angle: float, filt: Optional[DiscreteFilter] = None):
    """Rotate content by ``angle`` about the image centre.

    Upsamples with the rotation filter, then samples bilinearly. Returns the
    rotated image and the mask of pixels whose lookups only touch upsampled
    samples with a complete filter footprint.
    """
    img = np.asarray(img, dtype=np.float64)
    size = img.shape[-1]
    filt = filt if filt is not None else rotation_filter(angle)
    up = int(filt.meta.get("up", ROTATION_UP))
    taps = filt.taps
    half = taps.shape[0] // 2
    lead = img.shape[:-2]
    flat = img.reshape((-1, size, size))
    stuffed = np.zeros((flat.shape[0], up * (size - 1) + 1, up * (size - 1) + 1))
    stuffed[:, ::up, ::up] = flat
    # full[j] holds high-rate sample J = j - half, located at pixel J / up
    full = fftconvolve(stuffed, taps[None], mode="full", axes=(-2, -1))
    c = (size - 1) / 2
    rows, cols = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    inv = _rot(-angle)
    sx = inv[0, 0] * (cols - c) + inv[0, 1] * (rows - c) + c
    sy = inv[1, 0] * (cols - c) + inv[1, 1] * (rows - c) + c
    qx, qy = up * sx + half, up * sy + half
    out = np.stack([map_coordinates(ch, [qy, qx], order=1, mode="constant") for ch in full])
    # complete footprints: J in [half, up * (size - 1) - half], i.e. index [2 half, up (size - 1)]
    lo, hi = 2 * half, up * (size - 1)
    mask = (qx >= lo) & (qx <= hi - 1) & (qy >= lo) & (qy <= hi - 1)
    return out.reshape(lead + (size, size)), mask


def pseudo_rotate_image(img: np.ndarray, angle: float, filt: Optional[DiscreteFilter] = None):
    """Convolve with the pseudo-rotation filter; mask keeps pixels with a full footprint."""
    img = np.asarray(img, dtype=np.float64)
    size = img.shape[-1]
    filt = filt if filt is not None else pseudo_rotation_filter(angle)
    half = filt.size // 2
    out = fftconvolve(img, filt.taps.reshape((1,) * (img.ndim - 2) + filt.taps.shape), mode="same", axes=(-2, -1))
    idx = np.arange(size)
    ok = (idx >= half) & (idx <= size - 1 - half)
    return out, ok[:, None] & ok[None, :]


# -- sampling helpers ----------------------------------------------------------------------


def _take_styles(styles, idx):
    if styles is None:
        return None
    return [s[idx] for s in styles]


def _latent_batches(count: int, per_latent: int, batch: int):
    """Yield (latent indices, per-latent offset counts)."""
    latents = -(-count // per_latent)
    counts = [min(per_latent, count - i * per_latent) for i in range(latents)]
    for start in range(0, latents, batch):
        idx = np.arange(start, min(start + batch, latents))
        yield idx, [counts[i] for i in idx]


def _translated(t: Transform2D, offset_px, resolution: int) -> Transform2D:
    if offset_px[0] == 0 and offset_px[1] == 0:
        return t
    return t.then(Transform2D.from_angle(0.0, (offset_px[0] / resolution, offset_px[1] / resolution)))


def _rotated(t: Transform2D, angle: float) -> Transform2D:
    if angle == 0:
        return t
    return t.then(Transform2D.from_angle(angle))


# -- metrics ------------------------------------------------------------------------------


def _translation_metric(gen, samples, seed, offsets_per_latent, batch, fractional, offset_set):
    s = gen.resolution
    rng = np.random.default_rng(seed)
    latents = -(-samples // offsets_per_latent)
    transforms, styles = gen.draw_latents(latents, rng)
    bound = s / 8
    if offset_set is not None:
        choices = np.asarray(offset_set, dtype=np.float64).reshape(-1, 2)
        offsets = choices[rng.integers(0, len(choices), samples)]
    elif fractional:
        offsets = rng.uniform(-bound, bound, (samples, 2))
    else:
        offsets = rng.integers(-int(bound), int(bound) + 1, (samples, 2)).astype(np.float64)
    report = EquivReport("EQ-T_frac" if fractional else "EQ-T")
    k = 0
    for idx, counts in _latent_batches(samples, offsets_per_latent, batch):
        refs = gen.render([transforms[i] for i in idx], _take_styles(styles, idx))
        test_t, test_idx, offs = [], [], []
        for i, n in zip(idx, counts):
            for _ in range(n):
                offs.append(offsets[k])
                test_t.append(_translated(transforms[i], offsets[k], s))
                test_idx.append(i)
                k += 1
        tests = gen.render(test_t, _take_styles(styles, np.array(test_idx)))
        ref_of = {i: r for i, r in zip(idx, refs)}
        for i, off, img in zip(test_idx, offs, tests):
            ref = ref_of[i]
            if fractional:
                shifted = translate_fractional(FeatureMap(ref, s, 0), (off[0], off[1]), LANCZOS_A).data
                mask = valid_region_fractional(s, (off[0], off[1]), LANCZOS_A)
            else:
                o = (int(off[0]), int(off[1]))
                shifted = translate_integer(ref, o)
                mask = valid_region_integer(s, o)
            report.add(shifted, img, mask)
    return report


def eq_t_integer(gen, samples: int = 1000, seed: int = 0, offsets_per_latent: int = 1,
                 batch: int = 8, offset_set=None) -> EquivReport:
    """Integer translation equivariance; offsets uniform over ``[-s/8, s/8]`` inclusive."""
    return _translation_metric(gen, samples, seed, offsets_per_latent, batch, False, offset_set)


def eq_t_frac(gen, samples: int = 1000, seed: int = 0, offsets_per_latent: int = 1,
              batch: int = 8, offset_set=None) -> EquivReport:
    """Sub-pixel translation equivariance with Lanczos (a = 3) image translation."""
    return _translation_metric(gen, samples, seed, offsets_per_latent, batch, True, offset_set)


def eq_r(gen, samples: int = 100, seed: int = 0, angles_per_latent: int = 1,
         batch: int = 8, angle_set=None) -> EquivReport:
    """Rotation equivariance; angles uniform in [0, 2 pi)."""
    rng = np.random.default_rng(seed)
    latents = -(-samples // angles_per_latent)
    transforms, styles = gen.draw_latents(latents, rng)
    if angle_set is not None:
        choices = np.asarray(angle_set, dtype=np.float64).ravel()
        angles = choices[rng.integers(0, len(choices), samples)]
    else:
        angles = rng.uniform(0, 2 * np.pi, samples)
    report = EquivReport("EQ-R")
    k = 0
    for idx, counts in _latent_batches(samples, angles_per_latent, batch):
        refs = gen.render([transforms[i] for i in idx], _take_styles(styles, idx))
        test_t, test_idx, angs = [], [], []
        for i, n in zip(idx, counts):
            for _ in range(n):
                angs.append(angles[k])
                test_t.append(_rotated(transforms[i], angles[k]))
                test_idx.append(i)
                k += 1
        tests = gen.render(test_t, _take_styles(styles, np.array(test_idx)))
        ref_of = {i: r for i, r in zip(idx, refs)}
        for i, ang, img in zip(test_idx, angs, tests):
            rotated, mask_r = rotate_image(ref_of[i], ang)
            pseudo, mask_p = pseudo_rotate_image(img, ang)
            report.add(rotated, pseudo, mask_r & mask_p)
    return report
