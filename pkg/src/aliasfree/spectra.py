"""Average power spectra of image sets and 1D slices through them.

Images are whitened with two dataset-level scalars, windowed with a
separable Kaiser window (beta = 8) and transformed without padding. The
periodogram ``|FFT|^2 / (H W)`` is averaged over channels and then over
images, so its total equals the mean windowed-image energy (Parseval).
"""

from __future__ import annotations

import csv
import io
import math
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from .resample import write_png

WINDOW_BETA = 8.0
DB_FLOOR = -120.0


class SpectraError(ValueError):
    """Raised for empty image sets or invalid parameters."""


def _as_stack(images) -> np.ndarray:
    """(N, C, H, W); 2D images get one channel and 3D stacks are (N, H, W)."""
    x = np.asarray(images, dtype=np.float64)
    if x.size == 0 or x.ndim < 2:
        raise SpectraError("empty image set")
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[:, None]
    elif x.ndim != 4:
        raise SpectraError(f"expected (N, C, H, W) images, got shape {x.shape}")
    return x


def dataset_stats(images) -> Tuple[float, float]:
    """Scalar mean and standard deviation over every image, channel and pixel."""
    x = _as_stack(images)
    return float(x.mean()), float(x.std())


def kaiser_window_2d(height: int, width: int, beta: float = WINDOW_BETA) -> np.ndarray:
    return np.outer(np.kaiser(height, beta), np.kaiser(width, beta))


def power_spectrum_linear(images, mean: float, std: float, beta: float = WINDOW_BETA) -> np.ndarray:
    """Averaged periodogram, DC at the centre (``fftshift``), linear scale."""
    x = _as_stack(images)
    if not std > 0:
        raise SpectraError(f"dataset std must be positive, got {std}")
    n, c, h, w = x.shape
    win = kaiser_window_2d(h, w, beta)
    total = np.zeros((h, w))
    for img in x:
        f = np.fft.fft2((img - mean) / std * win)
        total += np.mean(np.abs(f) ** 2, axis=0)
    return np.fft.fftshift(total / n / (h * w))


def to_db(power: np.ndarray, floor: float = DB_FLOOR) -> np.ndarray:
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(power)
    return np.maximum(db, floor)


def average_power_spectrum(images, mean: float, std: float, beta: float = WINDOW_BETA) -> np.ndarray:
    """Average power spectrum in dB, clamped at ``DB_FLOOR``."""
    return to_db(power_spectrum_linear(images, mean, std, beta))


def spectrum_frequencies(size: int) -> np.ndarray:
    """Cycles per pixel along one axis of an ``fftshift``-ed spectrum."""
    return np.fft.fftshift(np.fft.fftfreq(size))


def spectrum_slice(spectrum: np.ndarray, angle: float, step: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear samples along the ray at ``angle`` degrees from the origin.

    Returns ``(radius in cycles per pixel, values)``. The ray runs until it
    leaves the spectrum; 0 degrees points along +x and 90 degrees along +y.
    """
    if not 0 <= angle < 360:
        raise SpectraError(f"angle must be in [0, 360), got {angle}")
    spectrum = np.asarray(spectrum, dtype=np.float64)
    h, w = spectrum.shape
    cy, cx = h // 2, w // 2
    dx, dy = math.cos(math.radians(angle)), math.sin(math.radians(angle))
    # furthest radius (in bins) that stays inside the sample grid
    limits = []
    for d, lo, hi in ((dx, -cx, w - 1 - cx), (dy, -cy, h - 1 - cy)):
        if abs(d) > 1e-12:
            limits.append((hi if d > 0 else lo) / d)
    r_max = min(limits)
    radii = np.arange(0.0, r_max + 1e-9, step)
    vals = map_coordinates(spectrum, [cy + radii * dy, cx + radii * dx], order=1, mode="nearest")
    return radii / max(h, w), vals


def spectrum_csv(spectrum: np.ndarray) -> str:
    h, w = spectrum.shape
    fy, fx = spectrum_frequencies(h), spectrum_frequencies(w)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("freq_x", "freq_y", "db"))
    for i in range(h):
        for j in range(w):
            wr.writerow((f"{fx[j]:.6f}", f"{fy[i]:.6f}", f"{spectrum[i, j]:.6f}"))
    return buf.getvalue()


def slice_csv(radius: np.ndarray, values: np.ndarray) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("radius", "db"))
    for r, v in zip(radius, values):
        wr.writerow((f"{r:.6f}", f"{v:.6f}"))
    return buf.getvalue()


def write_heatmap(path, spectrum_db: np.ndarray, lo: Optional[float] = None, hi: Optional[float] = None) -> None:
    """Grayscale PNG, ``lo`` maps to black and ``hi`` to white."""
    lo = float(np.min(spectrum_db)) if lo is None else lo
    hi = float(np.max(spectrum_db)) if hi is None else hi
    scaled = (np.asarray(spectrum_db) - lo) / max(hi - lo, 1e-12) * 2 - 1
    write_png(path, scaled)
