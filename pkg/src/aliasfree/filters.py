"""Low-pass FIR filter construction.

Frequencies are in cycles per canvas unit and sampling rates in samples per
canvas unit, so a filter designed for a 64-pixel canvas has ``rate=64`` and a
cutoff of at most 32. Taps sit at ``(i - (n - 1) / 2) / rate``; an even tap
count therefore shifts sample locations by half a sample, which is what the
resampling code expects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bessel import i0, jinc

_RATE_TOL = 1e-9


class FilterError(ValueError):
    """Raised for filter parameters outside their valid domain."""


@dataclass(frozen=True)
class FilterSpec:
    """Band parameters of a low-pass filter at a given sampling rate."""

    cutoff: float
    half_width: float
    rate: float
    taps: int

    def __post_init__(self):
        if not self.cutoff > 0:
            raise FilterError(f"cutoff must be positive, got {self.cutoff}")
        if self.half_width < 0:
            raise FilterError(f"half_width must be >= 0, got {self.half_width}")
        if self.taps < 1 or int(self.taps) != self.taps:
            raise FilterError(f"taps must be a positive integer, got {self.taps}")
        if self.cutoff + self.half_width > self.rate / 2 + _RATE_TOL:
            raise FilterError(
                f"cutoff + half_width = {self.cutoff + self.half_width} exceeds "
                f"the Nyquist frequency {self.rate / 2}"
            )

    @property
    def extent(self) -> float:
        """Spatial extent ``(n - 1) / s`` of the tap grid."""
        return (self.taps - 1) / self.rate

    @property
    def delta_f(self) -> float:
        """Transition band width as a fraction of the Nyquist frequency."""
        return 2.0 * self.half_width / (self.rate / 2.0)

    @property
    def attenuation(self) -> float:
        return kaiser_attenuation(self.taps, self.delta_f)

    @property
    def beta(self) -> float:
        return kaiser_beta(self.attenuation)


@dataclass(frozen=True, eq=False)
class DiscreteFilter:
    """Realized taps of a filter. ``separable`` 1D taps stand for their outer product."""

    taps: np.ndarray
    rate: float
    separable: bool = True
    cutoff: float = float("nan")
    half_width: float = float("nan")
    beta: float = float("nan")
    kind: str = "kaiser"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim != (1 if self.separable else 2):
            raise FilterError(f"separable={self.separable} filter cannot have taps of shape {taps.shape}")
        if taps.ndim == 2 and taps.shape[0] != taps.shape[1]:
            raise FilterError(f"2D taps must be square, got {taps.shape}")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    @property
    def phase_shift(self) -> bool:
        return self.size % 2 == 0

    @property
    def is_identity(self) -> bool:
        return self.size == 1

    def as_2d(self) -> np.ndarray:
        if self.separable:
            return np.outer(self.taps, self.taps)
        return self.taps

    def taps32(self) -> np.ndarray:
        return self.taps.astype(np.float32)

    def __eq__(self, other):
        if not isinstance(other, DiscreteFilter):
            return NotImplemented
        return (
            self.separable == other.separable
            and self.rate == other.rate
            and self.taps.shape == other.taps.shape
            and bool(np.array_equal(self.taps, other.taps))
        )

    __hash__ = None


def identity_filter(rate: float) -> DiscreteFilter:
    return DiscreteFilter(np.ones(1), rate=rate, separable=True, kind="identity")


def kaiser_attenuation(taps: int, delta_f: float) -> float:
    """Kaiser's estimate of achievable stopband attenuation in dB.

    ``delta_f`` is the transition band width as a fraction of Nyquist.
    """
    if delta_f < 0:
        raise FilterError(f"delta_f must be >= 0, got {delta_f}")
    if taps < 1:
        raise FilterError(f"taps must be >= 1, got {taps}")
    return 2.285 * (taps - 1) * math.pi * delta_f + 7.95


def kaiser_beta(attenuation: float) -> float:
    """Kaiser window shape parameter for a target attenuation (dB)."""
    a = float(attenuation)
    if not math.isfinite(a):
        raise FilterError(f"attenuation must be finite, got {attenuation}")
    if a > 50:
        return 0.1102 * (a - 8.7)
    if a >= 21:
        return 0.5842 * (a - 21) ** 0.4 + 0.07886 * (a - 21)
    return 0.0


def kaiser_window(taps: int, beta: float) -> np.ndarray:
    """Kaiser window sampled at ``taps`` points spanning its full extent."""
    if taps < 1:
        raise FilterError(f"taps must be >= 1, got {taps}")
    if beta < 0:
        raise FilterError(f"beta must be >= 0, got {beta}")
    if taps == 1:
        return np.ones(1)
    # integer numerator keeps w[i] == w[n-1-i] bit-exact
    t = (2.0 * np.arange(taps) - (taps - 1)) / (taps - 1)
    return i0(beta * np.sqrt(np.maximum(1.0 - t * t, 0.0))) / i0(beta)


def tap_positions(taps: int, rate: float) -> np.ndarray:
    """Tap locations in canvas units, symmetric about zero."""
    return (np.arange(taps) - (taps - 1) / 2) / rate


def _normalized(taps: np.ndarray) -> np.ndarray:
    total = taps.sum()
    if total == 0 or not np.isfinite(total):
        raise FilterError("filter taps sum to zero or non-finite value")
    return taps / total


def _resolve_beta(spec: FilterSpec, beta: Optional[float]) -> float:
    return spec.beta if beta is None else float(beta)


def design_lowpass_1d(spec: FilterSpec, beta: Optional[float] = None) -> DiscreteFilter:
    """Kaiser-windowed sinc low-pass filter.

    When ``beta`` is omitted it is derived from the Kaiser attenuation of ``spec``.
    """
    beta = _resolve_beta(spec, beta)
    if spec.taps == 1:
        return DiscreteFilter(np.ones(1), spec.rate, True, spec.cutoff, spec.half_width, beta)
    x = np.abs(tap_positions(spec.taps, spec.rate))
    fc = spec.cutoff
    h = 2 * fc * np.sinc(2 * fc * x) * kaiser_window(spec.taps, beta) / spec.rate
    return DiscreteFilter(_normalized(h), spec.rate, True, fc, spec.half_width, beta)


def design_radial_2d(spec: FilterSpec, beta: Optional[float] = None) -> DiscreteFilter:
    """Jinc-based radially symmetric filter with a separable Kaiser window."""
    beta = _resolve_beta(spec, beta)
    if spec.taps == 1:
        return DiscreteFilter(np.ones((1, 1)), spec.rate, False, spec.cutoff, spec.half_width, beta, "radial")
    x = np.abs(tap_positions(spec.taps, spec.rate))
    r = np.hypot(x[:, None], x[None, :])
    fc = spec.cutoff
    w = kaiser_window(spec.taps, beta)
    h = (2 * fc) ** 2 * jinc(2 * fc * r) * np.outer(w, w) / spec.rate**2
    h = _normalized(h)
    # hypot is symmetric in practice; enforce it so the 90-degree invariant is exact
    h = 0.5 * (h + h.T)
    return DiscreteFilter(h, spec.rate, False, fc, spec.half_width, beta, "radial")


def lanczos_kernel(x, a: float) -> np.ndarray:
    """Prototype Lanczos kernel ``sinc(x) sinc(x / a)`` on ``|x| < a``."""
    x = np.asarray(x, dtype=np.float64)
    k = np.sinc(x) * np.sinc(x / a)
    return np.where(np.abs(x) < a, k, 0.0)


def gaussian_kernel(x, sigma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def design_lanczos(cutoff: float, a: float, spec: FilterSpec) -> DiscreteFilter:
    """Lanczos filter rescaled so its implicit cutoff of 0.5 lands on ``cutoff``."""
    if a <= 0:
        raise FilterError(f"Lanczos extent a must be positive, got {a}")
    x = np.abs(tap_positions(spec.taps, spec.rate))
    h = 2 * cutoff * lanczos_kernel(2 * cutoff * x, a) / spec.rate
    return DiscreteFilter(_normalized(h), spec.rate, True, cutoff, spec.half_width, kind="lanczos", meta={"a": a})


def design_gaussian(
    cutoff: float, sigma: float, spec: FilterSpec, truncation_rate: Optional[float] = None
) -> DiscreteFilter:
    """Gaussian filter, zeroed beyond ``8 / truncation_rate`` (default: ``spec.rate``)."""
    if sigma <= 0:
        raise FilterError(f"sigma must be positive, got {sigma}")
    limit = 8.0 / (spec.rate if truncation_rate is None else truncation_rate)
    x = np.abs(tap_positions(spec.taps, spec.rate))
    h = 2 * cutoff * gaussian_kernel(2 * cutoff * x, sigma) / spec.rate
    h = np.where(x > limit, 0.0, h)
    return DiscreteFilter(_normalized(h), spec.rate, True, cutoff, spec.half_width, kind="gaussian", meta={"sigma": sigma})


def adjust_for_resampling(base: FilterSpec, factor: int) -> FilterSpec:
    """Spec for the same band at ``factor`` times the rate with ``factor`` times the taps."""
    if factor < 1 or int(factor) != factor:
        raise FilterError(f"resampling factor must be a positive integer, got {factor}")
    return FilterSpec(base.cutoff, base.half_width, base.rate * factor, base.taps * factor)


def resampling_filter(
    cutoff: float, half_width: float, rate: float, taps: int, factor: int, radial: bool = False
) -> DiscreteFilter:
    """Filter for ``factor``x up/downsampling between ``rate`` and ``rate * factor``.

    Factor 1 yields the identity: no resampling happens, so nothing is filtered.
    """
    if factor == 1:
        if radial:
            return DiscreteFilter(np.ones((1, 1)), rate, False, cutoff, half_width, kind="identity")
        return identity_filter(rate)
    # built directly at the higher rate: at the lower rate the band may legitimately
    # reach past Nyquist (stopband above s/2 on critically sampled layers)
    spec = FilterSpec(cutoff, half_width, rate * factor, taps * factor)
    return design_radial_2d(spec) if radial else design_lowpass_1d(spec)


# -- frequency response ------------------------------------------------------


def frequency_response(filt: DiscreteFilter, freqs) -> np.ndarray:
    """Real-valued response of a symmetric 1D filter at ``freqs`` (cycles per canvas unit)."""
    if not filt.separable:
        raise FilterError("use frequency_response_2d for non-separable filters")
    x = tap_positions(filt.size, filt.rate)
    freqs = np.asarray(freqs, dtype=np.float64)
    return np.cos(2 * np.pi * np.multiply.outer(freqs, x)) @ filt.taps


def frequency_response_2d(filt: DiscreteFilter, fx, fy) -> np.ndarray:
    """Response of a 2D (or separable) filter at frequency pairs ``(fx, fy)``."""
    h = filt.as_2d()
    x = tap_positions(h.shape[0], filt.rate)
    fx = np.asarray(fx, dtype=np.float64)
    fy = np.asarray(fy, dtype=np.float64)
    ex = np.exp(-2j * np.pi * np.multiply.outer(fx, x))  # (..., n) along columns
    ey = np.exp(-2j * np.pi * np.multiply.outer(fy, x))  # along rows
    return np.einsum("...i,ij,...j->...", ey, h, ex).real


def stopband_attenuation(filt: DiscreteFilter, stopband_start: float, points: int = 4096) -> float:
    """Measured worst-case attenuation (positive dB) over ``[stopband_start, rate / 2]``."""
    f = np.linspace(stopband_start, filt.rate / 2, points)
    peak = np.max(np.abs(frequency_response(filt, f)))
    return float("inf") if peak == 0 else -20.0 * math.log10(peak)


# -- text records --------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def export_filter(filt: DiscreteFilter) -> str:
    """Self-describing text record; values round-trip exactly."""
    lines = [
        "# aliasfree filter",
        f"n = {filt.size}",
        f"rate = {_fmt(filt.rate)}",
        f"cutoff = {_fmt(filt.cutoff)}",
        f"half_width = {_fmt(filt.half_width)}",
        f"beta = {_fmt(filt.beta)}",
        f"separable = {'true' if filt.separable else 'false'}",
        f"kind = {filt.kind}",
        "taps =",
    ]
    rows = filt.taps[None, :] if filt.separable else filt.taps
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def import_filter(text: str) -> DiscreteFilter:
    fields = {}
    rows = []
    in_taps = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if in_taps:
            rows.append([float(v) for v in line.split()])
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "taps":
            in_taps = True
        else:
            fields[key] = value
    try:
        separable = fields["separable"] == "true"
        n = int(fields["n"])
        taps = np.array(rows[0] if separable else rows, dtype=np.float64)
        rate = float(fields["rate"])
    except (KeyError, IndexError, ValueError) as exc:
        raise FilterError(f"malformed filter record: {exc}") from exc
    if taps.shape[0] != n:
        raise FilterError(f"record declares n={n} but holds {taps.shape[0]} taps")
    return DiscreteFilter(
        taps,
        rate,
        separable,
        float(fields.get("cutoff", "nan")),
        float(fields.get("half_width", "nan")),
        float(fields.get("beta", "nan")),
        fields.get("kind", "kaiser"),
    )
