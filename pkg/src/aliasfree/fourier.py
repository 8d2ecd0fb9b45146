"""Fourier-feature network input with closed-form rotation and translation.

Channel ``k`` is the planar wave ``sin(2 pi (f_k . p + phi_k))`` over canvas
coordinates ``p = (x, y)``. Transforming the continuous content amounts to
rewriting each wave's frequency and phase, so a transformed input is exact
to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .resample import FeatureMap

CANVAS_CENTER = np.array([0.5, 0.5])


class FourierError(ValueError):
    """Raised for invalid banks, transforms or sampling rates."""


@dataclass(frozen=True)
class FourierFeatureBank:
    freqs: np.ndarray  # (channels, 2) as (fx, fy), cycles per canvas unit
    phases: np.ndarray  # (channels,) in [0, 1)
    band_fc: float
    seed: int

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64).reshape(-1, 2)
        phases = np.asarray(self.phases, dtype=np.float64).reshape(-1)
        if freqs.shape[0] != phases.shape[0] or freqs.shape[0] < 1:
            raise FourierError("bank needs matching, non-empty frequency and phase arrays")
        if np.any(np.hypot(freqs[:, 0], freqs[:, 1]) > self.band_fc * (1 + 1e-12)):
            raise FourierError(f"frequencies must lie within the disc of radius {self.band_fc}")
        freqs.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "phases", phases)

    @property
    def channels(self) -> int:
        return self.freqs.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FourierFeatureBank):
            return NotImplemented
        return (
            self.band_fc == other.band_fc
            and self.seed == other.seed
            and np.array_equal(self.freqs, other.freqs)
            and np.array_equal(self.phases, other.phases)
        )

    __hash__ = None


def sample_bank(channels: int, band_fc: float = 2.0, seed: int = 0) -> FourierFeatureBank:
    """Frequencies uniform in the disc of radius ``band_fc``, phases uniform in [0, 1)."""
    if channels < 1:
        raise FourierError(f"channels must be >= 1, got {channels}")
    if not band_fc > 0:
        raise FourierError(f"band_fc must be positive, got {band_fc}")
    rng = np.random.default_rng(seed)
    radius = band_fc * np.sqrt(rng.random(channels))
    theta = 2 * np.pi * rng.random(channels)
    freqs = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    phases = rng.random(channels)
    return FourierFeatureBank(freqs, phases, float(band_fc), int(seed))


@dataclass(frozen=True)
class Transform2D:
    """Raw parameters ``(r_c, r_s, t_x, t_y)``; translation in canvas units.

    The content is rotated about the canvas centre by ``atan2(r_s, r_c)`` and
    then translated. The whole vector is divided by ``|(r_c, r_s)|`` first, so
    only the direction of the rotation part matters.
    """

    rc: float = 1.0
    rs: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def from_angle(cls, angle: float = 0.0, translation=(0.0, 0.0)) -> "Transform2D":
        """Angle in radians, translation in canvas units."""
        return cls(math.cos(angle), math.sin(angle), float(translation[0]), float(translation[1]))

    def normalized(self) -> Tuple[float, np.ndarray]:
        return normalize_transform(self)

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous map from original to transformed canvas coordinates."""
        angle, t = normalize_transform(self)
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        out = np.eye(3)
        out[:2, :2] = rot
        out[:2, 2] = CANVAS_CENTER - rot @ CANVAS_CENTER + t
        return out

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Transform2D":
        angle = math.atan2(m[1, 0], m[0, 0])
        rot = m[:2, :2]
        t = m[:2, 2] - CANVAS_CENTER + rot @ CANVAS_CENTER
        return cls.from_angle(angle, t)

    def then(self, outer: "Transform2D") -> "Transform2D":
        """Apply ``self`` first, then ``outer``."""
        return Transform2D.from_matrix(outer.matrix() @ self.matrix())


IDENTITY = Transform2D()


def normalize_transform(t: Transform2D) -> Tuple[float, np.ndarray]:
    """Return ``(angle in radians, translation vector)``."""
    norm = math.hypot(t.rc, t.rs)
    if norm == 0 or not math.isfinite(norm):
        raise FourierError("rotation part (r_c, r_s) must be a finite non-zero vector")
    return math.atan2(t.rs / norm, t.rc / norm), np.array([t.tx / norm, t.ty / norm])


def transformed_waves(bank: FourierFeatureBank, transform: Transform2D = IDENTITY):
    """Frequencies and phases of the bank after transforming its content."""
    angle, t = normalize_transform(transform)
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    f = bank.freqs
    f_new = f @ rot.T
    # z'(p) = z(R^-1 (p - c - t) + c)
    phases = bank.phases + f @ CANVAS_CENTER - f_new @ (CANVAS_CENTER + t)
    return f_new, phases


def synthesize_input(
    bank: FourierFeatureBank, transform: Transform2D = IDENTITY, rate: float = 16, margin: int = 10
) -> FeatureMap:
    """Evaluate the transformed bank at the sample points of the extended canvas."""
    if rate < 2 * bank.band_fc:
        raise FourierError(f"rate {rate} cannot represent frequencies up to {bank.band_fc}")
    samples = int(round(rate)) + 2 * margin
    pos = (np.arange(samples) - margin + 0.5) / rate
    f, phase = transformed_waves(bank, transform)
    arg_x = f[:, 0, None] * pos[None, :]
    arg_y = f[:, 1, None] * pos[None, :] + phase[:, None]
    data = np.sin(2 * np.pi * (arg_y[:, :, None] + arg_x[:, None, :]))
    return FeatureMap(data, rate, margin)


def bank_to_text(bank: FourierFeatureBank) -> str:
    lines = [
        "# aliasfree fourier bank",
        f"seed = {bank.seed}",
        f"band_fc = {bank.band_fc!r}",
        f"channels = {bank.channels}",
        "waves =",
    ]
    lines += [f"{fx:.17g} {fy:.17g} {ph:.17g}" for (fx, fy), ph in zip(bank.freqs, bank.phases)]
    return "\n".join(lines) + "\n"


def bank_from_text(text: str) -> FourierFeatureBank:
    header, rows, in_rows = {}, [], False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if in_rows:
            rows.append([float(v) for v in line.split()])
        elif line == "waves =":
            in_rows = True
        else:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
    try:
        channels = int(header["channels"])
        bank = FourierFeatureBank(
            np.array([r[:2] for r in rows]), np.array([r[2] for r in rows]),
            float(header["band_fc"]), int(header["seed"]),
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise FourierError(f"malformed bank record: {exc}") from exc
    if bank.channels != channels:
        raise FourierError(f"header says {channels} channels, found {bank.channels}")
    return bank


def save_bank(path, bank: FourierFeatureBank) -> None:
    Path(path).write_text(bank_to_text(bank))


def load_bank(path) -> FourierFeatureBank:
    return bank_from_text(Path(path).read_text())
