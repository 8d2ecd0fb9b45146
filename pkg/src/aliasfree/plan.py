"""Per-layer band plan: cutoffs, stopbands, sampling rates and channel counts.

Cutoff ``fc`` and minimum stopband ``ft`` grow geometrically from layer 0 up
to the first critically sampled layer and stay constant afterwards. Each
layer's rate is the smallest power of two holding ``2 * ft`` (capped at the
output resolution), and the transition half-width fills the space up to
``max(ft, s / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Tuple

from .filters import kaiser_attenuation

DEFAULT_LAYERS = 14
DEFAULT_CRITICAL = 2
DEFAULT_FT0 = 2 ** 2.1
DEFAULT_FTN_RATIO = 2 ** 0.3
DEFAULT_FC0 = 2.0


class PlanError(ValueError):
    """Raised for invalid plan parameters."""


@dataclass(frozen=True)
class LayerSpec:
    index: int
    fc: float
    ft: float
    fh: float
    s_in: float
    s_out: float
    channels: int
    critical: bool

    @property
    def stopband(self) -> float:
        return self.fc + self.fh


@dataclass(frozen=True)
class LayerPlan:
    layers: Tuple[LayerSpec, ...]
    s_out: int
    n_layers: int = DEFAULT_LAYERS
    n_critical: int = DEFAULT_CRITICAL
    ft0: float = DEFAULT_FT0
    ftn_ratio: float = DEFAULT_FTN_RATIO
    fc0: float = DEFAULT_FC0

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i) -> LayerSpec:
        return self.layers[i]

    def __iter__(self):
        return iter(self.layers)

    @property
    def fc(self) -> List[float]:
        return [l.fc for l in self.layers]

    @property
    def ft(self) -> List[float]:
        return [l.ft for l in self.layers]

    @property
    def rates(self) -> List[float]:
        return [l.s_out for l in self.layers]

    @property
    def channels(self) -> List[int]:
        return [l.channels for l in self.layers]

    def with_channels(self, counts) -> "LayerPlan":
        counts = list(counts)
        if len(counts) != len(self.layers):
            raise PlanError(f"need {len(self.layers)} channel counts, got {len(counts)}")
        layers = tuple(replace(l, channels=int(c)) for l, c in zip(self.layers, counts))
        return replace(self, layers=layers)


def _is_pow2(v) -> bool:
    return v >= 1 and int(v) == v and (int(v) & (int(v) - 1)) == 0


def plan_layers(
    s_out: int,
    n_layers: int = DEFAULT_LAYERS,
    n_critical: int = DEFAULT_CRITICAL,
    ft0: float = DEFAULT_FT0,
    ftn_ratio: float = DEFAULT_FTN_RATIO,
    fc0: float = DEFAULT_FC0,
) -> LayerPlan:
    """Band plan for an ``s_out``-pixel output with ``n_layers`` layers.

    Layer ``i`` has exponent ``e = min(i / (n_layers - n_critical), 1)`` and
    ``fc = fc0 * (fcN / fc0) ** e`` with ``fcN = s_out / 2``; ``ft`` follows
    the same rule between ``ft0`` and ``fcN * ftn_ratio``. Channel counts
    are left at zero; see :func:`channel_counts`.
    """
    if not _is_pow2(s_out) or s_out < 4:
        raise PlanError(f"output resolution must be a power of two >= 4, got {s_out}")
    if not (n_layers > n_critical >= 1):
        raise PlanError(f"need n_layers > n_critical >= 1, got {n_layers}, {n_critical}")
    fcn = s_out / 2
    ftn = fcn * ftn_ratio
    if not (0 < fc0 <= fcn) or not (ft0 >= fc0) or not (ftn >= fcn):
        raise PlanError("need 0 < fc0 <= s_out/2, ft0 >= fc0 and ftn_ratio >= 1")
    span = n_layers - n_critical
    layers = []
    prev_rate = None
    for i in range(n_layers):
        e = min(i / span, 1.0)
        fc = fc0 * (fcn / fc0) ** e
        ft = ft0 * (ftn / ft0) ** e
        s = 2.0 ** math.ceil(math.log2(min(2 * ft, s_out)))
        fh = max(ft, s / 2) - fc
        layers.append(
            LayerSpec(i, fc, ft, fh, s if prev_rate is None else prev_rate, s, 0, i >= span)
        )
        prev_rate = s
    return LayerPlan(tuple(layers), int(s_out), n_layers, n_critical, ft0, ftn_ratio, fc0)


def channel_counts(plan: LayerPlan, c_base: float, c_max: int) -> List[int]:
    """``min(round(c_base / (2 fc)), c_max)``, at least 1."""
    if c_base < 1 or c_max < 1:
        raise PlanError("c_base and c_max must be >= 1")
    return [max(1, min(int(round(c_base / (2 * l.fc))), int(c_max))) for l in plan.layers]


def temporary_rate(layer: LayerSpec, oversampling: int) -> float:
    return max(layer.s_in, layer.s_out) * oversampling


def layer_attenuation(plan: LayerPlan, i: int, taps: int = 6, oversampling: int = 2) -> float:
    """Kaiser attenuation of layer ``i``'s downsampling filter at its temporary rate."""
    layer = plan[i]
    tmp = temporary_rate(layer, oversampling)
    factor = int(round(tmp / layer.s_out))
    if factor == 1:
        return math.inf
    return kaiser_attenuation(taps * factor, 2 * layer.fh / (tmp / 2))


PLAN_COLUMNS = ("layer", "s", "fc", "ft", "fh", "attenuation", "channels")


def plan_table(plan: LayerPlan, taps: int = 6, oversampling: int = 2) -> str:
    """Aligned text table, one row per layer."""
    rows = [PLAN_COLUMNS]
    for l in plan.layers:
        att = layer_attenuation(plan, l.index, taps, oversampling)
        rows.append((
            str(l.index), f"{l.s_out:g}", f"{l.fc:.4f}", f"{l.ft:.4f}", f"{l.fh:.4f}",
            "inf" if math.isinf(att) else f"{att:.2f}", str(l.channels),
        ))
    widths = [max(len(r[k]) for r in rows) for k in range(len(PLAN_COLUMNS))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows) + "\n"
