"""Forward-only alias-free synthesis network with random weights.

Each layer runs: magnitude normalization -> modulated convolution -> bias ->
filtered leaky ReLU (upsample to ``max(s_in, s_out) * m``, downsample to
``s_out``) -> crop. A final 1x1 projection produces RGB, divided by 4.

Margins are propagated backwards from the output through every filter's
support, so each layer receives exactly the input extent it needs. Since the
Fourier-feature input can be evaluated anywhere, no zero padding ever reaches
the canvas; ``margin`` is only a floor on the stored extent.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .filters import DiscreteFilter, identity_filter, resampling_filter
from .fourier import FourierFeatureBank, Transform2D, sample_bank, transformed_waves
from .nonlinearity import (
    DEFAULT_GAIN,
    DEFAULT_SLOPE,
    default_clamp,
    filtered_lrelu_fused,
    filtered_lrelu_reference,
)
from .plan import LayerPlan, channel_counts, plan_layers
from .resample import FeatureMap, crop_to_canvas

OUTPUT_SCALE = 4.0
DEMOD_EPS = 1e-8
EMA_HALF_LIFE = 20000.0
_WEIGHTS_MAGIC = b"AFW1"


class SynthesisError(ValueError):
    """Raised for inconsistent configurations, weights or styles."""


# -- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    plan: LayerPlan
    kernel_size: int = 3
    radial_filters: bool = False
    margin: int = 10
    oversampling: int = 2
    taps: int = 6
    upsampler: str = "kaiser"
    weight_seed: int = 0
    bank_seed: int = 0
    rgb_channels: int = 3
    slope: float = DEFAULT_SLOPE
    gain: float = DEFAULT_GAIN

    def __post_init__(self):
        if self.kernel_size not in (1, 3):
            raise SynthesisError(f"kernel_size must be 1 or 3, got {self.kernel_size}")
        if self.radial_filters and self.kernel_size != 1:
            raise SynthesisError("radial filters are meant for the 1x1 (rotation) configuration")
        if self.upsampler not in ("kaiser", "nearest"):
            raise SynthesisError(f"unknown upsampler {self.upsampler!r}")
        if self.oversampling < 1 or self.taps < 1 or self.margin < 0:
            raise SynthesisError("oversampling and taps must be >= 1 and margin >= 0")
        if min(self.plan.channels) < 1:
            raise SynthesisError("plan has no channel counts; use channel_counts()")

    @property
    def resolution(self) -> int:
        return self.plan.s_out


TOY_C_BASE = 512
TOY_C_MAX = 16


def translation_config(
    resolution: int = 128, c_base: float = TOY_C_BASE, c_max: int = TOY_C_MAX, ft0: float = 2 ** 2.1, **kw
) -> GeneratorConfig:
    """3x3 convolutions with separable filters."""
    plan = plan_layers(resolution, ft0=ft0)
    plan = plan.with_channels(channel_counts(plan, c_base, c_max))
    return GeneratorConfig(plan, kernel_size=3, radial_filters=False, **kw)


def rotation_config(
    resolution: int = 128, c_base: float = TOY_C_BASE, c_max: int = TOY_C_MAX, radial: bool = True, **kw
) -> GeneratorConfig:
    """1x1 convolutions, radial filters outside the critical layers, doubled capacity."""
    plan = plan_layers(resolution, ft0=kw.pop("ft0", 2 ** 2.1))
    plan = plan.with_channels(channel_counts(plan, 2 * c_base, 2 * c_max))
    return GeneratorConfig(plan, kernel_size=1, radial_filters=radial, **kw)


# -- geometry -------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerGeometry:
    up: int
    down: int
    up_filter: DiscreteFilter
    down_filter: DiscreteFilter
    in_margin: int  # before the convolution
    out_margin: int


def box_filter(rate: float, factor: int) -> DiscreteFilter:
    """Nearest-neighbour upsampling as a ``factor``-tap box at the high rate."""
    return DiscreteFilter(np.full(factor, 1.0 / factor), rate * factor, kind="box")


def _required_margin(s_in: int, s_out: int, out_margin: int, up: int, down: int, nu: int, nd: int) -> int:
    pu, pd = (nu - up) // 2, (nd - down) // 2
    u_lo = down * (-out_margin) - pd
    u_hi = down * (s_out + out_margin - 1) - pd + nd - 1
    g_lo = -((-(u_lo + pu - nu + 1)) // up)
    g_hi = (u_hi + pu) // up
    return max(-g_lo, g_hi - (s_in - 1), 0)


def layer_geometry(config: GeneratorConfig) -> List[LayerGeometry]:
    plan, m = config.plan, config.oversampling
    halo = (config.kernel_size - 1) // 2
    filters = []
    for i, layer in enumerate(plan):
        tmp = max(layer.s_in, layer.s_out) * m
        up, down = int(round(tmp / layer.s_in)), int(round(tmp / layer.s_out))
        radial = config.radial_filters and not layer.critical
        prev = plan[max(i - 1, 0)]
        if up == 1:
            fu = identity_filter(layer.s_in)
        elif config.upsampler == "nearest":
            fu = box_filter(layer.s_in, up)
        else:
            fu = resampling_filter(prev.fc, prev.fh, layer.s_in, config.taps, up, radial=radial)
        fd = resampling_filter(layer.fc, layer.fh, layer.s_out, config.taps, down, radial=radial)
        filters.append((up, down, fu, fd))
    out = [None] * len(plan)
    # the last layer only has to cover the canvas
    out_margin = 0
    for i in reversed(range(len(plan))):
        up, down, fu, fd = filters[i]
        layer = plan[i]
        need = _required_margin(
            int(layer.s_in), int(layer.s_out), out_margin, up, down, fu.size, fd.size
        )
        in_margin = max(config.margin, need + halo)
        out[i] = LayerGeometry(up, down, fu, fd, in_margin, out_margin)
        out_margin = in_margin
    return out


# -- weights and magnitude state ---------------------------------------------------------


@dataclass
class LayerWeights:
    weight: np.ndarray  # (out, in, k, k)
    bias: np.ndarray  # (out,)


@dataclass
class GeneratorWeights:
    layers: List[LayerWeights]
    rgb: LayerWeights

    def arrays(self) -> List[np.ndarray]:
        out = []
        for lw in self.layers + [self.rgb]:
            out += [lw.weight, lw.bias]
        return out


def init_weights(config: GeneratorConfig) -> GeneratorWeights:
    """Unit Gaussian scaled by ``1 / sqrt(fan_in)``, zero bias, deterministic per seed."""
    rng = np.random.default_rng(config.weight_seed)
    k = config.kernel_size
    layers = []
    c_prev = config.plan.channels[0]
    for c in config.plan.channels:
        w = rng.standard_normal((c, c_prev, k, k)) / math.sqrt(c_prev * k * k)
        layers.append(LayerWeights(w, np.zeros(c)))
        c_prev = c
    w = rng.standard_normal((config.rgb_channels, c_prev, 1, 1)) / math.sqrt(c_prev)
    return GeneratorWeights(layers, LayerWeights(w, np.zeros(config.rgb_channels)))


def save_weights(path, weights: GeneratorWeights) -> None:
    """Bundle: magic, u32 array count, per array (u32 ndim, u32 dims...), then float32 data."""
    arrays = weights.arrays()
    header = [_WEIGHTS_MAGIC, struct.pack("<I", len(arrays))]
    for a in arrays:
        header.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
    body = [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays]
    Path(path).write_bytes(b"".join(header + body))


def load_weights(path) -> GeneratorWeights:
    raw = Path(path).read_bytes()
    if raw[:4] != _WEIGHTS_MAGIC:
        raise SynthesisError(f"bad weight bundle magic {raw[:4]!r}")
    pos = 4
    try:
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shapes.append(struct.unpack_from(f"<{ndim}I", raw, pos))
            pos += 4 * ndim
        arrays = []
        for shape in shapes:
            n = int(np.prod(shape))
            arrays.append(np.frombuffer(raw, "<f4", n, pos).reshape(shape).astype(np.float64))
            pos += 4 * n
    except (struct.error, ValueError) as exc:
        raise SynthesisError(f"truncated weight bundle: {exc}") from exc
    if pos != len(raw) or count % 2 or count < 2:
        raise SynthesisError("weight bundle has unexpected size or array count")
    pairs = [LayerWeights(arrays[i], arrays[i + 1]) for i in range(0, count, 2)]
    return GeneratorWeights(pairs[:-1], pairs[-1])


@dataclass
class EmaState:
    """Per-layer running mean of squares; the last entry belongs to the RGB projection."""

    sigma2: np.ndarray
    half_life: float = EMA_HALF_LIFE
    frozen: bool = False

    @classmethod
    def fresh(cls, layers: int, half_life: float = EMA_HALF_LIFE) -> "EmaState":
        return cls(np.ones(layers), half_life)

    def decay(self, batch: int) -> float:
        return 0.0 if self.half_life <= 0 else 0.5 ** (batch / self.half_life)


def ema_gain(fmap: FeatureMap, state: EmaState, index: int, training: bool = False) -> float:
    """``1 / sqrt(sigma2)``; with ``training`` the state absorbs this batch first."""
    if training and not state.frozen:
        batch = fmap.data.shape[0] if fmap.data.ndim == 4 else 1
        beta = state.decay(batch)
        mean_sq = float(np.mean(np.square(fmap.data)))
        state.sigma2[index] = beta * state.sigma2[index] + (1 - beta) * mean_sq
    if not state.sigma2[index] > 0:
        raise SynthesisError(f"magnitude state of layer {index} is not positive")
    return 1.0 / math.sqrt(state.sigma2[index])


def ema_normalize(fmap: FeatureMap, state: EmaState, index: int, training: bool = False) -> FeatureMap:
    """Divide by ``sqrt(sigma2)``; with ``training`` the state absorbs this batch first."""
    gain = ema_gain(fmap, state, index, training)
    return fmap.with_data(fmap.data * np.asarray(gain, dtype=fmap.data.dtype))


# -- convolutions --------------------------------------------------------------------------


def _check_weights(fmap: FeatureMap, weight: np.ndarray):
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3] or weight.shape[2] % 2 == 0:
        raise SynthesisError(f"weights must be (out, in, k, k) with odd k, got {weight.shape}")
    channels = fmap.data.shape[-3] if fmap.data.ndim >= 3 else 1
    if weight.shape[1] != channels:
        raise SynthesisError(f"weights expect {weight.shape[1]} input channels, map has {channels}")
    halo = weight.shape[2] // 2
    if fmap.margin < halo:
        raise SynthesisError(f"a {weight.shape[2]}x{weight.shape[2]} convolution needs margin >= {halo}")


def _conv_valid(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Cross-correlation over the last two axes, keeping only fully covered samples.

    ``weight`` is ``(out, in, k, k)`` or, for a batched ``x``, ``(batch, out, in, k, k)``.
    """
    k = weight.shape[-1]
    h, w = x.shape[-2] - k + 1, x.shape[-1] - k + 1
    lead = x.shape[:-3]
    c_out, c_in = weight.shape[-4:-2]
    flat = np.ascontiguousarray(x).reshape(lead + (c_in, -1))
    # mix channels for every tap at once, then add the shifted per-tap planes
    mats = np.moveaxis(weight, (-2, -1), (-4, -3)).reshape(weight.shape[:-4] + (k * k * c_out, c_in))
    per_tap = np.matmul(mats, flat).reshape(lead + (k, k, c_out) + x.shape[-2:])
    if k == 1:
        return per_tap[..., 0, 0, :, :, :]
    y = per_tap[..., 0, 0, :, :h, :w].copy()
    for dy in range(k):
        for dx in range(k):
            if dy or dx:
                y += per_tap[..., dy, dx, :, dy : dy + h, dx : dx + w]
    return y


def conv2d(fmap: FeatureMap, weight: np.ndarray) -> FeatureMap:
    """Same-rate convolution; a kxk kernel shrinks the margin by ``k // 2``."""
    weight = np.asarray(weight)
    _check_weights(fmap, weight)
    x = fmap.data if fmap.data.ndim >= 3 else fmap.data[None]
    y = _conv_valid(x, weight.astype(x.dtype))
    return FeatureMap(y, fmap.rate, fmap.margin - weight.shape[2] // 2)


def modulated_weights(weight: np.ndarray, style: np.ndarray, demodulate: bool = True, input_gain: float = 1.0):
    """``weight * style`` per input channel, each output filter rescaled to unit norm.

    ``input_gain`` multiplies the result after demodulation, so it scales the
    output rather than being normalized away.
    """
    weight = np.asarray(weight, dtype=np.float64)
    style = np.asarray(style, dtype=np.float64)
    if not np.all(np.isfinite(style)):
        raise SynthesisError("style contains non-finite values")
    if style.shape[-1] != weight.shape[1]:
        raise SynthesisError(f"style has {style.shape[-1]} entries, weights expect {weight.shape[1]}")
    w = weight * style[..., None, :, None, None]
    if demodulate:
        w = w / np.sqrt(np.sum(w**2, axis=(-3, -2, -1), keepdims=True) + DEMOD_EPS)
    return w * input_gain


def modulated_conv(
    fmap: FeatureMap, weight: np.ndarray, style: np.ndarray, demodulate: bool = True, input_gain: float = 1.0
) -> FeatureMap:
    """Convolution with :func:`modulated_weights`.

    ``style`` is ``(in,)`` or ``(batch, in)`` for a batched map ``(batch, in, h, w)``.
    """
    _check_weights(fmap, np.asarray(weight))
    w = modulated_weights(weight, style, demodulate, input_gain)
    x = fmap.data if fmap.data.ndim >= 3 else fmap.data[None]
    if w.ndim == 5 and x.ndim != 4:
        raise SynthesisError("per-sample styles need a batched map")
    y = _conv_valid(x, w.astype(x.dtype))
    return FeatureMap(y, fmap.rate, fmap.margin - weight.shape[2] // 2)


# -- the generator ------------------------------------------------------------------------


def _as_transforms(transforms, batch: Optional[int]) -> List[Transform2D]:
    if isinstance(transforms, Transform2D):
        return [transforms] * (batch or 1)
    return list(transforms)


class Generator:
    """Random-weight synthesis network bound to a configuration.

    ``render`` maps a batch of input transforms (and optional per-sample
    style vectors) to canvas-only RGB images of shape ``(batch, 3, s, s)``.
    """

    def __init__(
        self,
        config: GeneratorConfig,
        weights: Optional[GeneratorWeights] = None,
        bank: Optional[FourierFeatureBank] = None,
        ema: Optional[EmaState] = None,
        dtype=np.float64,
        impl: str = "fused",
        tile: int = 64,
    ):
        self.config = config
        self.weights = weights if weights is not None else init_weights(config)
        self._check_weight_shapes()
        self.bank = bank if bank is not None else sample_bank(
            config.plan.channels[0], config.plan.fc0, config.bank_seed
        )
        if self.bank.channels != config.plan.channels[0]:
            raise SynthesisError("bank channel count must match the first layer")
        self.ema = ema if ema is not None else EmaState.fresh(len(config.plan) + 1)
        self.dtype = np.dtype(dtype)
        self.clamp = default_clamp(self.dtype)
        if impl not in ("fused", "reference"):
            raise SynthesisError(f"unknown implementation {impl!r}")
        self.impl = impl
        self.tile = tile
        self.geometry = layer_geometry(config)

    def _check_weight_shapes(self):
        cfg = self.config
        if len(self.weights.layers) != len(cfg.plan):
            raise SynthesisError(f"need weights for {len(cfg.plan)} layers, got {len(self.weights.layers)}")
        c_prev = cfg.plan.channels[0]
        k = cfg.kernel_size
        for i, (lw, c) in enumerate(zip(self.weights.layers, cfg.plan.channels)):
            if lw.weight.shape != (c, c_prev, k, k) or lw.bias.shape != (c,):
                raise SynthesisError(f"layer {i} weights have shape {lw.weight.shape}, expected {(c, c_prev, k, k)}")
            c_prev = c
        if self.weights.rgb.weight.shape != (cfg.rgb_channels, c_prev, 1, 1):
            raise SynthesisError("RGB projection has the wrong shape")

    # styles are (batch, in) per layer, plus one for the RGB projection
    def default_styles(self, batch: int) -> List[np.ndarray]:
        return [np.ones((batch, lw.weight.shape[1])) for lw in self.weights.layers + [self.weights.rgb]]

    def random_styles(self, batch: int, rng: np.random.Generator, spread: float = 0.5) -> List[np.ndarray]:
        """Per-sample styles ``1 + spread * N(0, 1)``, standing in for a latent code."""
        return [1.0 + spread * rng.standard_normal(s.shape) for s in self.default_styles(batch)]

    @property
    def resolution(self) -> int:
        return self.config.resolution

    def draw_latents(self, count: int, rng: np.random.Generator, spread: float = 0.5):
        """Per-sample base transforms and styles."""
        return random_base_transforms(count, rng), self.random_styles(count, rng, spread)

    def input_map(self, transforms: Sequence[Transform2D]) -> FeatureMap:
        layer = self.config.plan[0]
        margin = self.geometry[0].in_margin
        rate = layer.s_in
        samples = int(round(rate)) + 2 * margin
        pos = (np.arange(samples) - margin + 0.5) / rate
        data = np.empty((len(transforms), self.bank.channels, samples, samples), dtype=self.dtype)
        for b, t in enumerate(transforms):
            f, phase = transformed_waves(self.bank, t)
            arg_x = f[:, 0, None] * pos[None, :]
            arg_y = f[:, 1, None] * pos[None, :] + phase[:, None]
            data[b] = np.sin(2 * np.pi * (arg_y[:, :, None] + arg_x[:, None, :]))
        return FeatureMap(data, rate, margin)

    def run_layer(self, fmap: FeatureMap, i: int, style: np.ndarray, training: bool = False) -> FeatureMap:
        cfg = self.config
        geo = self.geometry[i]
        lw = self.weights.layers[i]
        if not math.isclose(fmap.rate, cfg.plan[i].s_in):
            raise SynthesisError(f"layer {i} expects rate {cfg.plan[i].s_in}, got {fmap.rate}")
        gain = ema_gain(fmap, self.ema, i, training)
        x = modulated_conv(fmap, lw.weight, style, input_gain=gain)
        x.data += lw.bias[:, None, None].astype(x.data.dtype)
        op = filtered_lrelu_fused if self.impl == "fused" else filtered_lrelu_reference
        kw = {"tile": self.tile} if self.impl == "fused" else {}
        return op(
            x, geo.up, geo.down, geo.up_filter, geo.down_filter,
            slope=cfg.slope, gain=cfg.gain, clamp=self.clamp, out_margin=geo.out_margin,
            dtype=self.dtype, **kw,
        )

    def to_rgb(self, fmap: FeatureMap, style: np.ndarray, training: bool = False) -> np.ndarray:
        x = crop_to_canvas(fmap, 0)
        gain = ema_gain(x, self.ema, len(self.config.plan), training)
        rgb = self.weights.rgb
        y = modulated_conv(x, rgb.weight, style, demodulate=False, input_gain=gain)
        return ((y.data + rgb.bias[:, None, None]) / OUTPUT_SCALE).astype(self.dtype, copy=False)

    def render(self, transforms, styles: Optional[List[np.ndarray]] = None, training: bool = False) -> np.ndarray:
        transforms = _as_transforms(transforms, None)
        styles = styles if styles is not None else self.default_styles(len(transforms))
        x = self.input_map(transforms)
        for i in range(len(self.config.plan)):
            x = self.run_layer(x, i, styles[i], training)
        return self.to_rgb(x, styles[-1], training)

    def calibrate(self, samples: int = 8, seed: int = 0, spread: float = 0.5) -> EmaState:
        """Set every layer's magnitude state from one batch, then freeze it."""
        rng = np.random.default_rng(seed)
        transforms = random_base_transforms(samples, rng)
        styles = self.random_styles(samples, rng, spread)
        half_life, self.ema.half_life, self.ema.frozen = self.ema.half_life, 0.0, False
        self.render(transforms, styles, training=True)
        self.ema.half_life, self.ema.frozen = half_life, True
        return self.ema


def random_base_transforms(count: int, rng: np.random.Generator) -> List[Transform2D]:
    """Uniform rotation and a translation within half a canvas, per sample."""
    angles = rng.uniform(0, 2 * np.pi, count)
    shifts = rng.uniform(-0.5, 0.5, (count, 2))
    return [Transform2D.from_angle(a, t) for a, t in zip(angles, shifts)]


def run_generator(
    bank: FourierFeatureBank,
    transform: Transform2D,
    config: GeneratorConfig,
    weights: Optional[GeneratorWeights] = None,
    styles: Optional[List[np.ndarray]] = None,
    dtype=np.float64,
) -> np.ndarray:
    """Single image ``(3, s, s)`` from a freshly calibrated generator."""
    gen = Generator(config, weights, bank, dtype=dtype)
    gen.calibrate()
    if styles is not None:
        styles = [np.asarray(s, dtype=np.float64)[None] for s in styles]
    return gen.render([transform], styles)[0]


def save_styles(path, styles: Sequence[np.ndarray]) -> None:
    """One text row per layer (RGB projection last)."""
    Path(path).write_text("".join(" ".join(f"{v:.17g}" for v in np.ravel(s)) + "\n" for s in styles))


def load_styles(path) -> List[np.ndarray]:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    try:
        return [np.array([float(v) for v in r]) for r in rows]
    except ValueError as exc:
        raise SynthesisError(f"malformed style file: {exc}") from exc
