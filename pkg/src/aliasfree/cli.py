"""Command-line entry point.

Frequencies given on the command line are fractions of the relevant sampling
rate (``--cutoff 0.25`` at ``--rate 64`` means 16 cycles per canvas unit).
Every subcommand accepts ``--seed``, ``--f64``/``--f32``, ``--out``,
``--threads`` and ``--config FILE``. The config file holds ``key = value``
lines named after long options; options given on the command line win.
Exit status is 0 on success, 2 for usage errors and 1 for runtime errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


class UsageError(Exception):
    """Bad flags or config entries; reported with exit status 2."""


# -- output helpers -------------------------------------------------------------------


def _emit(args, text: str) -> None:
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _dtype(args):
    return np.float32 if args.f32 else np.float64


def _is_pow2(v: int) -> bool:
    return v >= 1 and v & (v - 1) == 0


# -- generator construction -------------------------------------------------------------


def _add_generator_flags(p: argparse.ArgumentParser, rotation_default: bool = False) -> None:
    from .synthesis import TOY_C_BASE, TOY_C_MAX

    p.add_argument("--res", type=int, default=128, help="output resolution (power of two)")
    p.add_argument("--kind", choices=("translation", "rotation"),
                   default="rotation" if rotation_default else "translation",
                   help="3x3 separable or 1x1 radial configuration")
    p.add_argument("--non-radial", action="store_true", help="separable filters in the rotation configuration")
    p.add_argument("--c-base", type=float, default=TOY_C_BASE)
    p.add_argument("--c-max", type=int, default=TOY_C_MAX)
    p.add_argument("--oversampling", type=int, default=2)
    p.add_argument("--ft0-log2", type=float, default=2.1, help="log2 of the first layer's stopband")
    p.add_argument("--upsampler", choices=("kaiser", "nearest"), default="kaiser")
    p.add_argument("--margin", type=int, default=10)
    p.add_argument("--weight-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--tile", type=int, default=64, help="fused kernel tile size; 0 disables tiling")


def _build_generator(args):
    from .synthesis import Generator, rotation_config, translation_config

    if not _is_pow2(args.res) or args.res < 16:
        raise UsageError(f"--res must be a power of two >= 16, got {args.res}")
    seed = args.seed if args.weight_seed is None else args.weight_seed
    kw = dict(
        c_base=args.c_base, c_max=args.c_max, ft0=2 ** args.ft0_log2,
        oversampling=args.oversampling, upsampler=args.upsampler, margin=args.margin,
        weight_seed=seed, bank_seed=seed,
    )
    if args.kind == "rotation":
        cfg = rotation_config(args.res, radial=not args.non_radial, **kw)
    else:
        cfg = translation_config(args.res, **kw)
    gen = Generator(cfg, dtype=_dtype(args), tile=args.tile)
    gen.calibrate(seed=seed)
    return gen


# -- subcommands ------------------------------------------------------------------------


def cmd_design_filter(args) -> int:
    from .filters import (
        FilterSpec, design_gaussian, design_lanczos, design_lowpass_1d, design_radial_2d,
        export_filter, stopband_attenuation,
    )

    rate = args.rate
    spec = FilterSpec(args.cutoff * rate, args.half_width * rate, rate, args.n)
    if args.kind == "kaiser":
        filt = design_lowpass_1d(spec, args.beta)
    elif args.kind == "radial":
        filt = design_radial_2d(spec, args.beta)
    elif args.kind == "lanczos":
        filt = design_lanczos(spec.cutoff, args.a, spec)
    else:
        filt = design_gaussian(spec.cutoff, args.sigma, spec)
    lines = [export_filter(filt).rstrip("\n"), f"attenuation_db = {spec.attenuation:.6f}"]
    if filt.separable and spec.cutoff + spec.half_width < rate / 2:
        lines.append(f"measured_stopband_db = {stopband_attenuation(filt, spec.cutoff + spec.half_width):.6f}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_plan(args) -> int:
    from .plan import channel_counts, plan_layers, plan_table

    plan = plan_layers(args.res, args.layers, args.critical, ft0=2 ** args.ft0_log2)
    plan = plan.with_channels(channel_counts(plan, args.c_base, args.c_max))
    _emit(args, plan_table(plan, args.taps, args.oversampling))
    return 0


def cmd_generate(args) -> int:
    from .fourier import Transform2D
    from .resample import FeatureMap, write_aft, write_png

    if not args.out or args.out == "-":
        raise UsageError("generate needs --out FILE.png or FILE.aft")
    gen = _build_generator(args)
    t = Transform2D.from_angle(math.radians(args.angle), (args.tx, args.ty))
    rng = np.random.default_rng(args.seed)
    styles = gen.random_styles(1, rng) if args.random_styles else None
    img = gen.render([t], styles)[0]
    fmap = FeatureMap(np.asarray(img, dtype=np.float64), args.res, 0)
    if args.out.lower().endswith(".aft"):
        write_aft(args.out, fmap)
    else:
        write_png(args.out, fmap)
    return 0


def _metric_command(name):
    def run(args) -> int:
        from .metrics import eq_r, eq_t_frac, eq_t_integer, reports_csv

        if args.samples < 1 or args.share < 1:
            raise UsageError("--samples and --share must be >= 1")
        gen = _build_generator(args)
        if name == "eq-r":
            rep = eq_r(gen, args.samples, args.seed, angles_per_latent=args.share)
        else:
            fn = eq_t_integer if name == "eq-t" else eq_t_frac
            rep = fn(gen, args.samples, args.seed, offsets_per_latent=args.share)
        _emit(args, reports_csv([rep]) if args.csv else rep.text() + "\n")
        return 0

    return run


def cmd_bench(args) -> int:
    from .nonlinearity import BENCH_FACTORS, bench_csv, bench_fused

    factors = BENCH_FACTORS
    if args.cell:
        try:
            up, down = (int(v) for v in args.cell.split("x"))
        except ValueError:
            raise UsageError(f"--cell expects UPxDOWN such as 4x2, got {args.cell!r}") from None
        factors = ((up, down),)
    sep = ((True, True), (True, False), (False, True), (False, False))
    if args.separable_only:
        sep = ((True, True),)
    rows = bench_fused(
        size=args.size, channels=args.channels, factors=factors, separability=sep,
        taps=args.taps, repeats=args.repeats, seed=args.seed, dtype=_dtype(args), tile=args.tile,
    )
    _emit(args, bench_csv(rows))
    return 0


def cmd_spectrum(args) -> int:
    from .resample import read_aft, read_png
    from .spectra import (
        average_power_spectrum, dataset_stats, slice_csv, spectrum_csv, spectrum_slice, write_heatmap,
    )

    if args.inputs:
        maps = [read_aft(p) if p.lower().endswith(".aft") else read_png(p) for p in args.inputs]
        images = np.stack([m.canvas() for m in maps])
    elif args.generate > 0:
        gen = _build_generator(args)
        rng = np.random.default_rng(args.seed)
        transforms, styles = gen.draw_latents(args.generate, rng)
        images = gen.render(transforms, styles)
    else:
        raise UsageError("spectrum needs input files or --generate N")
    mean, std = dataset_stats(images)
    if args.mean is not None:
        mean = args.mean
    if args.std is not None:
        std = args.std
    spec = average_power_spectrum(images, mean, std)
    _emit(args, spectrum_csv(spec))
    for angle in args.angles:
        r, v = spectrum_slice(spec, angle % 360)
        path = f"{args.slice_prefix}{angle:g}.csv"
        Path(path).write_text(slice_csv(r, v))
    if args.png:
        write_heatmap(args.png, spec)
    return 0


def cmd_resample(args) -> int:
    from .filters import resampling_filter
    from .resample import FeatureMap, downsample, read_aft, read_png, upsample, write_aft, write_png

    if not args.out or args.out == "-":
        raise UsageError("resample needs --out FILE.png or FILE.aft")
    src = read_aft(args.input) if args.input.lower().endswith(".aft") else read_png(args.input)
    x = src
    if args.up > 1:
        f = resampling_filter(args.cutoff * x.rate, args.half_width * x.rate, x.rate, args.taps, args.up)
        x = upsample(x, args.up, f)
    if args.down > 1:
        low = x.rate / args.down
        f = resampling_filter(args.cutoff * low, args.half_width * low, low, args.taps, args.down)
        x = downsample(x, args.down, f, out_margin=x.margin // args.down)
    out = FeatureMap(x.data.astype(_dtype(args)), x.rate, x.margin)
    if args.out.lower().endswith(".aft"):
        write_aft(args.out, out)
    else:
        write_png(args.out, out)
    return 0


# -- parser --------------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0)
    prec = g.add_mutually_exclusive_group()
    prec.add_argument("--f64", action="store_true", help="64-bit arithmetic (default)")
    prec.add_argument("--f32", action="store_true", help="32-bit arithmetic")
    g.add_argument("--out", default=None, help="output file ('-' or omitted: stdout where possible)")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    g.add_argument("--config", default=None, help="key = value file of long options")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="aliasfree", description="Alias-free signal processing toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("design-filter", parents=[common], help="design a low-pass filter and report its attenuation")
    p.add_argument("--n", type=int, required=True, help="number of taps")
    p.add_argument("--cutoff", type=float, required=True, help="cutoff as a fraction of the rate")
    p.add_argument("--half-width", type=float, required=True, help="transition half-width as a fraction of the rate")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--kind", choices=("kaiser", "radial", "lanczos", "gaussian"), default="kaiser")
    p.add_argument("--beta", type=float, default=None, help="override the Kaiser shape parameter")
    p.add_argument("--a", type=float, default=3.0, help="Lanczos extent")
    p.add_argument("--sigma", type=float, default=0.5, help="Gaussian standard deviation")
    p.set_defaults(func=cmd_design_filter)

    p = sub.add_parser("plan", parents=[common], help="print the per-layer band plan")
    p.add_argument("--res", type=int, default=256)
    p.add_argument("--layers", type=int, default=14)
    p.add_argument("--critical", type=int, default=2)
    p.add_argument("--ft0-log2", type=float, default=2.1)
    p.add_argument("--c-base", type=float, default=32768)
    p.add_argument("--c-max", type=int, default=512)
    p.add_argument("--taps", type=int, default=6)
    p.add_argument("--oversampling", type=int, default=2)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", parents=[common], help="render one image with a random-weight generator")
    _add_generator_flags(p)
    p.add_argument("--angle", type=float, default=0.0, help="input rotation in degrees")
    p.add_argument("--tx", type=float, default=0.0, help="input translation in canvas units")
    p.add_argument("--ty", type=float, default=0.0)
    p.add_argument("--random-styles", action="store_true")
    p.set_defaults(func=cmd_generate)

    for name, what, rot, samples in (
        ("eq-t", "integer translation", False, 1000),
        ("eq-t-frac", "fractional translation", False, 1000),
        ("eq-r", "rotation", True, 100),
    ):
        p = sub.add_parser(name, parents=[common], help=f"{what} equivariance PSNR")
        _add_generator_flags(p, rotation_default=rot)
        p.add_argument("--samples", type=int, default=samples)
        p.add_argument("--share", type=int, default=1, help="transformed renders per reference render")
        p.add_argument("--csv", action="store_true", help="CSV instead of a text line")
        p.set_defaults(func=_metric_command(name))

    p = sub.add_parser("bench", parents=[common], help="fused versus reference filtered nonlinearity timings")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--taps", type=int, default=6)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--cell", default=None, help="only this UPxDOWN factor pair, e.g. 4x2")
    p.add_argument("--separable-only", action="store_true")
    p.add_argument("--tile", type=int, default=64)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("spectrum", parents=[common], help="average power spectrum and slices")
    p.add_argument("inputs", nargs="*", help="PNG or AFT images")
    p.add_argument("--generate", type=int, default=0, help="analyse N generator outputs instead")
    _add_generator_flags(p)
    p.add_argument("--mean", type=float, default=None, help="dataset mean (default: measured)")
    p.add_argument("--std", type=float, default=None, help="dataset std (default: measured)")
    p.add_argument("--angles", type=float, nargs="*", default=[0.0, 45.0])
    p.add_argument("--slice-prefix", default="slice_", help="slice CSVs go to PREFIX<angle>.csv")
    p.add_argument("--png", default=None, help="optional heatmap PNG")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("resample", parents=[common], help="resample a PNG or AFT file")
    p.add_argument("input")
    p.add_argument("--up", type=int, default=1)
    p.add_argument("--down", type=int, default=1)
    p.add_argument("--cutoff", type=float, default=0.4, help="fraction of the lower rate")
    p.add_argument("--half-width", type=float, default=0.1, help="fraction of the lower rate")
    p.add_argument("--taps", type=int, default=6, help="taps at the lower rate")
    p.set_defaults(func=cmd_resample)
    return parser


# -- config files ------------------------------------------------------------------------------


def read_config(path) -> List[tuple]:
    entries = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{n}: expected key = value")
        entries.append((key.strip().replace("_", "-"), value.strip()))
    return entries


def _config_tokens(subparser: argparse.ArgumentParser, entries) -> List[str]:
    options = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                options[opt[2:]] = action
    tokens = []
    for key, value in entries:
        if key in ("config", "help"):
            raise UsageError(f"config key {key!r} is not allowed")
        if key == "precision":
            key, value = value.lower(), "true"
        action = options.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if action.nargs == 0:
            v = value.lower()
            if v in TRUE_WORDS:
                tokens.append("--" + key)
            elif v not in FALSE_WORDS:
                raise UsageError(f"config key {key!r} expects true or false, got {value!r}")
        else:
            tokens += ["--" + key] + value.split()
    return tokens


def _expand_config(parser: argparse.ArgumentParser, argv: List[str]) -> List[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not argv or argv[0] not in _subparsers(parser):
        return argv
    tokens = _config_tokens(_subparsers(parser)[argv[0]], read_config(known.config))
    return [argv[0]] + tokens + argv[1:]


def _subparsers(parser: argparse.ArgumentParser) -> dict:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _set_threads(n: int) -> None:
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_config(parser, argv))
        _set_threads(args.threads)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aliasfree: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"aliasfree: error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
