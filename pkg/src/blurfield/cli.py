"""Command-line interface.

Exit codes: 0 on success, 1 for usage, parse and file-format errors, 2 for
numerical domain errors (non-SPD covariances, shape mismatches, failed
gradient checks, divergence).
"""
from __future__ import annotations

import argparse
import logging
import math
import statistics
import sys
import time

import numpy as np

from . import io
from .covariance import (
    CovMatrix,
    CovParams,
    Family,
    format_cov_spec,
    params_to_matrix,
    parse_cov_spec,
)
from .dynamic import CovField, as_tap_weights, dynamic_gauss_conv
from .errors import BlurfieldError, DivergenceError, DomainError, ShapeError
from .filtering import (
    BoundaryMode,
    blurred_dilated_conv,
    conv2d,
    dilated_conv,
    gaussian_blur,
    separable_conv,
)
from .gradcheck import check_dynamic_path, check_kernel_path
from .kernel import dog_kernel, gaussian_kernel, separable_1d, support_radius
from .optimize import DEFAULT_MARGIN, RecoveryConfig, recover_blur
from .synth import checkerboard, gaussian_bump, smooth_texture, to_unit_range

log = logging.getLogger("blurfield")

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _cov_arg(text):
    try:
        return parse_cov_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _radius_arg(text):
    parts = text.split(",")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"radius must be 'R' or 'RY,RX', got {text!r}") from None
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"radius must be 'R' or 'RY,RX' with values >= 1, got {text!r}")
    return tuple(vals)


def _sizes_arg(text):
    try:
        sizes = [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 8:
        raise argparse.ArgumentTypeError("sizes must be at least 8")
    return sizes


def _mode_arg(text):
    try:
        return BoundaryMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _interior_variance(image, margin):
    h, w = image.shape
    if 2 * margin >= min(h, w):
        raise ShapeError(f"margin {margin} leaves no interior in a {h}x{w} image")
    return float(np.var(image[margin:h - margin, margin:w - margin]))


# -- subcommands -------------------------------------------------------------


def cmd_kernel(args):
    if args.dog:
        k = dog_kernel(params_to_matrix(args.dog[0]), params_to_matrix(args.dog[1]))
    else:
        k = gaussian_kernel(params_to_matrix(args.cov), args.radius)
    io.write_kernel_csv(args.out, k)
    return EXIT_OK


def cmd_blur(args):
    img = io.read_pgm(args.input)
    out = gaussian_blur(img, params_to_matrix(args.cov), args.mode, args.workers)
    io.write_pgm(args.out, out)
    return EXIT_OK


def _default_init(family):
    # a smoothed delta: sigma 0.5 on each axis, no correlation
    half = math.log(0.5)
    p = {Family.SPHERICAL: (half,), Family.DIAGONAL: (half, half), Family.FULL: (half, 0.0, half)}
    return CovParams(family, p[family])


def cmd_recover(args):
    ref = io.read_pgm(args.reference)
    blurred = io.read_pgm(args.blurred)
    if ref.shape != blurred.shape:
        raise ShapeError(f"reference is {ref.shape} but blurred is {blurred.shape}")
    if args.family is not None:
        family = Family.parse(args.family)
    else:
        family = args.init.family if args.init is not None else Family.SPHERICAL
    init = args.init if args.init is not None else _default_init(family)
    if not args.no_standardize:
        # a unit-sum blur commutes with affine intensity maps, so standardizing
        # both images by the reference statistics leaves the optimum unchanged
        mu, sd = ref.mean(), ref.std()
        if sd > 0:
            ref, blurred = (ref - mu) / sd, (blurred - mu) / sd
    config = RecoveryConfig(init, args.lr, args.momentum, args.steps, args.margin, family)
    try:
        traj = recover_blur(ref, blurred, config)
    except DivergenceError as exc:
        if args.trace and exc.trajectory:
            with open(args.trace, "w") as fh:
                fh.write(io.format_trajectory_csv(exc.trajectory))
        raise
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(io.format_trajectory_csv(traj))
    last = traj[-1]
    cov = params_to_matrix(last.params)
    fields = [
        f"params={format_cov_spec(last.params)}",
        f"syy={cov.syy:.17g}",
        f"sxx={cov.sxx:.17g}",
        f"sxy={cov.sxy:.17g}",
        f"loss={last.loss:.17g}",
    ]
    if family is Family.SPHERICAL:
        fields.append(f"sigma={math.sqrt(cov.syy):.17g}")
    print(f"steps={len(traj) - 1} initial_loss={traj[0].loss:.17g}")
    print(" ".join(fields))
    return EXIT_OK


def cmd_dilate(args):
    img = io.read_pgm(args.input)
    f = io.read_kernel_csv(args.filter)
    if args.rate < 1:
        raise DomainError(f"dilation rate must be an integer >= 1, got {args.rate}")
    if args.no_blur:
        out = dilated_conv(img, f, args.rate, args.mode, args.workers)
        blur_r = 0
    else:
        out = blurred_dilated_conv(img, f, args.rate, args.blur_coef, args.mode, args.workers)
        blur_r = support_radius(CovMatrix.spherical((args.blur_coef * args.rate) ** 2))[0]
    io.write_pgm(args.out, out)
    if args.mode is not BoundaryMode.VALID:
        margin = max(f.ry, f.rx) * args.rate + blur_r
        print(f"interior_variance={_interior_variance(out, margin):.17g}")
    else:
        print(f"interior_variance={float(np.var(out)):.17g}")
    return EXIT_OK


def cmd_dynamic(args):
    img = io.read_pgm(args.input)
    field = CovField.from_tensor(io.read_tensor(args.field))
    weights = as_tap_weights(io.read_weights_csv(args.weights))
    out = dynamic_gauss_conv(img, field, weights, args.workers)
    io.write_pgm(args.out, out)
    return EXIT_OK


def cmd_synth(args):
    if args.kind == "texture":
        tex = smooth_texture(args.size, args.seed)
        img = to_unit_range(tex)
    elif args.kind == "checkerboard":
        img = checkerboard(args.size, args.period)
    else:
        img = gaussian_bump(args.size)
    io.write_pgm(args.out, img)
    if args.blur is not None:
        if not args.blurred_out:
            raise UsageError("synth: --blur needs --blurred-out")
        cov = params_to_matrix(args.blur)
        io.write_pgm(args.blurred_out, conv2d(img, gaussian_kernel(cov), "zero_pad_same", args.workers))
    if args.field is not None:
        if not args.field_out:
            raise UsageError("synth: --field needs --field-out")
        io.write_tensor(args.field_out, CovField.constant(args.field, args.size, args.size).params)
    return EXIT_OK


def cmd_gradcheck(args):
    family = Family.parse(args.family)
    corrupt = 1e-2 if args.corrupt_gradient else 0.0
    reports = [check_kernel_path(family, args.seed, corrupt=corrupt),
               check_dynamic_path(family, args.seed, corrupt=corrupt)]
    for r in reports:
        for line in r.lines():
            print(line)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_DOMAIN


def cmd_bench(args):
    if args.repetitions < 3:
        raise UsageError("bench: --repetitions must be at least 3")
    rng = np.random.default_rng(0)
    cov = CovMatrix.spherical(4.0)
    k = gaussian_kernel(cov)
    ky, kx = separable_1d(cov)
    weights = np.full(9, 1.0 / 9.0)
    ops = {
        "conv2d_dense": lambda img: conv2d(img, k, "zero_pad_same", args.workers),
        "conv2d_separable": lambda img: separable_conv(img, ky, kx, "zero_pad_same", args.workers),
        "dynamic_gauss_conv": lambda img: dynamic_gauss_conv(
            img, field_for(img.shape), weights, args.workers),
    }
    fields = {}

    def field_for(shape):
        if shape not in fields:
            fields[shape] = CovField.constant(CovParams.spherical(2.0), *shape)
        return fields[shape]

    print("operation,size,median_seconds")
    for size in args.sizes:
        img = rng.uniform(size=(size, size))
        for name, fn in ops.items():
            times = []
            for _ in range(args.repetitions):
                t0 = time.perf_counter()
                fn(img)
                times.append(time.perf_counter() - t0)
            print(f"{name},{size},{statistics.median(times):.6g}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--workers", type=int, default=1,
                        help="threads for row-parallel filtering (output is identical for any value)")

    p = _Parser(prog="blurfield", description="Semi-structured Gaussian filtering tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("kernel", parents=[common], help="write a Gaussian or DoG kernel as CSV")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--cov", type=_cov_arg, help="covariance, e.g. sph:0 or full:a,b,c")
    g.add_argument("--dog", type=_cov_arg, nargs=2, metavar=("CENTER", "SURROUND"))
    s.add_argument("--radius", type=_radius_arg, help="override support: R or RY,RX")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("blur", parents=[common], help="Gaussian-blur a PGM image")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--cov", type=_cov_arg, required=True)
    s.add_argument("--mode", type=_mode_arg, default=BoundaryMode.ZERO_PAD_SAME)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_blur)

    s = sub.add_parser("recover", parents=[common], help="recover an unknown blur by gradient descent")
    s.add_argument("--reference", required=True)
    s.add_argument("--blurred", required=True)
    s.add_argument("--family", help="sph, diag or full (default: that of --init, else sph)")
    s.add_argument("--init", type=_cov_arg, help="starting parameters (default: sigma 0.5 per axis)")
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--margin", type=int, default=DEFAULT_MARGIN)
    s.add_argument("--trace", help="trajectory CSV path")
    s.add_argument("--no-standardize", action="store_true",
                   help="optimize on raw intensities instead of reference-standardized ones")
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("dilate", parents=[common], help="dilated filtering with optional anti-alias blur")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--filter", required=True, help="kernel CSV")
    s.add_argument("--rate", type=int, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--blur-coef", type=float, default=0.5)
    g.add_argument("--no-blur", action="store_true")
    s.add_argument("--mode", type=_mode_arg, default=BoundaryMode.ZERO_PAD_SAME)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dilate)

    s = sub.add_parser("dynamic", parents=[common], help="dynamic Gaussian sampling from a covariance field")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--field", required=True, help="GFT1 tensor of shape (H, W, d)")
    s.add_argument("--weights", required=True, help="CSV with 9 tap weights")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dynamic)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic test images")
    s.add_argument("--kind", choices=["texture", "checkerboard", "bump"], required=True)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--period", type=int, default=2)
    s.add_argument("--out", required=True)
    s.add_argument("--blur", type=_cov_arg, help="also write a blurred copy")
    s.add_argument("--blurred-out")
    s.add_argument("--field", type=_cov_arg, help="also write a constant covariance field")
    s.add_argument("--field-out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference audit of the gradients")
    s.add_argument("--family", choices=["sph", "diag", "full", "spherical", "diagonal"], default="sph")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("bench", parents=[common], help="time the filtering paths")
    s.add_argument("--sizes", type=_sizes_arg, default=[64, 128, 256])
    s.add_argument("--repetitions", type=int, default=5)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        return args.func(args)
    except (DomainError, ShapeError, BlurfieldError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
