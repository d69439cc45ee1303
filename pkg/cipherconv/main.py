"""Command-line front end: inference runs, key plans, masks, ReLU profiles, presets."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config.settings import CONTEXT_PRESETS, resolve_context, settings
from .errors import CipherConvError, LedgerMismatchError
from .layers.chebyshev import DENSE_GRID_POINTS, clenshaw, relu, relu_coefficients
from .models.schemas import ContextConfig, ModelSpec, ReluLayer
from .packing.masks import build_all_masks, build_mask
from .services.architectures import ARCHITECTURES, build_architecture
from .services.bootstrap_policy import place_bootstraps
from .services.model_loader import layer_context, load_model_spec, resolve_model_context
from .services.reference import calibrate_betas, plaintext_reference
from .services.reports import build_keyplan_report, build_run_report
from .services.runtime import InferenceEngine, build_model
from .services.weights import CsvWeightStore, MemoryWeightStore, random_weights
from .utils.images import load_input

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3

DEFAULT_DEGREES = "3,7,15,27,59"


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: {message}\n")


class InvariantViolation(CipherConvError):
    """A run broke an invariant that should always hold."""


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _load_spec(model: str) -> ModelSpec:
    if model in ARCHITECTURES and not Path(model).exists():
        return build_architecture(model)
    return load_model_spec(model)


def _apply_overrides(spec: ModelSpec, args: argparse.Namespace) -> ModelSpec:
    update = {}
    if getattr(args, "stride_variant", None):
        update["stride_variant"] = args.stride_variant
    if getattr(args, "weights", None):
        update["weight_mode"] = args.weights
    if getattr(args, "keys", None):
        update["key_mode"] = args.keys
    return spec.model_copy(update=update) if update else spec


def _context(spec: ModelSpec, args: argparse.Namespace) -> ContextConfig:
    return resolve_context(args.context) if args.context else resolve_model_context(spec)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text)


def _needs_calibration(layers) -> bool:
    def walk(items):
        for layer in items:
            if isinstance(layer, ReluLayer):
                yield layer
            for branch in ("body", "shortcut"):
                yield from walk(getattr(layer, branch, []))

    return any(layer.beta is None for layer in walk(layers))


def cmd_infer(args: argparse.Namespace) -> int:
    spec = _apply_overrides(_load_spec(args.model), args)
    context = _context(spec, args)
    inputs = [load_input(path, spec.input_channels, spec.input_width) for path in args.inputs]

    if args.random_weights is not None:
        store = MemoryWeightStore(random_weights(spec, seed=args.random_weights))
    else:
        store = CsvWeightStore(spec, spec.weight_mode)

    if args.calibrate or _needs_calibration(spec.layers):
        spec = calibrate_betas(spec, store.session(), inputs)

    model = build_model(spec, store, context=context, key_mode=spec.key_mode)
    engine = InferenceEngine(model, noise_sigma=args.noise_sigma, seed=args.seed)
    results = engine.run_many(inputs, jobs=args.jobs)

    reports = []
    for path, x, result in zip(args.inputs, inputs, results):
        reference = plaintext_reference(model.spec, store.session(), x)
        reports.append(build_run_report(str(path), model, result, reference))

    payload = {
        "model": spec.name,
        "context": context.model_dump(),
        "settings": settings.as_dict(),
        "runs": [r.model_dump() for r in reports],
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    if any(r.trace_violations for r in reports):
        raise InvariantViolation("rotation trace used keys outside the resident plan")
    return EXIT_OK


def cmd_keyplan(args: argparse.Namespace) -> int:
    spec = _apply_overrides(_load_spec(args.model), args)
    context = _context(spec, args)
    ctx = layer_context(spec, context)
    placed = place_bootstraps(spec, ctx)
    report = build_keyplan_report(placed, ctx, bytes_per_key=args.bytes_per_key)
    _emit(report.model_dump_json(indent=2) + "\n", args.out)
    return EXIT_OK


def _write_rows(rows: Sequence[Sequence], out: Optional[str], header: Optional[Sequence[str]] = None) -> None:
    handle = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        if header:
            writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out:
            handle.close()


def cmd_masks(args: argparse.Namespace) -> int:
    if args.width < 1 or args.channels < 1:
        raise ValueError(f"invalid geometry W={args.width}, C={args.channels}")
    if args.mode == "special":
        masks = build_all_masks(args.width * args.width, args.channels, args.width)
    else:
        m = args.m if args.m is not None else args.width * args.width
        w = args.w if args.w is not None else args.width
        masks = (build_mask(args.sp, args.ep, w, m, args.channels),)
    _write_rows([[int(v) for v in mask.values] for mask in masks], args.out)
    return EXIT_OK


def relu_profile(degrees: Sequence[int], grid: np.ndarray, beta: float = 1.0) -> List[List[float]]:
    """Rows of (degree, max abs error, mean abs error) of the ReLU approximation on ``grid``."""
    scale = beta if beta > 1.0 else 1.0
    exact = relu(grid)
    rows = []
    for degree in degrees:
        approx = clenshaw(grid / scale, relu_coefficients(degree, scale))
        err = np.abs(approx - exact)
        rows.append([degree, float(err.max()), float(err.mean())])
    return rows


def _parse_degrees(text: str) -> List[int]:
    try:
        degrees = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"degrees must be comma-separated integers, got {text!r}") from None
    if not degrees or min(degrees) < 1:
        raise argparse.ArgumentTypeError("degrees must be positive")
    return degrees


def cmd_relu_profile(args: argparse.Namespace) -> int:
    if args.beta <= 0:
        raise ValueError(f"beta must be positive, got {args.beta}")
    if args.grid:
        start, stop, count = args.grid
        grid = np.linspace(float(start), float(stop), int(count))
    else:
        bound = max(args.beta, 1.0)
        grid = np.linspace(-bound, bound, DENSE_GRID_POINTS)
    rows = relu_profile(args.degrees, grid, args.beta)
    _write_rows([[d, repr(mx), repr(mean)] for d, mx, mean in rows], args.out,
                header=["degree", "max_abs_error", "mean_abs_error"])
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    payload = {name: preset.model_dump() for name, preset in CONTEXT_PRESETS.items()}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> CliParser:
    parser = CliParser(prog="cipherconv", description="Simulated CKKS inference for packed CNNs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default: CIPHERCONV_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--context", default=None, help="Preset name or context JSON file")
        p.add_argument("--stride-variant", choices=["extract", "masked"], default=None)
        p.add_argument("--out", default=None, help="Write the report here instead of stdout")

    infer = sub.add_parser("infer", help="Run simulated inference and compare with the plaintext oracle")
    infer.add_argument("model", help="Model JSON file or architecture name")
    infer.add_argument("inputs", nargs="+", help="Input CSV or image files")
    common(infer)
    infer.add_argument("--keys", choices=["preload", "block"], default=None)
    infer.add_argument("--weights", choices=["preload", "lazy"], default=None)
    infer.add_argument("--noise-sigma", type=float, default=None)
    infer.add_argument("--seed", type=int, default=None)
    infer.add_argument("--jobs", type=int, default=1)
    infer.add_argument("--calibrate", action="store_true", help="Recompute ReLU betas from the inputs")
    infer.add_argument("--random-weights", type=int, default=None, metavar="SEED",
                       help="Use seeded random weights instead of the CSV files")
    infer.set_defaults(handler=cmd_infer)

    keyplan = sub.add_parser("keyplan", help="Report rotation keys per layer, block and model")
    keyplan.add_argument("model", help="Model JSON file or architecture name")
    common(keyplan)
    keyplan.add_argument("--bytes-per-key", type=int, default=None)
    keyplan.set_defaults(handler=cmd_keyplan)

    masks = sub.add_parser("masks", help="Dump masks as CSV rows of 0/1")
    masks.add_argument("--width", type=int, required=True)
    masks.add_argument("--channels", type=int, default=1)
    masks.add_argument("--mode", choices=["special", "build"], default="special")
    masks.add_argument("--sp", type=int, default=0)
    masks.add_argument("--ep", type=int, default=0)
    masks.add_argument("--w", type=int, default=None)
    masks.add_argument("--m", type=int, default=None)
    masks.add_argument("--out", default=None)
    masks.set_defaults(handler=cmd_masks)

    profile = sub.add_parser("relu-profile", help="Error profile of the Chebyshev ReLU")
    profile.add_argument("--beta", type=float, default=1.0)
    profile.add_argument("--degrees", type=_parse_degrees, default=_parse_degrees(DEFAULT_DEGREES))
    profile.add_argument("--grid", nargs=3, type=float, default=None, metavar=("START", "STOP", "COUNT"))
    profile.add_argument("--out", default=None)
    profile.set_defaults(handler=cmd_relu_profile)

    presets = sub.add_parser("presets", help="Print the context presets as JSON")
    presets.add_argument("--out", default=None)
    presets.set_defaults(handler=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (LedgerMismatchError, InvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (CipherConvError, ValidationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
