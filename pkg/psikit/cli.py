"""Batch command line: one subcommand per stage plus `pipeline`, `render`, `verify`, `demo`.

Every stage subcommand writes its outputs and a `<stage>.manifest.json` into
--out. Exit codes are listed in --help.
"""
from __future__ import annotations

import argparse
import math
import sys
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from . import __version__, logging_utils
from .config import Settings, get_settings
from .errors import EXIT_CODES, PreconditionError, PsikitError
from .logging_utils import log_error, log_info
from .presets import preset_names
from .service import PsiService, resolution_demo, resolve_preset, write_demo_report
from .manifest import verify_manifest
from .phantom import BUILTIN_PHANTOMS


def _epilog() -> str:
    rows = "\n".join(f"  {code}  {text}" for code, text in sorted(EXIT_CODES.items()))
    return f"exit codes:\n{rows}\n\npresets: {', '.join(preset_names())}\nphantoms: {', '.join(BUILTIN_PHANTOMS)}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psikit",
        description="Phase subtraction imaging for ultrafast plane-wave ultrasound.",
        epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"psikit {__version__}")
    parser.add_argument("--workers", type=int, default=None, help="thread pool size (never changes results)")
    parser.add_argument("--log-json", action="store_true", help="also emit JSON log lines")
    sub = parser.add_subparsers(dest="command", required=True)

    def out_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", type=Path, default=None, help="output directory (default: PSIKIT_OUTPUT_DIR)")

    def filter_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--decim", type=int, default=None, help="IQ decimation (default: preset value)")
        p.add_argument("--low-frac", type=float, default=None, help="rejected fraction of leading singular values")
        p.add_argument("--high-frac", type=float, default=None, help="rejected fraction of trailing singular values")
        p.add_argument("--taps", type=int, default=None, help="odd FIR length of the IQ low-pass")

    def metrics_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--threshold-db", type=float, default=None, help="skeleton threshold below the image max")
        p.add_argument("--bins", type=float, default=None, help="histogram bin width in pixels")

    p = sub.add_parser("simulate", help="phantom + preset -> channel dataset")
    p.add_argument("--preset", required=True, help="built-in preset name or preset JSON file")
    p.add_argument("--phantom", required=True, help="phantom JSON file or built-in phantom name")
    p.add_argument("--seed", type=int, default=None)
    out_arg(p)

    p = sub.add_parser("beamform", help="channel dataset -> beamformed stack")
    p.add_argument("input", type=Path)
    p.add_argument("--preset", default=None, help="override the grid/beamform setup stored with the data")
    out_arg(p)

    p = sub.add_parser("filter", help="beamformed stack -> IQ + SVD-filtered IQ")
    p.add_argument("input", type=Path)
    filter_args(p)
    out_arg(p)

    p = sub.add_parser("psi", help="filtered IQ -> PSI image and precursors")
    p.add_argument("input", type=Path)
    p.add_argument("--symmetric", action="store_true", help="use the symmetric zero-mean pairing for P3")
    out_arg(p)

    p = sub.add_parser("cfi", help="filtered IQ -> color flow image")
    p.add_argument("input", type=Path)
    out_arg(p)

    p = sub.add_parser("metrics", help="PSI + CFI images -> radius distribution and coverage ratio")
    p.add_argument("psi", type=Path)
    p.add_argument("cfi", type=Path)
    metrics_args(p)
    out_arg(p)

    p = sub.add_parser("pipeline", help="all stages, chained through files")
    p.add_argument("--preset", required=True)
    p.add_argument("--phantom", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--symmetric", action="store_true")
    filter_args(p)
    metrics_args(p)
    out_arg(p)

    p = sub.add_parser("render", help="phase image -> PGM/PPM")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--style", choices=("gray", "color"), default="gray")

    p = sub.add_parser("presets", help="list built-in presets")
    p.add_argument("--dump", metavar="NAME", default=None, help="print one preset as JSON")

    p = sub.add_parser("verify", help="re-hash the outputs recorded in a manifest")
    p.add_argument("manifest", type=Path)

    p = sub.add_parser("demo", help="two-vessel / single-vessel resolution demo")
    p.add_argument("--preset", default="mouse50_desk")
    p.add_argument("--seed", type=int, default=7)
    out_arg(p)
    return parser


def _settings(args: argparse.Namespace) -> Settings:
    overrides: Dict[str, Any] = {}
    for flag, field in (("workers", "workers"), ("low_frac", "low_frac"), ("high_frac", "high_frac"),
                        ("taps", "fir_taps"), ("threshold_db", "threshold_db"), ("bins", "histogram_bin_pixels")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "log_json", False):
        overrides["log_json"] = True
    base = get_settings()
    return Settings(**{**base.model_dump(), **overrides}) if overrides else base


def _out(args: argparse.Namespace, s: Settings) -> Path:
    out = args.out if getattr(args, "out", None) is not None else Path(s.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _list_presets(dump: Optional[str]) -> int:
    if dump is not None:
        sys.stdout.write(resolve_preset(dump).model_dump_json(indent=2) + "\n")
        return 0
    for name in preset_names():
        p = resolve_preset(name)
        acq = p.acquisition
        degrees = [math.degrees(a) for a in acq.steering_angles]
        flag = " (printed frame rate differs)" if acq.frame_rate_mismatch else ""
        sys.stdout.write(
            f"{name:<16} fc={acq.pulse.center_freq / 1e6:6.2f} MHz  lambda={acq.wavelength * 1e6:7.3f} um  "
            f"elements={acq.geometry.element_count:<4} aperture={acq.geometry.width * 1e3:5.2f} mm  angles={len(degrees)} "
            f"[{degrees[0]:+.1f}..{degrees[-1]:+.1f} deg]  rate={float(acq.frame_rate):8.2f} Hz  "
            f"frames={acq.n_sets}x{acq.frames_per_set:<5} grid={p.grid.nz}x{p.grid.nx}{flag}\n"
        )
    return 0


def _dispatch(args: argparse.Namespace, s: Settings) -> int:
    svc = PsiService(s)
    cmd = args.command
    if cmd == "presets":
        return _list_presets(args.dump)
    if cmd == "verify":
        report = verify_manifest(args.manifest)
        for name, status in report:
            sys.stdout.write(f"{status:<9} {name}\n")
        return 0 if all(status == "ok" for _, status in report) else PreconditionError.exit_code
    if cmd == "render":
        result = svc.render(args.input, args.output, style=args.style)
        log_info("render_done", path=str(args.output), manifest=result.manifest.name)
        return 0
    if cmd == "demo":
        out = _out(args, s)
        outcomes = resolution_demo(args.preset, seed=args.seed, settings=s)
        write_demo_report(outcomes, out, args.preset, args.seed)
        return 0

    out = _out(args, s)
    if cmd == "simulate":
        svc.simulate(args.preset, args.phantom, out, seed=args.seed)
    elif cmd == "beamform":
        svc.beamform(args.input, out, preset=args.preset)
    elif cmd == "filter":
        svc.filter(args.input, out, decim=args.decim)
    elif cmd == "psi":
        svc.psi(args.input, out, symmetric=args.symmetric)
    elif cmd == "cfi":
        svc.cfi(args.input, out)
    elif cmd == "metrics":
        result = svc.metrics(args.psi, args.cfi, out)
        sys.stdout.write(result.outputs["metrics.txt"].read_text(encoding="utf-8"))
    elif cmd == "pipeline":
        svc.pipeline(args.preset, args.phantom, out, seed=args.seed, symmetric=args.symmetric, decim=args.decim)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        s = _settings(args)
    except ValidationError as exc:
        sys.stderr.write(f"psikit: invalid settings: {exc}\n")
        return PreconditionError.exit_code
    logging_utils.configure(s.log_level, s.log_json)
    try:
        return _dispatch(args, s)
    except PsikitError as exc:
        log_error("stage_error", stage=args.command, code=exc.code, exit_code=exc.exit_code, error=str(exc))
        sys.stderr.write(f"psikit {args.command}: {exc}\n")
        return exc.exit_code
    except ValidationError as exc:
        log_error("stage_error", stage=args.command, code="invalid_input",
                  exit_code=PreconditionError.exit_code, error=str(exc))
        sys.stderr.write(f"psikit {args.command}: {exc}\n")
        return PreconditionError.exit_code
    except Exception as exc:  # noqa: BLE001
        trace_id = uuid.uuid4().hex[:12]
        log_error("unexpected_error", command=args.command, trace_id=trace_id,
                  error=f"{type(exc).__name__}: {exc}")
        sys.stderr.write(f"psikit {args.command}: internal error (trace {trace_id})\n")
        return 1
