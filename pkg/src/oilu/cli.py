"""Command-line interface.

stdout carries JSON or CSV payloads only; diagnostics go to stderr.
Exit codes: 0 success, 1 usage error, 2 decode failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .codec import OiluNumber, facet_values
from .decoder import DecodeConfig, decode_file
from .errors import DecodeError, FormatError, InvalidDigit, LayoutOverflow, UnsupportedFormat
from .imageio import write_image
from .render import MarkerStyle, Polarity, layout_rings, render_geometry, write_geometry_sidecar

EXIT_OK, EXIT_USAGE, EXIT_DECODE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("oilu")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")


def _style_from(args) -> MarkerStyle:
    try:
        return MarkerStyle(canvas_px=args.canvas, quiet_zone_px=args.quiet, stroke_px=args.stroke,
                           pitch_px=args.pitch, polarity=Polarity(args.polarity))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _decode_config_from(args) -> DecodeConfig:
    try:
        return DecodeConfig(rectify=args.rectify, out_size=args.out_size, ring_count_hint=args.rings,
                            beta=args.beta, floor_factor=args.floor, binarization=args.binarization,
                            min_area_factor=args.min_area)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_number(text: str) -> OiluNumber:
    try:
        return OiluNumber.parse(text)
    except InvalidDigit as exc:
        raise UsageError(str(exc)) from exc


def cmd_encode(args) -> int:
    number = _parse_number(args.number)
    style = _style_from(args)
    try:
        geom = layout_rings(number, style)
    except LayoutOverflow as exc:
        raise UsageError(f"LayoutOverflow: {exc}") from exc
    img = render_geometry(geom, style.polarity)
    out = Path(args.out)
    try:
        write_image(out, img)
        sidecar = write_geometry_sidecar(geom, out.with_suffix(".json"))
    except UnsupportedFormat as exc:
        raise UsageError(str(exc)) from exc
    log.info("wrote %s and %s", out, sidecar)
    _emit({"value": str(number), "facets": facet_values(number).strings(), "image": str(out),
           "geometry": str(sidecar)})
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = _decode_config_from(args)
    try:
        result = decode_file(args.path, cfg, debug_dir=args.debug_dir)
    except (FileNotFoundError, FormatError, PermissionError, IsADirectoryError) as exc:
        log.error("cannot read %s: %s", args.path, exc)
        _emit({"error": "IOError", "stage": "read", "message": str(exc)})
        return EXIT_IO
    except UnsupportedFormat as exc:
        _emit({"error": "UnsupportedFormat", "stage": "read", "message": str(exc)})
        return EXIT_IO
    except DecodeError as exc:
        log.error("decode failed at %s: %s", exc.stage, exc)
        _emit(exc.to_record())
        return EXIT_DECODE
    _emit(result.to_json())
    return EXIT_OK


def cmd_facets(args) -> int:
    number = _parse_number(args.number)
    for value in facet_values(number):
        sys.stdout.write(f"{value}\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        conf = harness.load_sweep_config(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad sweep config: {exc}") from exc
    seed = args.seed if args.seed is not None else conf.get("seed", 0)
    trials = args.trials if args.trials is not None else conf.get("trials", 100)
    length = args.code_length if args.code_length is not None else conf.get("code_length", 4)
    if trials < 1 or length < 1:
        raise UsageError("trials and code length must be >= 1")
    records = harness.run_eval(conf["sweeps"], trials, code_length=length, seed=seed,
                               rectify_kinds=conf.get("rectify", ["tilt"]), timing=not args.no_timing,
                               workers=args.workers)
    text = harness.records_to_csv(records, timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.plots:
        harness.render_curves(records, args.plots)
    for r in records:
        print(f"{r.kind:>9} {r.level:>7g}  {100 * r.success_rate:6.1f}%  "
              f"{r.mean_ms:7.2f} ms  {r.failure_histogram}", file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    for name, ok, seconds, msg in results:
        _emit({"suite": name, "passed": ok, "seconds": round(seconds, 3), "message": msg})
    failed = [name for name, ok, _, _ in results if not ok]
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_DECODE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oilu", description="OILU square marker toolkit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    enc = sub.add_parser("encode", help="render a number as a marker image")
    enc.add_argument("number")
    enc.add_argument("--out", default="marker.png", help="PNG or PGM path; a .json geometry sidecar is written next to it")
    enc.add_argument("--canvas", type=int, default=None, help="canvas side in px (default: fit the code, min 512)")
    enc.add_argument("--quiet", type=int, default=32)
    enc.add_argument("--stroke", type=int, default=12)
    enc.add_argument("--pitch", type=int, default=48)
    enc.add_argument("--polarity", choices=["dark_on_light", "light_on_dark"], default="dark_on_light")
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="identify the marker in an image")
    dec.add_argument("path")
    dec.add_argument("--rectify", action="store_true", help="warp the detected quad to a square first")
    dec.add_argument("--out-size", type=int, default=512)
    dec.add_argument("--rings", type=int, default=None, help="expected number of code rings")
    dec.add_argument("--beta", type=float, default=0.5)
    dec.add_argument("--floor", type=float, default=0.1)
    dec.add_argument("--binarization", choices=["otsu", "adaptive"], default="otsu")
    dec.add_argument("--min-area", type=float, default=1e-4, help="cleanup size as a fraction of the image")
    dec.add_argument("--debug-dir", default=None)
    dec.set_defaults(func=cmd_decode)

    fac = sub.add_parser("facets", help="print the four facet values of a number")
    fac.add_argument("number")
    fac.set_defaults(func=cmd_facets)

    ev = sub.add_parser("eval", help="run the synthetic robustness sweep")
    ev.add_argument("--config", default=None, help="sweep JSON (default: bundled grid)")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--trials", type=int, default=None)
    ev.add_argument("--code-length", type=int, default=None)
    ev.add_argument("--out", default=None, help="CSV path (default: stdout)")
    ev.add_argument("--plots", default=None, help="directory for per-kind PNG curves")
    ev.add_argument("--no-timing", action="store_true", help="leave timing columns blank (byte-stable CSV)")
    ev.add_argument("--workers", type=int, default=None, help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")
    ev.set_defaults(func=cmd_eval)

    st = sub.add_parser("selftest", help="run the embedded oracle checks")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"oilu {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"oilu {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
