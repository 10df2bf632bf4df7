"""Command-line front end: ``qkdbounds-scan``.

Settings come from an optional flat ``key = value`` file (``--config``) and
are overridden by flags.  Data go to ``--out`` or stdout; progress and
warnings go to stderr.

Exit codes: 0 on success, 1 on invalid input or an unwritable output path,
2 when ``--strict`` is set and some photon-number program ended at the
solver's numerical limit.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .bounds import Mode
from .sdp import Status
from .sweep import SweepConfig, emit, parse_grid, run_sweep

log = logging.getLogger("qkdbounds")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

# config-file key -> SweepConfig field
_FLOAT_KEYS = {
    "y0": "y0",
    "edet": "e_det",
    "alpha": "alpha",
    "det-eff": "det_eff",
    "mu0": "mu0",
    "gap-tol": "gap_tol",
    "feas-tol": "feas_tol",
    "cutoff-resolution": "cutoff_resolution",
}
_INT_KEYS = {"seed": "seed", "workers": "workers"}
_BOOL_KEYS = {"optimize-mu0": "optimize_mu0", "find-cutoff": "find_cutoff"}
_GRID_KEYS = {"loss": "loss", "distance": "distance"}
_OUTPUT_KEYS = ("out", "format", "strict")


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{key}: expected a boolean, got {text!r}")


def read_config(path) -> dict:
    """Parse a ``key = value`` file into raw settings (``#`` starts a comment).

    ``mode`` may list several modes separated by commas or spaces, and may be
    repeated.
    """
    raw: dict = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ValueError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("_", "-").lower()
        if key == "mode":
            raw.setdefault("mode", []).extend(v for v in value.replace(",", " ").split() if v)
        elif key in _FLOAT_KEYS or key in _INT_KEYS or key in _BOOL_KEYS or key in _GRID_KEYS or key in _OUTPUT_KEYS:
            raw[key] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return raw


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qkdbounds-scan",
        description="Sweep upper bounds on the decoy-state BB84 key rate over channel loss.",
    )
    modes = [m.value for m in Mode]
    ap.add_argument("--config", metavar="PATH", help="key = value settings file; flags override it")
    ap.add_argument("--mode", action="append", choices=modes, help="bound to compute (repeatable)")
    grid = ap.add_mutually_exclusive_group()
    grid.add_argument("--loss", metavar="START:STOP:STEP", help="total loss grid in dB")
    grid.add_argument("--distance", metavar="START:STOP:STEP", help="fiber length grid in km")
    ap.add_argument("--y0", type=float, help="background detection rate")
    ap.add_argument("--edet", type=float, help="misalignment error probability")
    ap.add_argument("--alpha", type=float, help="fiber loss in dB/km")
    ap.add_argument("--det-eff", type=float, help="detector efficiency")
    mu = ap.add_mutually_exclusive_group()
    mu.add_argument("--mu0", type=float, help="signal mean photon number")
    mu.add_argument("--optimize-mu0", action="store_true", default=None, help="maximize the bound over mu0")
    ap.add_argument("--gap-tol", type=float, help="solver relative duality-gap tolerance")
    ap.add_argument("--feas-tol", type=float, help="solver feasibility tolerance")
    ap.add_argument("--find-cutoff", action="store_true", default=None, help="locate the zero-rate loss per mode")
    ap.add_argument("--workers", type=int, help="worker processes (default: all processors)")
    ap.add_argument("--seed", type=int, help="recorded seed for randomized self-tests")
    ap.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"), help="output format (default: csv)")
    ap.add_argument("--strict", action="store_true", default=None, help="exit 2 if any solve hit a numerical limit")
    ap.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    return ap


def resolve(args: argparse.Namespace) -> tuple[SweepConfig, dict]:
    """Merge config file and flags into a validated config plus output settings."""
    raw = read_config(args.config) if args.config else {}
    fields: dict = {}
    if "mode" in raw:
        fields["modes"] = tuple(raw["mode"])
    for key, name in _FLOAT_KEYS.items():
        if key in raw:
            try:
                fields[name] = float(raw[key])
            except ValueError:
                raise ValueError(f"{key}: expected a number, got {raw[key]!r}") from None
    for key, name in _INT_KEYS.items():
        if key in raw:
            try:
                fields[name] = int(raw[key])
            except ValueError:
                raise ValueError(f"{key}: expected an integer, got {raw[key]!r}") from None
    for key, name in _BOOL_KEYS.items():
        if key in raw:
            fields[name] = _bool(raw[key], key)
    for key, name in _GRID_KEYS.items():
        if key in raw:
            fields[name] = parse_grid(raw[key])
    output = {
        "out": raw.get("out"),
        "format": raw.get("format", "csv"),
        "strict": _bool(raw["strict"], "strict") if "strict" in raw else False,
    }

    # flags win
    if args.mode:
        fields["modes"] = tuple(args.mode)
    if args.loss is not None:
        fields["loss"], fields["distance"] = parse_grid(args.loss), None
    if args.distance is not None:
        fields["distance"], fields["loss"] = parse_grid(args.distance), None
    for flag, name in (
        ("y0", "y0"),
        ("edet", "e_det"),
        ("alpha", "alpha"),
        ("det_eff", "det_eff"),
        ("gap_tol", "gap_tol"),
        ("feas_tol", "feas_tol"),
        ("workers", "workers"),
        ("seed", "seed"),
    ):
        v = getattr(args, flag)
        if v is not None:
            fields[name] = v
    if args.mu0 is not None:
        fields["mu0"], fields["optimize_mu0"] = args.mu0, False
    if args.optimize_mu0:
        fields["optimize_mu0"] = True
    if args.find_cutoff:
        fields["find_cutoff"] = True
    if args.out is not None:
        output["out"] = args.out
    if args.format is not None:
        output["format"] = args.format
    if args.strict:
        output["strict"] = True
    if output["format"] not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {output['format']!r}")
    fields.setdefault("modes", ())
    cfg = SweepConfig(**fields).validate()
    return cfg, output


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg, output = resolve(args)
    except ValueError as exc:
        print(f"qkdbounds-scan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    with warnings.catch_warnings():
        # per-point warnings are carried in the records and reported below
        warnings.simplefilter("ignore", RuntimeWarning)
        curve = run_sweep(cfg, progress=log.info)
    for w in curve.warnings:
        log.warning("warning: %s", w)

    try:
        text = emit(curve, output["format"], output["out"])
    except OSError as exc:
        print(f"qkdbounds-scan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if output["out"] is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        log.info("wrote %s", output["out"])
    if output["strict"] and Status.NUMERICAL_LIMIT.value in curve.statuses:
        print("qkdbounds-scan: solver reached its numerical limit at some point (--strict)", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
