#!/usr/bin/env python3
"""
sta-kit: design and verify shortcut-to-adiabaticity protocols.
Protocols are written as JSON, verification reports as JSON, time series as CSV.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.commands import (
    EXIT_OK,
    EXIT_USAGE,
    EXPORT_SAMPLES,
    KIND_PARAMS,
    Commander,
    DEFAULT_NTRAJ,
    RunOptions,
    __version__,
)
from core.display import Display
from core.units import Units
from sanitizer import (
    check_count,
    check_grid,
    check_output_path,
    check_positive,
    check_range,
    check_seed,
)
from terminal_ui import create_ui

__all__ = ["main", "build_parser", "__version__"]

logger = logging.getLogger("sta")


def _common_parser() -> argparse.ArgumentParser:
    """Flags shared by every subcommand. Values stay strings until sanitized."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", default="0", help="Seed for stochastic checks (default: 0)")
    common.add_argument("--dt", help="Propagation time step override")
    common.add_argument("--grid", default="1024", help="Spatial grid points (default: 1024)")
    common.add_argument("--tol", help="Override every check tolerance")
    common.add_argument("--ntraj", default=str(DEFAULT_NTRAJ),
                        help=f"Langevin trajectories (default: {DEFAULT_NTRAJ})")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging and metrics")
    common.add_argument("--no-color", action="store_true", help="Plain output")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="sta-kit", description="Shortcut-to-adiabaticity protocol toolkit"
    )
    parser.add_argument("--version", action="version", version=f"sta-kit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    design = sub.add_parser("design", help="Design a protocol and write it as JSON")
    kinds = design.add_subparsers(dest="kind", required=True)
    for kind, specs in KIND_PARAMS.items():
        kp = kinds.add_parser(kind.value, parents=[common], help=f"{kind.value} designer")
        for spec in specs:
            default = "required" if spec.required else f"default: {spec.default}"
            kp.add_argument(f"--{spec.name}", dest=f"param_{spec.name}",
                            help=f"{spec.help} ({default})")
        kp.add_argument("--hbar", default="1", help="Reduced Planck constant (default: 1)")
        kp.add_argument("--mass", default="1", help="Particle mass (default: 1)")
        kp.add_argument("--kB", default="1", help="Boltzmann constant (default: 1)")
        kp.add_argument("--out", required=True, help="Protocol JSON path")

    verify = sub.add_parser("verify", parents=[common], help="Verify a protocol by propagation")
    verify.add_argument("protocol", help="Protocol JSON path")
    verify.add_argument("--out", help="Write the verification report as JSON")
    verify.add_argument("--csv", help="Write the kind's time series as CSV")
    verify.add_argument("--checks", help="Comma-separated optional checks to run")

    scan = sub.add_parser("scan", parents=[common], help="Sweep one parameter of a protocol")
    scan.add_argument("protocol", help="Protocol JSON path")
    scan.add_argument("parameter", help="Parameter to sweep (see 'kinds')")
    scan.add_argument("range", help="start:stop:num")
    scan.add_argument("--out", required=True, help="CSV path")

    export = sub.add_parser("export", parents=[common], help="Sample controls to CSV")
    export.add_argument("protocol", help="Protocol JSON path")
    export.add_argument("--out", required=True, help="CSV path")
    export.add_argument("--name", help="Single control or sampled field to export")
    export.add_argument("--samples", default=str(EXPORT_SAMPLES),
                        help=f"Time samples (default: {EXPORT_SAMPLES})")

    sub.add_parser("kinds", parents=[common], help="List protocol kinds and their parameters")
    return parser


def _run_options(args: argparse.Namespace) -> Optional[RunOptions]:
    seed = check_seed(args.seed)
    grid = check_grid(args.grid)
    ntraj = check_count(args.ntraj)
    dt = check_positive(args.dt) if args.dt is not None else None
    tol = check_positive(args.tol) if args.tol is not None else None
    if seed is None or grid is None or ntraj is None:
        return None
    if (args.dt is not None and dt is None) or (args.tol is not None and tol is None):
        return None
    checks = None
    if getattr(args, "checks", None):
        checks = frozenset(c.strip().lower() for c in args.checks.split(",") if c.strip())
    return RunOptions(dt=dt, grid=grid, tol=tol, seed=seed, ntraj=ntraj, checks=checks)


def _paths_ok(display: Display, *paths: Optional[str]) -> bool:
    for path in paths:
        if path is not None and check_output_path(path) is None:
            display.display_error(f"Invalid output path: {path!r}")
            return False
    return True


def _design(commander: Commander, args: argparse.Namespace) -> int:
    units_raw = [check_positive(v) for v in (args.hbar, args.mass, args.kB)]
    if any(u is None for u in units_raw):
        commander.display.display_error("Units --hbar, --mass and --kB must be positive")
        return EXIT_USAGE
    hbar, mass, kB = (float(u) for u in units_raw if u is not None)
    raw: Dict[str, Any] = {
        key[len("param_"):]: value
        for key, value in vars(args).items()
        if key.startswith("param_")
    }
    if not _paths_ok(commander.display, args.out):
        return EXIT_USAGE
    return commander.design(args.kind, raw, args.out, Units(hbar=hbar, mass=mass, kB=kB))


def _scan(commander: Commander, args: argparse.Namespace) -> int:
    rng = check_range(args.range)
    if rng is None:
        commander.display.display_error(f"Invalid range {args.range!r} (expected start:stop:num)")
        return EXIT_USAGE
    if not _paths_ok(commander.display, args.out):
        return EXIT_USAGE
    start, stop, num = rng
    values: List[float] = np.linspace(start, stop, num).tolist()
    return commander.scan(args.protocol, args.parameter, values, args.out)


def _export(commander: Commander, args: argparse.Namespace) -> int:
    n = check_count(args.samples, 2, 1_000_000)
    if n is None:
        commander.display.display_error(f"Invalid --samples value: {args.samples!r}")
        return EXIT_USAGE
    if not _paths_ok(commander.display, args.out):
        return EXIT_USAGE
    return commander.export(args.protocol, args.out, args.name, n)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    display = Display(create_ui(use_colors=not args.no_color), verbose=args.verbose)

    options = _run_options(args)
    if options is None:
        display.display_error("Invalid --seed, --dt, --grid, --tol or --ntraj value")
        return EXIT_USAGE
    logger.debug("Running %s with %s", args.command, options)
    commander = Commander(display, options)

    try:
        if args.command == "design":
            return _design(commander, args)
        if args.command == "verify":
            if not _paths_ok(display, args.out, args.csv):
                return EXIT_USAGE
            return commander.verify(args.protocol, args.out, args.csv)
        if args.command == "scan":
            return _scan(commander, args)
        if args.command == "export":
            return _export(commander, args)
        commander.show_kinds()
        return EXIT_OK
    except KeyboardInterrupt:
        display.display_error("Interrupted")
        return 130
    except OSError as e:
        display.display_error(f"I/O error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
