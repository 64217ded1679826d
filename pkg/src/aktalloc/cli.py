"""Command-line interface.

Commands: ``generate``, ``allocate``, ``tail``, ``fractional``, ``purify``,
``figure`` (allocate with the SVG forced on) and ``verify``.  Exit codes:
0 success, 1 usage, 2 invariant failure, 3 I/O.

Every command takes its randomness from a single ``--seed`` (sub-streams
are derived by labeled hashing) and writes a manifest next to its outputs
recording the full parameter set, so any artifact can be reproduced by
replaying the recorded argument vector.  Flags may also be loaded from a
``key = value`` parameter file via ``--params``; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .fractional import FractionalField, GridSpec, average_field, sample_shifts
from .geometry import Cuboid
from .pointprocess import (
    Configuration,
    load_configuration,
    palm,
    sample_binomial,
    sample_poisson,
    save_configuration,
)
from .purify import purify_field
from .stats import fit_decay, tail_sweep
from .svgfig import allocation_svg, purify_svg
from .transport import run_akt
from .verify import SUITES, run_suites

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _write_manifest(base: Path, command: str, argv: list[str], params: dict, outputs: list[Path], t0: float):
    manifest = {
        "command": command,
        "argv": argv,
        "parameters": params,
        "seed": params.get("seed"),
        "version": __version__,
        "outputs": [str(p) for p in outputs],
        "duration_seconds": time.time() - t0,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write(base.with_suffix(".manifest.json"), _json_dumps(manifest) + "\n")


def _parse_vector(text: str, dim: int, name: str) -> np.ndarray:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        vec = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise _UsageError(f"could not parse {name} {text!r}") from exc
    if vec.size == 1 and dim > 1:
        vec = np.full(dim, vec[0])
    if vec.size != dim:
        raise _UsageError(f"{name} needs {dim} coordinates, got {vec.size}")
    return vec


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _load_params_file(path: str) -> list[str]:
    flags: list[str] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"params file line has no '=': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if value.lower() == "false":
            continue
        flags.append(f"--{key.replace('_', '-')}")
        if value.lower() != "true":
            flags.append(value)
    return flags


# ---------------------------------------------------------------------------
# Command implementations


def _cmd_generate(args, argv) -> int:
    t0 = time.time()
    if (args.intensity is None) == (args.n is None):
        raise _UsageError("exactly one of --intensity or --n is required")
    corner = _parse_vector(args.corner, args.d, "--corner")
    domain = Cuboid(corner, corner + args.side)
    if args.intensity is not None:
        config = sample_poisson(domain, args.intensity, args.seed)
    else:
        config = sample_binomial(domain, args.n, args.seed)
    if args.palm:
        config = palm(config)
    out = Path(args.out)
    save_configuration(config, out)
    _write_manifest(out, "generate", argv, vars(args), [out], t0)
    print(f"wrote {out} ({config.n} points, d={config.dim})")
    return EXIT_OK


def _run_allocation(args):
    config = load_configuration(args.config)
    side = float(config.domain.sides[0])
    stages = args.stages
    if stages is None:
        stages = int(round(np.log2(side)))
    shift = _parse_vector(args.shift, config.dim, "--shift")
    rep = run_akt(config, shift, stages, record_steps=args.record_steps)
    err, worst = rep.equipartition_error()
    defect = rep.volume_defect()
    if err > 1e-9 or defect > 1e-9:
        raise _InvariantError(
            f"equipartition failed: worst cell {worst} relative error {err:.3e}, "
            f"volume defect {defect:.3e}"
        )
    if rep.dropped:
        print(f"note: {rep.dropped} point(s) fell outside the shifted window", file=sys.stderr)
    return config, rep, err


def _cmd_allocate(args, argv, force_svg: bool = False) -> int:
    t0 = time.time()
    config, rep, err = _run_allocation(args)
    base = Path(args.out)
    outputs = [
        _write(base.with_suffix(".json"), _json_dumps(rep.to_json(include_steps=args.record_steps)) + "\n"),
        _write(base.with_suffix(".csv"), rep.cells_csv()),
    ]
    if args.svg or force_svg:
        outputs.append(_write(base.with_suffix(".svg"), allocation_svg(rep)))
    _write_manifest(base, "allocate", argv, vars(args), outputs, t0)
    owned = int(rep.owned_mask().sum())
    print(
        f"{owned} cells of volume {rep.target_volume()!r} "
        f"(worst relative error {err:.3e}); wrote {', '.join(str(p) for p in outputs)}"
    )
    return EXIT_OK


def _cmd_tail(args, argv) -> int:
    t0 = time.time()
    stats = tail_sweep(
        args.d,
        args.levels,
        args.intensity,
        args.trials,
        margin=args.margin,
        seed=args.seed,
        workers=args.workers,
    )
    fit = fit_decay(stats, args.p_min, args.p_max)
    base = Path(args.out)
    outputs = [
        _write(base.with_suffix(".csv"), stats.to_csv()),
        _write(base.with_suffix(".stats.json"), _json_dumps(stats.to_json()) + "\n"),
        _write(base.with_suffix(".fit.json"), _json_dumps(fit.to_json()) + "\n"),
    ]
    _write_manifest(base, "tail", argv, vars(args), outputs, t0)
    print(
        f"slope {fit.slope:.4f} +- {fit.stderr:.4f} over R in [{fit.r_lo:.3g}, {fit.r_hi:.3g}]; "
        f"kept {stats.kept}/{stats.trials} trials "
        f"(discard rate {stats.discarded / stats.trials:.1%})"
    )
    return EXIT_OK


def _cmd_fractional(args, argv) -> int:
    t0 = time.time()
    config = load_configuration(args.config)
    if not config.is_palm:
        raise _UsageError("fractional averaging requires a palm configuration (generate --palm)")
    glo = _parse_vector(args.grid_lower, config.dim, "--grid-lower")
    ghi = _parse_vector(args.grid_upper, config.dim, "--grid-upper")
    grid = GridSpec(Cuboid(glo, ghi), args.h)
    shifts = sample_shifts(args.stage, args.shifts, config.dim, args.seed)
    field = average_field(config, args.stage, shifts, grid)
    defect = field.sum_to_one_defect()
    base = Path(args.out)
    outputs = [
        _write(base.with_suffix(".json"), _json_dumps(field.to_json()) + "\n"),
        _write(base.with_suffix(".csv"), field.summary_csv()),
    ]
    _write_manifest(base, "fractional", argv, vars(args), outputs, t0)
    covered = int(field.covered().sum())
    print(
        f"stage {args.stage}, {args.shifts} shifts: {covered}/{field.grid.n_cells} grid "
        f"points fully covered, sum-to-one defect {defect:.3e}"
    )
    if defect > 1e-9:
        raise _InvariantError(f"sum-to-one audit failed: defect {defect:.3e} > 1e-09")
    return EXIT_OK


def _cmd_purify(args, argv) -> int:
    t0 = time.time()
    field = FractionalField.from_json(json.loads(Path(args.field).read_text()))
    alloc, regions, report = purify_field(field, args.weight_floor)
    base = Path(args.out)
    outputs = [
        _write(base.with_suffix(".json"), _json_dumps(alloc.to_json()) + "\n"),
        _write(base.with_suffix(".quotas.csv"), report.to_csv()),
    ]
    if args.svg:
        outputs.append(_write(base.with_suffix(".svg"), purify_svg(alloc)))
    _write_manifest(base, "purify", argv, vars(args), outputs, t0)
    print(f"{len(regions)} regions, {len(report.rows)} centers")
    for row in report.rows:
        print(
            f"  center {row.center_id}: quota {row.quota:.6f} achieved {row.achieved:.6f} "
            f"({row.n_regions} regions) {'ok' if row.ok else 'FAIL'}"
        )
    if not report.all_ok:
        raise _InvariantError("purification quota audit failed")
    return EXIT_OK


def _cmd_verify(args, argv) -> int:
    names = [args.suite] if args.suite else None
    results = run_suites(names, seed=args.seed)
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
    if failed:
        raise _InvariantError("suite(s) failed: " + ", ".join(r.name for r in failed))
    print(f"all {len(results)} suites passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="aktalloc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"aktalloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a point configuration")
    p.add_argument("--d", type=int, required=True, help="dimension")
    p.add_argument("--side", type=float, required=True, help="domain side length")
    p.add_argument("--corner", default="0", help="domain lower corner (comma separated)")
    p.add_argument("--intensity", type=float, default=None, help="Poisson intensity")
    p.add_argument("--n", type=int, default=None, help="exact point count (binomial)")
    p.add_argument("--palm", action="store_true", help="adjoin the origin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="config.json")

    for name, force_svg in (("allocate", False), ("figure", True)):
        p = sub.add_parser(name, help="run the transport and write the cell partition"
                           + (" with the SVG figure" if force_svg else ""))
        p.add_argument("--config", required=True)
        p.add_argument("--shift", default="0", help="lattice shift v (comma separated)")
        p.add_argument("--stages", type=int, default=None, help="log2 of the window side")
        p.add_argument("--svg", action="store_true", help="also draw the partition")
        p.add_argument("--record-steps", action="store_true", default=True,
                       help="keep per-step audit records in the JSON report")
        p.add_argument("--no-record-steps", dest="record_steps", action="store_false")
        p.add_argument("--out", default="allocation")

    p = sub.add_parser("tail", help="Monte Carlo survival curve of origin-cell diameters")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--levels", type=int, required=True, help="window side is 2^levels")
    p.add_argument("--intensity", type=float, default=1.0)
    p.add_argument("--trials", type=_positive_int, required=True)
    p.add_argument("--margin", type=float, default=None,
                   help="boundary exclusion margin (default: quarter window side)")
    p.add_argument("--p-min", type=float, default=0.02)
    p.add_argument("--p-max", type=float, default=0.9)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="tail")

    p = sub.add_parser("fractional", help="shift-averaged fractional weight field")
    p.add_argument("--config", required=True, help="palm configuration JSON")
    p.add_argument("--stage", type=int, required=True)
    p.add_argument("--shifts", type=_positive_int, default=64)
    p.add_argument("--h", type=float, default=0.125, help="grid spacing")
    p.add_argument("--grid-lower", default="-1", help="grid window lower corner")
    p.add_argument("--grid-upper", default="1", help="grid window upper corner")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="field")

    p = sub.add_parser("purify", help="purify a fractional field into one owner per cell")
    p.add_argument("--field", required=True, help="field JSON from the fractional command")
    p.add_argument("--weight-floor", type=float, default=1e-9)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", default="pure")

    p = sub.add_parser("verify", help="run the built-in invariant suites")
    p.add_argument("--suite", choices=sorted(SUITES), default=None)
    p.add_argument("--seed", type=int, default=20260809)

    return parser


_COMMANDS = {
    "generate": _cmd_generate,
    "allocate": _cmd_allocate,
    "figure": lambda args, argv: _cmd_allocate(args, argv, force_svg=True),
    "tail": _cmd_tail,
    "fractional": _cmd_fractional,
    "purify": _cmd_purify,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if "--params" in argv:
            at = argv.index("--params")
            if at + 1 >= len(argv):
                raise _UsageError("--params needs a file argument")
            injected = _load_params_file(argv[at + 1])
            rest = argv[:at] + argv[at + 2:]
            if not rest:
                raise _UsageError("--params requires a command")
            # file values act as defaults: they come first, explicit flags win
            argv = [rest[0]] + injected + rest[1:]
        parser = _build_parser()
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args, argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
