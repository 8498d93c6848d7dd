"""Command-line front end.

    divfree-dg solve --config run.json
    divfree-dg convergence --config run.json --levels 4
    divfree-dg mesh-info mesh.json
    divfree-dg basis-info --degree 2

Exit codes: 0 success, 1 usage, 2 input data, 3 numerical failure.
``DIVFREE_DG_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) sets the log verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import DivFreeDGError, InputDataError, NumericalError, UsageError
from .harness import RunConfig, _guess_format, run_convergence, run_solve
from .mesh import diagnostics, load_mesh
from .patching import default_patch_size, min_patch_size
from .solenoidal import SolenoidalBasis

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
LOG_ENV = "DIVFREE_DG_LOG_LEVEL"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for bad input data here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="divfree-dg",
                     description="Divergence-free DG solver for 2D Stokes flow on polygonal meshes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one solve from a JSON config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("convergence", help="run a refinement study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--levels", type=int, default=4)

    p = sub.add_parser("mesh-info", help="print mesh size and shape-regularity figures")
    p.add_argument("path")
    p.add_argument("--format", choices=("poly-json", "gmsh-msh-v2-ascii"))

    p = sub.add_parser("basis-info", help="print the solenoidal basis for a degree")
    p.add_argument("--degree", type=int, required=True)
    return parser


def _cmd_solve(args, out):
    config = RunConfig.load(args.config)
    res = run_solve(config)
    out.write(f"problem {config.problem}, degree {config.degree}, {res.mesh.n_cells} cells, "
              f"h = {res.mesh.h:.4e}\n")
    r = res.report
    out.write(f"solver {r.method}: relative residual {r.relative_residual:.3e}\n")
    if res.norms is not None:
        for key, val in res.norms.as_dict().items():
            out.write(f"  {key:8s} {val:.6e}\n")
    for key, val in res.diagnostics.items():
        out.write(f"  {key}: {val}\n")
    for path in res.files:
        out.write(f"wrote {path}\n")


def _cmd_convergence(args, out):
    config = RunConfig.load(args.config)
    table = run_convergence(config, levels=args.levels)
    out.write(table.summary() + "\n")


def _cmd_mesh_info(args, out):
    mesh = load_mesh(args.path, args.format or _guess_format(args.path))
    d = diagnostics(mesh)
    sizes = sorted({len(c) for c in mesh.cells})
    out.write(json.dumps({
        "cells": mesh.n_cells,
        "vertices": len(mesh.vertices),
        "edges": mesh.n_edges,
        "interior_edges": len(mesh.interior_edges),
        "boundary_edges": len(mesh.boundary_edges),
        "vertices_per_cell": sizes,
        "h": d.h,
        "min_area": d.min_area,
        "max_shape_ratio": d.max_shape_ratio,
        "rho1": d.rho1,
    }, indent=2) + "\n")


def _cmd_basis_info(args, out):
    m = args.degree
    if m < 1:
        raise UsageError(f"degree must be at least 1, got {m}", module="cli_harness")
    basis = SolenoidalBasis(m)
    out.write(f"degree {m}\n")
    out.write(f"dim S_m = {basis.dim}\n")
    out.write(f"default patch size = {default_patch_size(m)}\n")
    out.write(f"minimum patch size = {min_patch_size(m)}\n")
    out.write("generators (scaled coordinates):\n")
    for k, line in enumerate(basis.describe()):
        out.write(f"  {k:3d}  {line}\n")


COMMANDS = {
    "solve": _cmd_solve,
    "convergence": _cmd_convergence,
    "mesh-info": _cmd_mesh_info,
    "basis-info": _cmd_basis_info,
}


def exit_code(exc):
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, InputDataError):
        return EXIT_INPUT
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    return EXIT_NUMERICAL


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, bad arguments exit EXIT_USAGE
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        COMMANDS[args.command](args, out)
    except DivFreeDGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error: [io] {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
