"""Configuration-driven runs: single solves and convergence studies."""
from __future__ import annotations

import contextlib
import copy
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import problems
from .assembly import assemble, boundary_flux, check_boundary_trace, compatibility_defect, default_penalties
from .errors import ConfigError, UsageError
from .mesh import build_structured_mesh, load_mesh
from .patching import build_patches, default_patch_size, patch_diagnostics
from .postprocess import ConvergenceTable, error_norms, export_field, observed_orders
from .reconstruction import SolutionField, build_reconstruction
from .solver import SolveReport, solve

log = logging.getLogger(__name__)

ARTIFACTS = ("vtk", "csv", "tables", "diagnostics")
DEFAULT_CONFIG = {
    "mesh": {"structured": {"kind": "tri", "nx": 10, "ny": 10, "bbox": [0.0, 0.0, 1.0, 1.0]}},
    "degree": 2,
    "patch_size": None,
    "eta0": None,
    "eps0": None,
    "solver": {"method": "direct", "tol": 1e-10},
    "problem": "example1",
    "outputs": {"directory": "out", "artifacts": ["vtk", "csv", "tables"]},
    "workers": 1,
}


@dataclass
class RunConfig:
    """Fully resolved run configuration (see ``DEFAULT_CONFIG`` for the JSON layout)."""

    mesh: dict
    degree: int
    patch_size: int
    eta0: float
    eps0: float
    solver_method: str
    solver_tol: float
    problem: str
    output_dir: Optional[str]
    artifacts: tuple
    workers: int = 1
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(doc) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        merged = copy.deepcopy(DEFAULT_CONFIG)
        for key, val in doc.items():
            if isinstance(merged.get(key), dict) and isinstance(val, dict) and key != "mesh":
                merged[key].update(val)
            else:
                merged[key] = val
        try:
            m = int(merged["degree"])
        except (TypeError, ValueError):
            raise ConfigError("degree must be an integer") from None
        if not 1 <= m <= 4:
            raise ConfigError(f"degree must be between 1 and 4, got {m}")
        d_eta, d_eps = default_penalties(m)
        eta0 = d_eta if merged["eta0"] is None else float(merged["eta0"])
        eps0 = d_eps if merged["eps0"] is None else float(merged["eps0"])
        if not (eta0 > 0 and eps0 > 0):
            raise ConfigError("eta0 and eps0 must be positive")
        patch = default_patch_size(m) if merged["patch_size"] is None else int(merged["patch_size"])
        if patch < 1:
            raise ConfigError("patch_size must be positive")
        mesh = merged["mesh"]
        if not isinstance(mesh, dict) or ("file" in mesh) == ("structured" in mesh):
            raise ConfigError("mesh needs exactly one of 'file' or 'structured'")
        if "structured" in mesh:
            s = dict(DEFAULT_CONFIG["mesh"]["structured"], **mesh["structured"])
            if s["kind"] not in ("tri", "quad"):
                raise ConfigError("structured mesh kind must be 'tri' or 'quad'")
            mesh = {"structured": {"kind": s["kind"], "nx": int(s["nx"]), "ny": int(s["ny"]),
                                   "bbox": [float(v) for v in s["bbox"]]}}
        else:
            fmt = mesh.get("format") or _guess_format(mesh["file"])
            mesh = {"file": str(mesh["file"]), "format": fmt}
        solver = merged["solver"]
        if solver.get("method") not in ("direct", "cg"):
            raise ConfigError("solver.method must be 'direct' or 'cg'")
        tol = float(solver.get("tol", 1e-10))
        if not 0 < tol < 1:
            raise ConfigError("solver.tol must lie in (0, 1)")
        if merged["problem"] not in problems.PROBLEMS:
            raise ConfigError(f"unknown problem {merged['problem']!r}; "
                              f"choose from {sorted(problems.PROBLEMS)}")
        outputs = merged["outputs"] or {}
        arts = tuple(outputs.get("artifacts", ()))
        bad = set(arts) - set(ARTIFACTS)
        if bad:
            raise ConfigError(f"unknown artifacts {sorted(bad)}; choose from {list(ARTIFACTS)}")
        workers = int(merged.get("workers") or 1)
        if workers < 1:
            raise ConfigError("workers must be at least 1")
        return cls(mesh=mesh, degree=m, patch_size=patch, eta0=eta0, eps0=eps0,
                   solver_method=solver["method"], solver_tol=tol, problem=merged["problem"],
                   output_dir=outputs.get("directory"), artifacts=arts, workers=workers,
                   base_dir=str(base_dir))

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        return {
            "mesh": copy.deepcopy(self.mesh),
            "degree": self.degree,
            "patch_size": self.patch_size,
            "eta0": self.eta0,
            "eps0": self.eps0,
            "solver": {"method": self.solver_method, "tol": self.solver_tol},
            "problem": self.problem,
            "outputs": {"directory": self.output_dir, "artifacts": list(self.artifacts)},
            "workers": self.workers,
        }

    def resolve(self, path):
        return os.path.normpath(path if os.path.isabs(path) else os.path.join(self.base_dir, path))

    def with_mesh(self, mesh):
        out = copy.copy(self)
        out.mesh = mesh
        return out


def _guess_format(path):
    return "gmsh-msh-v2-ascii" if str(path).endswith(".msh") else "poly-json"


BUILTIN_MESHES = os.path.join(os.path.dirname(__file__), "data", "meshes")


def make_mesh(config):
    """Mesh for a config; ``file: "builtin:<name>"`` refers to a packaged mesh."""
    if "structured" in config.mesh:
        s = config.mesh["structured"]
        return build_structured_mesh(s["kind"], s["nx"], s["ny"], s["bbox"])
    path = config.mesh["file"]
    if path.startswith("builtin:"):
        path = os.path.join(BUILTIN_MESHES, path[len("builtin:"):] + ".json")
        if not os.path.exists(path):
            names = sorted(f[:-5] for f in os.listdir(BUILTIN_MESHES) if f.endswith(".json"))
            raise ConfigError(f"unknown builtin mesh {config.mesh['file']!r}; choose from {names}")
        return load_mesh(path, "poly-json")
    return load_mesh(config.resolve(path), config.mesh["format"])


@dataclass
class RunResult:
    mesh: object
    field: SolutionField
    report: SolveReport
    norms: Optional[object] = None
    files: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@contextlib.contextmanager
def _phase(times, name):
    t0 = time.perf_counter()
    yield
    times[name] = time.perf_counter() - t0
    log.info("%-15s %.2fs", name, times[name])


def solve_problem(mesh, spec, degree, patch_size=None, eta0=None, eps0=None,
                  method="direct", tol=1e-10, workers=1):
    """mesh -> patches -> reconstruction -> assembly -> solve.

    Returns ``(field, report, timings, system)``.
    """
    times = {}
    if spec.exact_u is not None:
        check_boundary_trace(mesh, spec)
    defect = compatibility_defect(mesh, spec)
    perimeter = float(mesh.edge_lengths[mesh.boundary_edges].sum())
    if abs(defect) > 1e-8 * perimeter:
        raise ConfigError(f"boundary data violate (g.n, 1) = 0: net flux {defect:.3e}")
    with _phase(times, "patches"):
        patches = build_patches(mesh, degree, patch_size)
    with _phase(times, "reconstruction"):
        op = build_reconstruction(mesh, patches, degree, workers=workers)
    with _phase(times, "assembly"):
        system = assemble(op, spec, eta0, eps0, workers=workers)
    with _phase(times, "solve"):
        x, report = solve(system, method=method, tol=tol)
    return SolutionField(op, x), report, times, system


def flow_diagnostics(field, spec):
    """Boundary flux of ``u_h``, divergence at barycenters, and problem-specific probes."""
    mesh = field.mesh
    n = mesh.n_cells
    _, grad = field.values(np.arange(n), mesh.barycenters, grad=True)
    div = np.abs(grad[:, 0, 0] + grad[:, 1, 1])
    scale = np.linalg.norm(grad.reshape(n, 4), axis=1)
    out = {
        "boundary_flux": boundary_flux(
            mesh, lambda e, p: field.values(np.repeat(mesh.edge_cells[e, 0], p.shape[1]),
                                            p.reshape(-1, 2)).reshape(p.shape),
            exactness=2 * field.degree + 2),
        "max_divergence": float(div.max()),
        "max_relative_divergence": float(np.max(div / np.where(scale > 0, scale, 1.0))),
    }
    if spec.name == "cavity":
        probe = np.array([0.5, problems.CAVITY_BBOX[3] - 0.05])
        k = int(np.argmin(np.linalg.norm(mesh.barycenters - probe, axis=1)))
        out["near_lid_cell"] = k
        out["near_lid_ux"] = float(field.cell_values()[k, 0])
    if spec.name == "cylinder":
        out["inflow_flux"] = 1.0 / 6.0
    return out


def run_solve(config, export=True):
    """End-to-end run for a :class:`RunConfig`."""
    mesh = make_mesh(config)
    spec = problems.get_problem(config.problem)
    field, report, timings, system = solve_problem(
        mesh, spec, config.degree, config.patch_size, config.eta0, config.eps0,
        config.solver_method, config.solver_tol, config.workers)
    result = RunResult(mesh=mesh, field=field, report=report, timings=timings)
    if spec.has_exact:
        result.norms = error_norms(field, spec)
    result.diagnostics = flow_diagnostics(field, spec)
    if export and config.output_dir:
        result.files = _write_outputs(config, result, spec)
    return result


def _write_outputs(config, result, spec):
    out = config.resolve(config.output_dir)
    os.makedirs(out, exist_ok=True)
    files = []

    def path(name):
        p = os.path.join(out, name)
        files.append(p)
        return p

    with open(path("config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
    summary = {
        "problem": spec.name,
        "cells": result.mesh.n_cells,
        "dofs": 2 * result.mesh.n_cells,
        "h": result.mesh.h,
        "solve": vars(result.report),
        "diagnostics": result.diagnostics,
        "timings": result.timings,
    }
    if result.norms is not None:
        summary["norms"] = result.norms.as_dict()
    with open(path("report.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    if "vtk" in config.artifacts or "csv" in config.artifacts:
        vtk = path("solution.vtk") if "vtk" in config.artifacts else os.path.join(out, ".solution.vtk")
        csv_path = path("solution.csv") if "csv" in config.artifacts else None
        export_field(result.field, vtk, csv_path)
        if "vtk" not in config.artifacts:
            os.remove(vtk)
    if "diagnostics" in config.artifacts:
        with open(path("patch_diagnostics.csv"), "w", encoding="utf-8") as fh:
            fh.write("cell,patch_size,patch_diameter,lambda_est,min_singular_value,rank_ok\n")
            op = result.field.op
            for p in op.patches:
                d = patch_diagnostics(result.mesh, p, config.degree)
                fh.write(f"{p.owner},{p.size},{float(p.diameter)!r},{float(d.lambda_est)!r},"
                         f"{float(d.min_singular_value)!r},{int(d.rank_ok)}\n")
    return files


def run_convergence(config, levels=4, exact_floor=1e-9):
    """Solve on ``levels`` uniformly refined structured meshes and tabulate orders.

    The mesh in ``config`` is the coarsest level; each level doubles ``nx`` and
    ``ny``. The CSV table is rewritten after every level, so a failure leaves
    the completed rows on disk.
    """
    if "structured" not in config.mesh:
        raise UsageError("convergence studies need a structured mesh family", module="cli_harness")
    spec = problems.get_problem(config.problem)
    if not spec.has_exact:
        raise UsageError(f"problem {config.problem!r} has no exact solution", module="cli_harness")
    if levels < 2:
        raise UsageError("at least two levels are needed", module="cli_harness")
    out = config.resolve(config.output_dir) if config.output_dir else None
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(dict(config.to_dict(), levels=levels), fh, indent=2)
    base = config.mesh["structured"]
    hs, errs, table = [], [], None
    for lev in range(levels):
        s = dict(base, nx=base["nx"] * 2 ** lev, ny=base["ny"] * 2 ** lev)
        cfg = config.with_mesh({"structured": s})
        res = run_solve(cfg, export=False)
        hs.append(res.mesh.h)
        errs.append(res.norms)
        log.info("level %d: h=%.4e energy=%.4e l2=%.4e", lev, res.mesh.h, res.norms.energy, res.norms.l2)
        if len(hs) >= 2:
            table = observed_orders(hs, errs, exact_floor=exact_floor)
            if out:
                table.write_csv(os.path.join(out, "convergence.csv"))
        elif out:
            e = errs[0].as_dict()
            row = {("h1" if k == "h1_semi" else k): v for k, v in e.items()}
            ConvergenceTable(h=hs, errors=[row], orders=[{}]).write_csv(
                os.path.join(out, "convergence.csv"))
    if out:
        with open(os.path.join(out, "convergence.txt"), "w", encoding="utf-8") as fh:
            fh.write(table.summary() + "\n")
    return table
