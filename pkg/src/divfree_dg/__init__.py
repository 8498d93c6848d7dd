"""Divergence-free discontinuous Galerkin solver for 2D Stokes flow.

Velocities live in a space of piecewise solenoidal polynomials built by
least-squares reconstruction over element patches, with one velocity
vector per cell as the unknowns. The pressure is eliminated from the
discrete problem.

Typical use::

    from divfree_dg import build_structured_mesh, get_problem, solve_problem
    mesh = build_structured_mesh("tri", 10, 10)
    field, report, _, _ = solve_problem(mesh, get_problem("example1"), degree=2)
"""
from .assembly import DGSystem, Penalty, ProblemSpec, assemble, consistency_residual
from .errors import (DivFreeDGError, InputDataError, NumericalError, UsageError)
from .harness import RunConfig, run_convergence, run_solve, solve_problem
from .mesh import PolyMesh, build_structured_mesh, diagnostics, load_mesh, write_poly_json
from .patching import build_patches, default_patch_size
from .postprocess import ConvergenceTable, NormReport, error_norms, export_field, observed_orders
from .problems import get_problem
from .quadrature import QuadratureRule, edge_rule, reference_triangle_rule
from .reconstruction import ReconstructionOperator, SolutionField, build_reconstruction, interpolate
from .solenoidal import SolenoidalBasis, dim_solenoidal
from .solver import SolveReport, condition_estimate, solve

__version__ = "0.1.0"
