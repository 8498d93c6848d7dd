"""Sparse SPD solves and conditioning estimates."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, FactorizationError, UsageError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass
class SolveReport:
    method: str
    relative_residual: float
    iterations: Optional[int] = None
    refinement_steps: int = 0
    condition_estimate: Optional[float] = None


def _as_matrix(system):
    if hasattr(system, "matrix"):
        return sp.csc_matrix(system.matrix), np.asarray(system.rhs, dtype=float)
    A, b = system
    return sp.csc_matrix(A), np.asarray(b, dtype=float)


def ldlt_factor(A):
    """Symmetric-pivoting sparse LU of an SPD matrix with a minimum-degree ordering.

    With no row pivoting the diagonal of ``U`` holds the LDL^T pivots, so a
    non-positive entry certifies that ``A`` is not positive definite.
    """
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise FactorizationError(
            f"factorization failed ({exc}); the penalty constants may be too small") from None
    pivots = lu.U.diagonal()
    if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
        bad = int(np.sum(~(pivots > 0)))
        raise FactorizationError(
            f"matrix is not positive definite ({bad} non-positive pivots); "
            "increase the penalty constants eta0/eps0")
    return lu


def solve(system, method="direct", tol=DEFAULT_TOL, max_refine=3):
    """Solve ``A x = b`` for an SPD system.

    ``system`` is a :class:`~divfree_dg.assembly.DGSystem` or a pair ``(A, b)``.
    The direct path applies up to ``max_refine`` steps of iterative refinement
    when the first residual misses ``tol``.
    """
    if not 0 < tol < 1:
        raise UsageError("tol must lie in (0, 1)", module="linear_solver")
    A, b = _as_matrix(system)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(method=method, relative_residual=0.0,
                                             iterations=0 if method == "cg" else None)
    if method == "direct":
        lu = ldlt_factor(A)
        x = lu.solve(b)
        res = np.linalg.norm(b - A @ x) / bnorm
        steps = 0
        while res > tol and steps < max_refine:
            x = x + lu.solve(b - A @ x)
            res = np.linalg.norm(b - A @ x) / bnorm
            steps += 1
        if res > tol:
            log.warning("direct solve residual %.2e above tolerance %.0e", res, tol)
        return x, SolveReport(method="direct", relative_residual=float(res), refinement_steps=steps)
    if method == "cg":
        n = A.shape[0]
        d = A.diagonal()
        if np.any(d <= 0):
            raise FactorizationError("non-positive diagonal entry; the matrix is not SPD")
        M = spla.LinearOperator(A.shape, matvec=lambda v: v / d, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=50 * n, M=M, callback=cb)
        res = np.linalg.norm(b - A @ x) / bnorm
        if info != 0 or res > tol:
            raise ConvergenceError(
                f"conjugate gradient stopped after {count[0]} iterations "
                f"with relative residual {res:.3e}")
        return x, SolveReport(method="cg", relative_residual=float(res), iterations=count[0])
    raise UsageError(f"unknown solver method {method!r}", module="linear_solver")


def condition_estimate(system, steps=50, jacobi=False, seed=0):
    """Ratio of extreme eigenvalues from power and inverse-power iteration.

    ``jacobi=True`` applies the estimate to ``D^-1/2 A D^-1/2``.
    """
    A, _ = _as_matrix(system)
    if jacobi:
        s = 1.0 / np.sqrt(A.diagonal())
        A = sp.csc_matrix(sp.diags(s) @ A @ sp.diags(s))
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_max = 0.0
    for _ in range(steps):
        w = A @ v
        lam_max = float(v @ w)
        v = w / np.linalg.norm(w)
    lu = ldlt_factor(A)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(steps):
        w = lu.solve(v)
        mu = float(v @ w)
        v = w / np.linalg.norm(w)
    return lam_max * mu
