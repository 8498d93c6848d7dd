"""Least-squares solenoidal reconstruction from one vector value per cell.

Degrees of freedom are the two velocity components at each cell barycenter,
numbered ``2 k`` (x) and ``2 k + 1`` (y) for cell ``k``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import InputDataError, ReconstructionError
from .patching import RANK_THRESHOLD, evaluation_matrix, support_map
from .solenoidal import dim_solenoidal, evaluate

CHUNK = 1024


def dof_index(cell, comp):
    return 2 * cell + comp


def pinv_qr(A):
    """Pseudoinverse of a full-column-rank ``A`` via column-pivoted QR.

    Returns ``(pinv, ratio)`` with ``ratio = |r_nn| / |r_11|`` as a rank gauge.
    """
    Q, R, perm = scipy.linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    ratio = d[-1] / d[0] if d[0] > 0 else 0.0
    out = np.empty((A.shape[1], A.shape[0]))
    if ratio > 0:
        out[perm] = scipy.linalg.solve_triangular(R, Q.T)
    return out, ratio


class ReconstructionOperator:
    """Per-cell matrices ``R_K`` mapping patch nodal values to coefficients.

    Attributes
    ----------
    matrices : list of ndarray
        ``R_K`` of shape ``(dim, 2 #S(K))``; columns are the x-values of the
        patch members in member order, then their y-values.
    coef_map : scipy.sparse.csr_matrix
        Global map from the DOF vector to stacked per-cell coefficients,
        shape ``(n_cells * dim, 2 n_cells)``.
    centers, scales : ndarray
        Per-cell monomial frame (owner barycenter and patch diameter).
    support : list of list of int
        Cells whose patch contains each cell.
    """

    def __init__(self, mesh, patches, degree, matrices):
        self.mesh = mesh
        self.patches = patches
        self.degree = degree
        self.dim = dim_solenoidal(degree)
        self.matrices = matrices
        self.centers = np.stack([p.center for p in patches])
        self.scales = np.array([p.scale for p in patches])
        self.support = support_map(patches)
        rows, cols, vals = [], [], []
        for k, (p, R) in enumerate(zip(patches, matrices)):
            members = np.asarray(p.members)
            gdofs = np.concatenate([2 * members, 2 * members + 1])
            r = k * self.dim + np.arange(self.dim)
            rows.append(np.repeat(r, len(gdofs)))
            cols.append(np.tile(gdofs, self.dim))
            vals.append(R.ravel())
        n = mesh.n_cells
        self.coef_map = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * self.dim, 2 * n))

    @property
    def n_dofs(self):
        return 2 * self.mesh.n_cells

    def local_dofs(self, cell):
        members = np.asarray(self.patches[cell].members)
        return np.concatenate([2 * members, 2 * members + 1])

    def coefficients(self, dofs):
        """Per-cell coefficients ``(n_cells, dim)`` for a DOF vector."""
        return (self.coef_map @ np.asarray(dofs, dtype=float)).reshape(-1, self.dim)


def build_reconstruction(mesh, patches, degree, workers=1):
    """Factor every patch's least-squares problem."""
    n = mesh.n_cells

    def work(lo):
        out = []
        for k in range(lo, min(lo + CHUNK, n)):
            p = patches[k]
            A = evaluation_matrix(degree, p.nodes, p.center, p.scale)
            if A.shape[0] < A.shape[1]:
                raise ReconstructionError(
                    f"cell {k}: {p.size} sampling nodes cannot determine {A.shape[1]} coefficients")
            R, ratio = pinv_qr(A)
            if not ratio > RANK_THRESHOLD * 1e-2:
                smin = np.linalg.svd(A, compute_uv=False)[-1]
                raise ReconstructionError(
                    f"cell {k}: least-squares matrix is rank deficient "
                    f"(min singular value {smin:.3e})")
            out.append(R)
        return out

    starts = range(0, n, CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(work, starts))
    else:
        chunks = [work(s) for s in starts]
    matrices = [R for c in chunks for R in c]
    return ReconstructionOperator(mesh, patches, degree, matrices)


class SolutionField:
    """Piecewise solenoidal polynomial field ``S u`` for a DOF vector."""

    def __init__(self, op, dofs):
        self.op = op
        self.mesh = op.mesh
        self.degree = op.degree
        self.dofs = np.asarray(dofs, dtype=float)
        self.coefficients = op.coefficients(self.dofs)

    def values(self, cells, points, grad=False):
        """Field values ``(n, 2)`` (and Jacobians ``(n, 2, 2)``) at points of ``cells``."""
        cells = np.asarray(cells)
        points = np.asarray(points, dtype=float)
        c = self.coefficients[cells]
        res = evaluate(self.degree, points, self.op.centers[cells], self.op.scales[cells], grad=grad)
        if grad:
            phi, dphi = res
            return (np.einsum("...d,...dc->...c", c, phi),
                    np.einsum("...d,...dab->...ab", c, dphi))
        return np.einsum("...d,...dc->...c", c, res)

    def eval(self, cell, point):
        return self.values(cell, point)

    def eval_grad(self, cell, point):
        return self.values(cell, point, grad=True)[1]

    def cell_values(self):
        """Velocity at every cell barycenter, shape ``(n_cells, 2)``."""
        return self.values(np.arange(self.mesh.n_cells), self.mesh.barycenters)


def field_from_dofs(op, dofs):
    return SolutionField(op, dofs)


def interpolate(op, u):
    """Reconstruct ``u`` from its values at the sampling nodes.

    ``u`` maps an ``(n, 2)`` point array to an ``(n, 2)`` value array.
    """
    vals = np.asarray(u(op.mesh.barycenters), dtype=float)
    if vals.shape != (op.mesh.n_cells, 2):
        raise InputDataError(f"field returned shape {vals.shape}, expected {(op.mesh.n_cells, 2)}",
                             module="reconstruction")
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals).all(axis=1))[0])
        raise InputDataError(f"non-finite sample at the node of cell {bad}", module="reconstruction")
    return SolutionField(op, vals.ravel())
