"""Symmetric interior-penalty forms on the reconstructed solenoidal space.

All integrals are first formed against the per-cell solenoidal generators
("coefficient space") and then pulled back to the 2-per-cell DOF vector with
the reconstruction map ``C``: ``A = C^T A_coef C`` and ``b = C^T b_coef``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, UsageError
from .quadrature import cell_rules, edge_rules
from .solenoidal import evaluate

CHUNK = 2048


# -- jump and average -------------------------------------------------------

@dataclass(frozen=True)
class EdgeTraces:
    average: np.ndarray
    jump: np.ndarray
    jump_tensor: Optional[np.ndarray] = None


def jump_average(v_plus, n_plus, v_minus=None, n_minus=None):
    """Average and jumps of a scalar or vector trace on an edge.

    Scalar ``v``: ``jump`` is the vector ``v+ n+ + v- n-``. Vector ``v``: ``jump``
    is the scalar ``v+ . n+ + v- . n-`` and ``jump_tensor`` is
    ``v+ (x) n+ + v- (x) n-``. Omit the minus side on a boundary edge.
    """
    vp = np.asarray(v_plus, dtype=float)
    n_p = np.asarray(n_plus, dtype=float)
    if v_minus is None:
        vm = np.zeros_like(vp)
        avg = vp
    else:
        vm = np.asarray(v_minus, dtype=float)
        avg = 0.5 * (vp + vm)
    n_m = -n_p if n_minus is None else np.asarray(n_minus, dtype=float)
    if vp.ndim == n_p.ndim - 1:
        return EdgeTraces(avg, vp[..., None] * n_p + vm[..., None] * n_m)
    jump = np.sum(vp * n_p, axis=-1) + np.sum(vm * n_m, axis=-1)
    tensor = vp[..., :, None] * n_p[..., None, :] + vm[..., :, None] * n_m[..., None, :]
    return EdgeTraces(avg, jump, tensor)


# -- problem data -----------------------------------------------------------

@dataclass
class ProblemSpec:
    """Body force ``f`` and Dirichlet data ``g``; optional exact solution.

    Vector callables map an ``(n, 2)`` point array to ``(n, 2)`` values;
    ``exact_grad`` returns ``(n, 2, 2)`` with ``[..., a, b] = d u_a / d x_b``;
    ``exact_p`` returns ``(n,)``.
    """

    f: Callable
    g: Callable
    exact_u: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    exact_p: Optional[Callable] = None
    name: str = "custom"

    @property
    def has_exact(self):
        return self.exact_u is not None and self.exact_grad is not None


def _call(fn, pts, what, where):
    shape = pts.shape[:-1]
    out = np.asarray(fn(pts.reshape(-1, 2)), dtype=float)
    out = out.reshape(shape + out.shape[1:])
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out.reshape(shape + (-1,))).all(axis=-1))[0]
        raise AssemblyError(f"non-finite {what} at {where(int(bad[0]))}")
    return out


def check_boundary_trace(mesh, spec, samples=10, tol=1e-12):
    """Largest deviation of ``g`` from the exact trace on boundary edges."""
    if spec.exact_u is None:
        raise UsageError("no exact solution to compare the boundary data with", module="dg_assembly")
    b = mesh.boundary_edges
    t = (np.arange(samples) + 0.5) / samples
    a = mesh.vertices[mesh.edges[b, 0]]
    c = mesh.vertices[mesh.edges[b, 1]]
    pts = (a[:, None, :] + t[None, :, None] * (c - a)[:, None, :]).reshape(-1, 2)
    dev = float(np.max(np.abs(spec.g(pts) - spec.exact_u(pts))))
    if dev > tol:
        raise AssemblyError(f"boundary data deviates from the exact trace by {dev:.3e}")
    return dev


def boundary_flux(mesh, vector_on_edges, exactness=8):
    """``(v . n, 1)`` over the boundary for ``vector_on_edges(edges, points)``."""
    b = mesh.boundary_edges
    pts, w = edge_rules(mesh, exactness, b)
    vals = vector_on_edges(b, pts)
    return float(np.sum(w * np.einsum("eqc,ec->eq", vals, mesh.edge_normals[b])))


def compatibility_defect(mesh, spec, exactness=8):
    """``(g . n, 1)`` over the boundary, which must vanish for solvability."""
    return boundary_flux(mesh, lambda e, p: _call(spec.g, p, "boundary data", lambda i: f"edge {e[i]}"),
                         exactness)


# -- penalties ----------------------------------------------------------------

def default_penalties(m):
    """``(eta0, eps0)``: ``20 m^2`` for the tensor jump, 0.1 for the normal jump.

    The eta term alone makes the form coercive; eps0 only trades the
    pressure inconsistency against over-constraining normal jumps, and large
    values cost both accuracy and conditioning.
    """
    return 20.0 * m * m, 0.1


@dataclass(frozen=True)
class Penalty:
    """``eta_e = eta0 / h_e`` and ``eps_e = eps0 / h_e**(m + 1)``, ``h_e`` the edge length."""

    eta0: float
    eps0: float
    degree: int

    def eta(self, h_e):
        return self.eta0 / h_e

    def eps(self, h_e):
        return self.eps0 / h_e ** (self.degree + 1)


# -- assembled system -------------------------------------------------------

@dataclass
class DGSystem:
    """Sparse symmetric system over the 2-per-cell DOFs.

    ``parts`` holds the unweighted DOF-space pieces so that
    ``matrix = volume + consistency + eta0 * eta + eps0 * eps``; ``eta`` carries
    the ``1 / h_e`` weight and ``eps`` the ``1 / h_e**(m + 1)`` weight.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    penalty: Penalty
    op: object
    exactness: int
    parts: dict = field(default_factory=dict)

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    @staticmethod
    def dofs_of(cell):
        return 2 * cell, 2 * cell + 1

    @property
    def energy_matrix(self):
        """Gram matrix of the energy norm (broken H1 + both jump seminorms)."""
        p = self.parts
        return p["volume"] + p["eta"] + p["eps"]

    def edge_penalties(self):
        h = self.op.mesh.edge_lengths
        return self.penalty.eta(h), self.penalty.eps(h)


def _basis_on(op, cells, pts):
    return evaluate(op.degree, pts, op.centers[cells][:, None, :], op.scales[cells][:, None], grad=True)


def _coef_index(op, cells):
    return cells[:, None] * op.dim + np.arange(op.dim)[None, :]


def _scatter(rows_idx, blocks, n):
    """Sum dense blocks ``(nb, k, k)`` at index sets ``(nb, k)`` into a CSR matrix."""
    k = rows_idx.shape[1]
    r = np.broadcast_to(rows_idx[:, :, None], (len(rows_idx), k, k)).ravel()
    c = np.broadcast_to(rows_idx[:, None, :], (len(rows_idx), k, k)).ravel()
    return sp.csr_matrix((blocks.ravel(), (r, c)), shape=(n, n))


def _gram(X, Y, w):
    """``sum_q w_q X_q^T Y_q`` per batch entry; X, Y are ``(nb, nq, r, k)``."""
    nb, nq, r, k = X.shape
    Xw = (X * w[:, :, None, None]).reshape(nb, nq * r, k)
    return np.matmul(Xw.transpose(0, 2, 1), Y.reshape(nb, nq * r, Y.shape[-1]))


class _Forms:
    """Coefficient-space building blocks shared by assembly, residuals and norms."""

    def __init__(self, op, exactness, workers=1):
        self.op = op
        self.mesh = op.mesh
        self.m = op.degree
        self.dim = op.dim
        self.exactness = exactness
        self.workers = workers
        self.ncoef = self.mesh.n_cells * self.dim

    def _map(self, fn, starts):
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                return list(pool.map(fn, starts))
        return [fn(s) for s in starts]

    def _sum(self, mats):
        total = sp.csr_matrix((self.ncoef, self.ncoef))
        for mat in mats:
            total = total + mat
        return total

    # -- cells ------------------------------------------------------------

    def cell_chunks(self):
        return range(0, self.mesh.n_cells, CHUNK)

    def _cell_quad(self, lo):
        cells = np.arange(lo, min(lo + CHUNK, self.mesh.n_cells))
        pts, w, owner = cell_rules(self.mesh, self.exactness, cells)
        phi, dphi = evaluate(self.m, pts, self.op.centers[owner], self.op.scales[owner], grad=True)
        starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
        return cells, pts, w, owner, phi, dphi, starts

    def volume_matrix(self):
        def work(lo):
            cells, pts, w, owner, phi, dphi, starts = self._cell_quad(lo)
            G = dphi.reshape(len(w), self.dim, 4)
            per_pt = np.einsum("qia,qja->qij", G * w[:, None, None], G)
            blocks = np.add.reduceat(per_pt, starts, axis=0)
            blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
            return _scatter(_coef_index(self.op, cells), blocks, self.ncoef)
        return self._sum(self._map(work, self.cell_chunks()))

    def volume_load(self, f, what="body force"):
        """``(f, phi_j)_K`` for every cell; ``f`` a vector callable."""
        def work(lo):
            cells, pts, w, owner, phi, dphi, starts = self._cell_quad(lo)
            fv = _call(f, pts, what, lambda i: f"cell {owner[i]}")
            per_pt = np.einsum("qc,qjc->qj", fv * w[:, None], phi)
            return np.add.reduceat(per_pt, starts, axis=0).ravel()
        return np.concatenate(self._map(work, self.cell_chunks()))

    def volume_grad_load(self, grad_u):
        """``(grad u, grad phi_j)_K`` for every cell."""
        def work(lo):
            cells, pts, w, owner, phi, dphi, starts = self._cell_quad(lo)
            gv = _call(grad_u, pts, "exact gradient", lambda i: f"cell {owner[i]}")
            per_pt = np.einsum("qab,qjab->qj", gv * w[:, None, None], dphi)
            return np.add.reduceat(per_pt, starts, axis=0).ravel()
        return np.concatenate(self._map(work, self.cell_chunks()))

    # -- edges --------------------------------------------------------------

    def _edge_chunks(self, edges):
        return [edges[i:i + CHUNK] for i in range(0, len(edges), CHUNK)]

    def _interior_ops(self, e):
        """Jump/average operators on interior edges ``e`` over the two cells' coefficients."""
        mesh = self.mesh
        L, R = mesh.edge_cells[e, 0], mesh.edge_cells[e, 1]
        pts, w = edge_rules(mesh, self.exactness, e)
        n = mesh.edge_normals[e]
        phiL, gL = _basis_on(self.op, L, pts)
        phiR, gR = _basis_on(self.op, R, pts)
        # (ne, nq, 2, dim) value traces with components first
        vL = phiL.transpose(0, 1, 3, 2)
        vR = phiR.transpose(0, 1, 3, 2)
        V = np.concatenate([vL, -vR], axis=-1)  # u+ - u-
        JT = V[:, :, :, None, :] * n[:, None, None, :, None]  # [[u (x) n]]_ab
        AV = 0.5 * np.concatenate([gL.transpose(0, 1, 3, 4, 2), gR.transpose(0, 1, 3, 4, 2)], axis=-1)
        JN = np.einsum("eqci,ec->eqi", V, n)
        ne, nq = w.shape
        idx = np.concatenate([_coef_index(self.op, L), _coef_index(self.op, R)], axis=1)
        return dict(pts=pts, w=w, n=n, JT=JT.reshape(ne, nq, 4, -1), AV=AV.reshape(ne, nq, 4, -1),
                    JN=JN[:, :, None, :], V=V, idx=idx, h=mesh.edge_lengths[e], edges=e)

    def _boundary_ops(self, e):
        mesh = self.mesh
        L = mesh.edge_cells[e, 0]
        pts, w = edge_rules(mesh, self.exactness, e)
        n = mesh.edge_normals[e]
        phi, g = _basis_on(self.op, L, pts)
        V = phi.transpose(0, 1, 3, 2)
        JT = V[:, :, :, None, :] * n[:, None, None, :, None]
        AV = g.transpose(0, 1, 3, 4, 2)
        JN = np.einsum("eqci,ec->eqi", V, n)
        ne, nq = w.shape
        return dict(pts=pts, w=w, n=n, JT=JT.reshape(ne, nq, 4, -1), AV=AV.reshape(ne, nq, 4, -1),
                    JN=JN[:, :, None, :], V=V, idx=_coef_index(self.op, L),
                    h=mesh.edge_lengths[e], edges=e)

    def _edge_ops(self, kind, e):
        return self._interior_ops(e) if kind == "interior" else self._boundary_ops(e)

    def edge_matrices(self):
        """Consistency, unit-eta and unit-eps matrices summed over all edges."""
        out = {"consistency": [], "eta": [], "eps": []}
        for kind, edges in (("interior", self.mesh.interior_edges), ("boundary", self.mesh.boundary_edges)):
            def work(e, kind=kind):
                o = self._edge_ops(kind, e)
                w, JT, AV, JN, h = o["w"], o["JT"], o["AV"], o["JN"], o["h"]
                X = _gram(JT, AV, w)
                cons = -(X + X.transpose(0, 2, 1))
                eta = _gram(JT, JT, w / h[:, None])
                eps = _gram(JN, JN, w / h[:, None] ** (self.m + 1))
                eta = 0.5 * (eta + eta.transpose(0, 2, 1))
                eps = 0.5 * (eps + eps.transpose(0, 2, 1))
                idx = o["idx"]
                return (_scatter(idx, cons, self.ncoef), _scatter(idx, eta, self.ncoef),
                        _scatter(idx, eps, self.ncoef))
            for cons, eta, eps in self._map(work, self._edge_chunks(edges)):
                out["consistency"].append(cons)
                out["eta"].append(eta)
                out["eps"].append(eps)
        return {k: self._sum(v) for k, v in out.items()}

    def boundary_load(self, g, penalty):
        """Boundary terms of the load functional for Dirichlet data ``g``."""
        vec = np.zeros(self.ncoef)
        for e in self._edge_chunks(self.mesh.boundary_edges):
            o = self._boundary_ops(e)
            gv = _call(g, o["pts"], "boundary data", lambda i: f"edge {e[i]}")
            w, n, h = o["w"], o["n"], o["h"]
            gn = np.einsum("eqc,ec->eq", gv, n)
            gT = (gv[:, :, :, None] * n[:, None, None, :]).reshape(len(e), -1, 4)
            lift = -np.einsum("eqk,eqki->eqi", gT, o["AV"])
            pen_eta = penalty.eta(h)[:, None, None] * np.einsum("eqk,eqki->eqi", gT, o["JT"])
            pen_eps = penalty.eps(h)[:, None, None] * gn[:, :, None] * o["JN"][:, :, 0, :]
            contrib = np.einsum("eq,eqi->ei", w, lift + pen_eta + pen_eps)
            np.add.at(vec, o["idx"], contrib)
        return vec

    def exact_edge_functional(self, u, grad_u, penalty):
        """Edge part of ``B_h(u, phi_j)`` for a smooth ``u`` (continuous inside)."""
        vec = np.zeros(self.ncoef)
        for kind, edges in (("interior", self.mesh.interior_edges), ("boundary", self.mesh.boundary_edges)):
            for e in self._edge_chunks(edges):
                o = self._edge_ops(kind, e)
                w, n, h = o["w"], o["n"], o["h"]
                gu = _call(grad_u, o["pts"], "exact gradient", lambda i: f"edge {e[i]}").reshape(len(e), -1, 4)
                # - ({grad u}, [[v (x) n]])
                terms = -np.einsum("eqk,eqki->eqi", gu, o["JT"])
                if kind == "boundary":
                    uv = _call(u, o["pts"], "exact velocity", lambda i: f"edge {e[i]}")
                    uT = (uv[:, :, :, None] * n[:, None, None, :]).reshape(len(e), -1, 4)
                    un = np.einsum("eqc,ec->eq", uv, n)
                    terms = terms - np.einsum("eqk,eqki->eqi", uT, o["AV"])
                    terms = terms + penalty.eta(h)[:, None, None] * np.einsum("eqk,eqki->eqi", uT, o["JT"])
                    terms = terms + penalty.eps(h)[:, None, None] * un[:, :, None] * o["JN"][:, :, 0, :]
                np.add.at(vec, o["idx"], np.einsum("eq,eqi->ei", w, terms))
        return vec

    def pressure_functional(self, p):
        """``(p, [[phi_j . n]])`` summed over all edges."""
        vec = np.zeros(self.ncoef)
        for kind, edges in (("interior", self.mesh.interior_edges), ("boundary", self.mesh.boundary_edges)):
            for e in self._edge_chunks(edges):
                o = self._edge_ops(kind, e)
                pv = _call(lambda x: np.asarray(p(x))[:, None], o["pts"], "pressure",
                           lambda i: f"edge {e[i]}")[..., 0]
                np.add.at(vec, o["idx"], np.einsum("eq,eq,eqi->ei", o["w"], pv, o["JN"][:, :, 0, :]))
        return vec


def default_exactness(m):
    return 2 * m + 2


def assemble(op, spec, eta0=None, eps0=None, exactness=None, workers=1):
    """Assemble ``B_h`` and ``F_h`` on the space reconstructed by ``op``."""
    m = op.degree
    d_eta, d_eps = default_penalties(m)
    eta0 = d_eta if eta0 is None else float(eta0)
    eps0 = d_eps if eps0 is None else float(eps0)
    if not (eta0 > 0 and eps0 > 0):
        raise UsageError("penalty constants must be positive", module="dg_assembly")
    exactness = default_exactness(m) if exactness is None else int(exactness)
    penalty = Penalty(eta0, eps0, m)
    forms = _Forms(op, exactness, workers)
    coef = {"volume": forms.volume_matrix(), **forms.edge_matrices()}
    C = op.coef_map
    parts = {}
    for k, M in coef.items():
        P = (C.T @ M @ C).tocsr()
        parts[k] = (0.5 * (P + P.T)).tocsr()
    A = parts["volume"] + parts["consistency"] + eta0 * parts["eta"] + eps0 * parts["eps"]
    A = (0.5 * (A + A.T)).tocsr()
    A.sort_indices()
    rhs_coef = forms.volume_load(spec.f) + forms.boundary_load(spec.g, penalty)
    rhs = C.T @ rhs_coef
    return DGSystem(matrix=A, rhs=rhs, penalty=penalty, op=op, exactness=exactness, parts=parts)


def load_vector(op, spec, penalty, exactness):
    """``F_h`` alone, at a chosen quadrature exactness."""
    forms = _Forms(op, exactness)
    return op.coef_map.T @ (forms.volume_load(spec.f) + forms.boundary_load(spec.g, penalty))


def consistency_residual(system, spec, probes=20, seed=0, exactness=12):
    """Max over random unit-energy-norm probes of ``B_h(u, v) - F_h(v) + (p, [[v . n]])``.

    The exact pair is applied through quadrature of its values and traces at
    ``exactness``; for a correct implementation the result is at the level of
    quadrature error.
    """
    if not spec.has_exact or spec.exact_p is None:
        raise UsageError("consistency residual needs exact velocity, gradient and pressure",
                         module="dg_assembly")
    op = system.op
    forms = _Forms(op, exactness)
    b_u = forms.volume_grad_load(spec.exact_grad) + forms.exact_edge_functional(
        spec.exact_u, spec.exact_grad, system.penalty)
    F = forms.volume_load(spec.f) + forms.boundary_load(spec.g, system.penalty)
    P = forms.pressure_functional(spec.exact_p)
    r = op.coef_map.T @ (b_u - F + P)
    rng = np.random.default_rng(seed)
    E = system.energy_matrix
    worst = 0.0
    for _ in range(probes):
        v = rng.standard_normal(len(r))
        v /= np.sqrt(v @ (E @ v))
        worst = max(worst, abs(float(r @ v)))
    return worst
