"""Element patches, sampling nodes and unisolvence diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PatchError
from .quadrature import map_to_triangles
from .solenoidal import dim_solenoidal, evaluate

RANK_THRESHOLD = 1e-10
MAX_GROW = 3


@dataclass(frozen=True)
class ElementPatch:
    """Patch ``S(K)`` of ``owner`` with its sampling nodes (member barycenters).

    ``diameter`` is the largest distance between member vertices; the monomial
    frame is centred at the owner barycenter and scaled by ``diameter``.
    """

    owner: int
    members: tuple
    nodes: np.ndarray
    diameter: float
    center: np.ndarray

    @property
    def scale(self):
        return self.diameter

    @property
    def size(self):
        return len(self.members)


@dataclass(frozen=True)
class PatchDiagnostics:
    lambda_est: float
    min_singular_value: float
    rank_ok: bool


def default_patch_size(m):
    """``ceil((m + 1)(m + 4) / 4) + 3`` sampling nodes for degree ``m``."""
    if m < 1:
        raise ValueError("degree must be at least 1")
    return math.ceil((m + 1) * (m + 4) / 4) + 3


def min_patch_size(m):
    """Fewest nodes for which the least-squares problem can be determined."""
    return math.ceil(dim_solenoidal(m) / 2)


def _ring(mesh, frontier, inside):
    return {nb for c in frontier for nb in mesh.neighbors[c]} - inside


def build_patch(mesh, owner, target_size):
    """Grow ``S(owner)`` ring by ring over edge neighbours up to ``target_size`` cells.

    Each ring is admitted in order of barycenter distance to the owner (ties by
    cell id); a ring that would overshoot is truncated in that order.
    """
    if target_size < 1:
        raise PatchError("patch size must be at least 1")
    if target_size > mesh.n_cells:
        raise PatchError(
            f"patch size {target_size} exceeds the {mesh.n_cells} cells of the mesh "
            f"(short by {target_size - mesh.n_cells})")
    xk = mesh.barycenters[owner]
    members = [int(owner)]
    inside = {int(owner)}
    frontier = [int(owner)]
    while len(members) < target_size:
        ring = _ring(mesh, frontier, inside)
        if not ring:
            raise PatchError(
                f"cell {owner}: only {len(members)} cells reachable, patch size {target_size}")
        ring = sorted(ring, key=lambda c: (float(np.hypot(*(mesh.barycenters[c] - xk))), c))
        ring = ring[: target_size - len(members)]
        members += ring
        inside.update(ring)
        frontier = ring
    return _make_patch(mesh, owner, members)


def _make_patch(mesh, owner, members):
    verts = np.unique(np.concatenate([mesh.cells[c] for c in members]))
    xy = mesh.vertices[verts]
    d = xy[:, None, :] - xy[None, :, :]
    diameter = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d))))
    return ElementPatch(
        owner=int(owner),
        members=tuple(int(c) for c in members),
        nodes=mesh.barycenters[list(members)].copy(),
        diameter=diameter,
        center=mesh.barycenters[owner].copy(),
    )


def grow_by_ring(mesh, patch):
    """Return ``patch`` enlarged by its complete next ring of neighbours."""
    inside = set(patch.members)
    ring = _ring(mesh, patch.members, inside)
    if not ring:
        raise PatchError(f"cell {patch.owner}: patch already covers its connected component")
    return build_patch(mesh, patch.owner, patch.size + len(ring))


def evaluation_matrix(degree, nodes, center, scale):
    """Node-evaluation matrix ``A``: x-components at all nodes, then y-components.

    Shape ``(2 n, dim)``; a leading batch axis on ``nodes`` (with matching
    ``center``/``scale``) gives ``(batch, 2 n, dim)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    center = np.asarray(center, dtype=float)
    scale = np.asarray(scale, dtype=float)
    vals = evaluate(degree, nodes, center[..., None, :], scale[..., None])  # (..., n, dim, 2)
    vals = np.moveaxis(vals, -1, -3)  # (..., 2, n, dim)
    return vals.reshape(vals.shape[:-3] + (-1, vals.shape[-1]))


def _normalized_singular_values(A):
    norms = np.linalg.norm(A, axis=-2)
    norms = np.where(norms > 0, norms, 1.0)
    An = A / norms[..., None, :]
    return An, norms


def _rank_ratio(A):
    if A.shape[-2] < A.shape[-1]:
        return np.zeros(A.shape[:-2])
    An, _ = _normalized_singular_values(A)
    s = np.linalg.svd(An, compute_uv=False)
    return s[..., -1] / s[..., 0]


def patch_diagnostics(mesh, patch, degree):
    """Singular-value and Lambda estimates for the nodes of ``patch``.

    ``lambda_est`` evaluates each right singular direction of the
    column-normalised evaluation matrix on member quadrature points and vertices
    and takes the largest ratio of sampled sup norm to nodal sup norm. It is a
    lower bound for Lambda(m, I(K)); ``inf`` when the node set is not unisolvent.
    """
    A = evaluation_matrix(degree, patch.nodes, patch.center, patch.scale)
    dim = A.shape[1]
    if A.shape[0] < dim:
        return PatchDiagnostics(lambda_est=math.inf, min_singular_value=0.0, rank_ok=False)
    An, norms = _normalized_singular_values(A)
    _, s, vt = np.linalg.svd(An)
    ratio = s[-1] / s[0]
    rank_ok = bool(ratio > RANK_THRESHOLD)
    if not rank_ok:
        return PatchDiagnostics(lambda_est=math.inf, min_singular_value=float(s[-1]), rank_ok=False)
    sel = np.isin(mesh.subtri_cell, patch.members)
    qp, _ = map_to_triangles(mesh.subtriangles[sel], max(2 * degree, 1))
    verts = mesh.vertices[np.unique(np.concatenate([mesh.cells[c] for c in patch.members]))]
    sample = np.concatenate([qp.reshape(-1, 2), verts])
    phi_s = evaluate(degree, sample, patch.center, patch.scale)  # (ns, dim, 2)
    phi_n = evaluate(degree, patch.nodes, patch.center, patch.scale)
    coef = vt.T / norms[:, None]  # columns: coefficient directions
    sup_s = np.linalg.norm(np.einsum("sdc,dk->skc", phi_s, coef), axis=-1).max(axis=0)
    sup_n = np.linalg.norm(np.einsum("sdc,dk->skc", phi_n, coef), axis=-1).max(axis=0)
    lam = float(np.max(sup_s / sup_n))
    return PatchDiagnostics(lambda_est=lam, min_singular_value=float(s[-1]), rank_ok=rank_ok)


def build_patches(mesh, degree, target_size=None, auto_grow=True):
    """Patches for every cell, enlarged by whole rings where unisolvence fails.

    A patch that is still rank deficient after ``MAX_GROW`` enlargements raises
    :class:`PatchError`.
    """
    if target_size is None:
        target_size = default_patch_size(degree)
    patches = [build_patch(mesh, k, target_size) for k in range(mesh.n_cells)]
    for attempt in range(MAX_GROW + 1):
        bad = _rank_deficient(patches, degree)
        if not bad:
            return patches
        if not auto_grow or attempt == MAX_GROW:
            k = bad[0]
            raise PatchError(
                f"cell {k}: sampling nodes are not unisolvent for degree {degree} "
                f"with {patches[k].size} patch members")
        for k in bad:
            patches[k] = grow_by_ring(mesh, patches[k])
    return patches


def _rank_deficient(patches, degree):
    bad = []
    by_size = {}
    for p in patches:
        by_size.setdefault(p.size, []).append(p)
    for size, group in by_size.items():
        nodes = np.stack([p.nodes for p in group])
        centers = np.stack([p.center for p in group])
        scales = np.array([p.scale for p in group])
        ratio = _rank_ratio(evaluation_matrix(degree, nodes, centers, scales))
        bad += [p.owner for p, r in zip(group, ratio) if not r > RANK_THRESHOLD]
    return sorted(bad)


def support_map(patches):
    """For each cell K the cells K' whose patch contains K (support of lambda_K)."""
    out = [[] for _ in patches]
    for p in patches:
        for c in p.members:
            out[c].append(p.owner)
    return out
