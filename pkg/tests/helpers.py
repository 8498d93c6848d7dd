"""Shared oracles for the tests."""
import numpy as np

from divfree_dg.solenoidal import evaluate


def random_global_field(m, seed, center=(0.5, 0.5), scale=1.0):
    """A random element of S_m on one global frame, with its Jacobian."""
    coef = np.random.default_rng(seed).normal(size=(m + 1) * (m + 4) // 2)

    def u(x):
        return np.einsum("d,ndc->nc", coef, evaluate(m, x, center, scale))

    def grad(x):
        return np.einsum("d,ndab->nab", coef, evaluate(m, x, center, scale, grad=True)[1])

    return u, grad


def random_points_in_cells(mesh, per_cell, seed=0):
    """``per_cell`` uniform points in every cell (via its sub-triangles)."""
    rng = np.random.default_rng(seed)
    cells, pts = [], []
    a = mesh.subtriangles[:, 1] - mesh.subtriangles[:, 0]
    b = mesh.subtriangles[:, 2] - mesh.subtriangles[:, 0]
    area = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    for k in range(mesh.n_cells):
        idx = np.flatnonzero(mesh.subtri_cell == k)
        tri = rng.choice(idx, size=per_cell, p=area[idx] / area[idx].sum())
        r = rng.uniform(size=(per_cell, 2))
        flip = r.sum(axis=1) > 1
        r[flip] = 1 - r[flip]
        t = mesh.subtriangles[tri]
        pts.append(t[:, 0] + r[:, :1] * (t[:, 1] - t[:, 0]) + r[:, 1:] * (t[:, 2] - t[:, 0]))
        cells.append(np.full(per_cell, k))
    return np.concatenate(cells), np.concatenate(pts)
