"""Quadrature on polygonal cells (through their sub-triangulation) and on edges."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import QuadratureError

MAX_TRIANGLE_DEGREE = 12


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        """Sum ``weights * values`` over the leading axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _triangle_table():
    text = resources.files("divfree_dg").joinpath("data/triangle_rules.json").read_text()
    return {int(k): (np.array(v["points"]), np.array(v["weights"])) for k, v in json.loads(text).items()}


def reference_triangle_rule(degree):
    """Symmetric positive rule on the triangle (0,0), (1,0), (0,1).

    Weights are normalised to sum to one (multiply by the area when mapping).
    """
    if degree > MAX_TRIANGLE_DEGREE:
        raise QuadratureError(
            f"triangle rules are tabulated up to degree {MAX_TRIANGLE_DEGREE}, got {degree}")
    pts, w = _triangle_table()[max(int(degree), 1)]
    return pts, w


def map_to_triangles(triangles, degree):
    """Map the reference rule onto ``triangles`` of shape ``(nt, 3, 2)``.

    Returns points ``(nt, nq, 2)`` and weights ``(nt, nq)``.
    """
    ref, w = reference_triangle_rule(degree)
    a = triangles[:, 0]
    e1 = triangles[:, 1] - a
    e2 = triangles[:, 2] - a
    pts = a[:, None, :] + ref[None, :, 0, None] * e1[:, None, :] + ref[None, :, 1, None] * e2[:, None, :]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area[:, None] * w[None, :]


def cell_rule(mesh, cell, exactness):
    """Rule exact to ``exactness`` over one cell, built on its sub-triangles."""
    tris = mesh.subtriangles[mesh.subtri_cell == cell]
    pts, w = map_to_triangles(tris, exactness)
    return QuadratureRule(pts.reshape(-1, 2), w.ravel())


def cell_rules(mesh, exactness, cells=None):
    """Quadrature for many cells at once.

    Returns ``(points, weights, owner)`` flattened over all sub-triangles of
    ``cells`` (default: all), grouped by cell in ascending order.
    """
    if cells is None:
        sel = slice(None)
    else:
        sel = np.isin(mesh.subtri_cell, cells)
    tris = mesh.subtriangles[sel]
    owner = mesh.subtri_cell[sel]
    pts, w = map_to_triangles(tris, exactness)
    nq = pts.shape[1]
    return pts.reshape(-1, 2), w.ravel(), np.repeat(owner, nq)


@lru_cache(maxsize=None)
def gauss_legendre(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_points_for(exactness):
    return max(1, math.ceil((exactness + 1) / 2))


def edge_rule(a, b, exactness):
    """Gauss-Legendre rule on the segment ``a``-``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        raise QuadratureError("edge endpoints coincide")
    t, w = gauss_legendre(edge_points_for(exactness))
    return QuadratureRule(a + t[:, None] * (b - a), length * w)


def edge_rules(mesh, exactness, edges=None):
    """Points ``(ne, nq, 2)`` and weights ``(ne, nq)`` for many edges."""
    if edges is None:
        edges = np.arange(mesh.n_edges)
    t, w = gauss_legendre(edge_points_for(exactness))
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return pts, mesh.edge_lengths[edges][:, None] * w[None, :]
