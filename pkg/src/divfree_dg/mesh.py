"""Polygonal meshes: geometry, topology, file ingestion and diagnostics."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import MeshGeometryError, MeshParseError, MeshTopologyError

# boundary tags assigned by build_structured_mesh
TAG_BOTTOM, TAG_RIGHT, TAG_TOP, TAG_LEFT = 1, 2, 3, 4


def _signed_area(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _tri_area(a, b, c):
    return 0.5 * ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                  - (c[..., 0] - a[..., 0]) * (b[..., 1] - a[..., 1]))


def _diameter(xy):
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d))))


class PolyMesh:
    """Immutable polygonal mesh.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    cells : sequence of sequences of int
        Counter-clockwise vertex loops.
    boundary_tags : dict, optional
        Maps a sorted vertex pair ``(i, j)`` of a boundary edge to an integer tag.

    Attributes
    ----------
    edges : ndarray, shape (ne, 2)
        Vertex pairs, ordered as traversed by the left cell.
    edge_cells : ndarray, shape (ne, 2)
        Left and right cell of each edge; right is -1 on the boundary.
    areas, diameters, barycenters
        Per-cell geometry.
    subtriangles : ndarray, shape (nt, 3, 2)
        Sub-triangulation of all cells, grouped by cell.
    subtri_cell : ndarray, shape (nt,)
        Owning cell of each sub-triangle.
    """

    def __init__(self, vertices, cells, boundary_tags=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshGeometryError("vertices must be an (n, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshGeometryError("vertex coordinates must be finite")
        self.cells = [np.asarray(c, dtype=np.int64) for c in cells]
        nv = len(self.vertices)
        for k, c in enumerate(self.cells):
            if len(c) < 3:
                raise MeshGeometryError(f"cell {k} has fewer than 3 vertices")
            if c.min() < 0 or c.max() >= nv:
                raise MeshTopologyError(f"cell {k} references a vertex out of range")
            if len(np.unique(c)) != len(c):
                raise MeshGeometryError(f"cell {k} repeats a vertex")
        self._build_geometry()
        self._build_topology()
        self.boundary_tags = {}
        for key, tag in (boundary_tags or {}).items():
            key = (min(key), max(key))
            e = self._edge_index.get(key)
            if e is None or self.edge_cells[e, 1] != -1:
                raise MeshTopologyError(f"boundary tag given for {list(key)}, which is not a boundary edge")
            self.boundary_tags[int(e)] = int(tag)
        for a in (self.vertices, self.edges, self.edge_cells, self.areas,
                  self.diameters, self.barycenters, self.subtriangles, self.subtri_cell,
                  self.edge_normals, self.edge_lengths):
            a.flags.writeable = False

    # -- construction -----------------------------------------------------

    def _build_geometry(self):
        ncells = len(self.cells)
        self.areas = np.empty(ncells)
        self.diameters = np.empty(ncells)
        self.barycenters = np.empty((ncells, 2))
        tris, owner = [], []
        for k, c in enumerate(self.cells):
            xy = self.vertices[c]
            area = _signed_area(xy)
            if not area > 0.0:
                raise MeshGeometryError(
                    f"cell {k} has non-positive signed area {area:.3e} "
                    "(degenerate or clockwise)")
            # area-weighted centroid
            x, y = xy[:, 0], xy[:, 1]
            cross = x * np.roll(y, -1) - np.roll(x, -1) * y
            cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
            cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
            center = np.array([cx, cy])
            if len(c) == 3:
                sub = xy[None, :, :]
            else:
                sub = np.stack([np.broadcast_to(center, xy.shape), xy, np.roll(xy, -1, axis=0)], axis=1)
                sub_area = _tri_area(sub[:, 0], sub[:, 1], sub[:, 2])
                if np.any(sub_area <= 1e-14 * area):
                    raise MeshGeometryError(
                        f"cell {k} is not star-shaped with respect to its barycenter")
            self.areas[k] = area
            self.diameters[k] = _diameter(xy)
            self.barycenters[k] = center
            tris.append(sub)
            owner.append(np.full(len(sub), k))
        self.subtriangles = np.ascontiguousarray(np.concatenate(tris))
        self.subtri_cell = np.concatenate(owner)

    def _build_topology(self):
        index = {}
        edges, edge_cells = [], []
        self.cell_edges = []
        for k, c in enumerate(self.cells):
            ce = []
            for a, b in zip(c, np.roll(c, -1)):
                key = (int(min(a, b)), int(max(a, b)))
                e = index.get(key)
                if e is None:
                    e = len(edges)
                    index[key] = e
                    edges.append((int(a), int(b)))
                    edge_cells.append([k, -1])
                elif edge_cells[e][1] == -1 and edge_cells[e][0] != k:
                    if edges[e] != (int(b), int(a)):
                        raise MeshTopologyError(
                            f"edge {list(key)} traversed in the same direction by cells "
                            f"{edge_cells[e][0]} and {k}")
                    edge_cells[e][1] = k
                else:
                    raise MeshTopologyError(
                        f"non-manifold edge {list(key)}: shared by three or more cells")
                ce.append(e)
            self.cell_edges.append(np.array(ce, dtype=np.int64))
        self._edge_index = index
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_cells = np.array(edge_cells, dtype=np.int64).reshape(-1, 2)
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_lengths = np.hypot(t[:, 0], t[:, 1])
        # outward from the left cell, which traverses the edge counter-clockwise
        self.edge_normals = np.column_stack([t[:, 1], -t[:, 0]]) / self.edge_lengths[:, None]
        nbrs = [[] for _ in self.cells]
        for (l, r) in self.edge_cells:
            if r >= 0:
                nbrs[l].append(int(r))
                nbrs[r].append(int(l))
        self.neighbors = [sorted(n) for n in nbrs]

    # -- convenience ------------------------------------------------------

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def h(self):
        return float(self.diameters.max())

    @property
    def interior_edges(self):
        return np.flatnonzero(self.edge_cells[:, 1] >= 0)

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    def edge_index(self, i, j):
        return self._edge_index[(min(i, j), max(i, j))]

    def cell_vertices(self, k):
        return self.vertices[self.cells[k]]

    def __repr__(self):
        return (f"PolyMesh(cells={self.n_cells}, vertices={len(self.vertices)}, "
                f"edges={self.n_edges}, h={self.h:.4g})")


# -- structured families ----------------------------------------------------

def build_structured_mesh(kind, nx, ny, bbox=(0.0, 0.0, 1.0, 1.0)):
    """Structured ``tri`` or ``quad`` mesh of ``bbox = (xmin, ymin, xmax, ymax)``.

    Triangles split each quad along a diagonal whose direction alternates in a
    checkerboard pattern.
    """
    if kind not in ("tri", "quad"):
        raise MeshGeometryError(f"unknown structured mesh kind {kind!r}")
    if nx < 1 or ny < 1:
        raise MeshGeometryError("nx and ny must be at least 1")
    x0, y0, x1, y1 = map(float, bbox)
    if not (x1 > x0 and y1 > y0):
        raise MeshGeometryError(f"degenerate bounding box {bbox}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if kind == "quad":
                cells.append((a, b, c, d))
            elif (i + j) % 2 == 0:
                cells += [(a, b, c), (a, c, d)]
            else:
                cells += [(a, b, d), (b, c, d)]
    tags = {}
    for i in range(nx):
        tags[(vid(i, 0), vid(i + 1, 0))] = TAG_BOTTOM
        tags[(vid(i, ny), vid(i + 1, ny))] = TAG_TOP
    for j in range(ny):
        tags[(vid(nx, j), vid(nx, j + 1))] = TAG_RIGHT
        tags[(vid(0, j), vid(0, j + 1))] = TAG_LEFT
    return PolyMesh(verts, cells, tags)


# -- file formats -------------------------------------------------------------

def load_mesh(source, format="poly-json"):
    """Read a mesh from a path, a text/binary stream or bytes.

    ``format`` is ``"poly-json"`` or ``"gmsh-msh-v2-ascii"`` (alias ``"gmsh"``).
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    if format == "poly-json":
        return _read_poly_json(text)
    if format in ("gmsh", "gmsh-msh-v2-ascii", "msh"):
        return _read_gmsh(text)
    raise MeshParseError(f"unknown mesh format {format!r}")


def _read_poly_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict) or "vertices" not in doc or "cells" not in doc:
        raise MeshParseError("poly-json document needs 'vertices' and 'cells'", line=1)
    try:
        verts = np.array(doc["vertices"], dtype=float)
        cells = [[int(i) for i in c] for c in doc["cells"]]
    except (TypeError, ValueError) as exc:
        raise MeshParseError(f"bad vertices or cells: {exc}", line=1) from None
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshParseError("vertices must be a list of [x, y] pairs", line=1)
    tags = {}
    for key, tag in (doc.get("boundary_tags") or {}).items():
        try:
            pair = json.loads(key)
            tags[(int(pair[0]), int(pair[1]))] = int(tag)
        except (ValueError, TypeError, IndexError):
            raise MeshParseError(f"bad boundary_tags key {key!r}", line=1) from None
    return PolyMesh(verts, cells, tags)


def write_poly_json(mesh, target):
    """Write ``mesh`` as poly-json to a path or text stream."""
    doc = {
        "vertices": mesh.vertices.tolist(),
        "cells": [c.tolist() for c in mesh.cells],
    }
    if mesh.boundary_tags:
        doc["boundary_tags"] = {
            json.dumps(sorted(int(v) for v in mesh.edges[e])): tag
            for e, tag in sorted(mesh.boundary_tags.items())
        }
    text = json.dumps(doc)
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)


_GMSH_NODES_PER_TYPE = {1: 2, 2: 3, 3: 4, 15: 1}


def _read_gmsh(text):
    lines = io.StringIO(text).read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file", line=pos)
        pos += 1
        return lines[pos - 1].strip()

    nodes = None
    elements = None
    while pos < len(lines):
        head = next_line()
        if not head:
            continue
        if head == "$MeshFormat":
            fields = next_line().split()
            if not fields or not fields[0].startswith("2."):
                raise MeshParseError("only MSH 2.x is supported", line=pos)
            if len(fields) > 1 and fields[1] != "0":
                raise MeshParseError("binary MSH files are not supported", line=pos)
            _expect(next_line(), "$EndMeshFormat", pos)
        elif head == "$Nodes":
            n = _int(next_line(), pos)
            nodes = {}
            for _ in range(n):
                fields = next_line().split()
                if len(fields) < 3:
                    raise MeshParseError("node line needs id x y [z]", line=pos)
                try:
                    nodes[int(fields[0])] = (float(fields[1]), float(fields[2]))
                except ValueError:
                    raise MeshParseError("malformed node line", line=pos) from None
            _expect(next_line(), "$EndNodes", pos)
        elif head == "$Elements":
            n = _int(next_line(), pos)
            elements = []
            for _ in range(n):
                fields = next_line().split()
                try:
                    vals = [int(f) for f in fields]
                    etype, ntags = vals[1], vals[2]
                except (ValueError, IndexError):
                    raise MeshParseError("malformed element line", line=pos) from None
                if etype not in _GMSH_NODES_PER_TYPE:
                    raise MeshParseError(
                        f"unsupported element type {etype}; only 2 (triangle) and "
                        "3 (quadrilateral) cells are accepted", line=pos)
                conn = vals[3 + ntags:]
                if len(conn) != _GMSH_NODES_PER_TYPE[etype]:
                    raise MeshParseError("wrong node count for element type", line=pos)
                tag = vals[3] if ntags > 0 else 0
                elements.append((etype, tag, conn, pos))
            _expect(next_line(), "$EndElements", pos)
        elif head.startswith("$"):
            end = "$End" + head[1:]
            while next_line() != end:
                pass
        else:
            raise MeshParseError(f"unexpected content {head[:40]!r}", line=pos)
    if nodes is None or elements is None:
        raise MeshParseError("missing $Nodes or $Elements section", line=pos)

    used = sorted({n for et, _, conn, _ in elements if et in (2, 3) for n in conn})
    remap = {}
    verts = []
    for nid in used:
        if nid not in nodes:
            raise MeshParseError(f"element references unknown node {nid}", line=pos)
        remap[nid] = len(verts)
        verts.append(nodes[nid])
    verts = np.array(verts, dtype=float).reshape(-1, 2)
    cells, lines_tagged = [], []
    for etype, tag, conn, lineno in elements:
        if etype in (2, 3):
            c = [remap[n] for n in conn]
            if _signed_area(verts[c]) < 0:
                c = c[::-1]
            cells.append(c)
        elif etype == 1:
            lines_tagged.append((conn, tag, lineno))
    if not cells:
        raise MeshParseError("no triangle or quadrilateral elements found", line=pos)
    mesh = PolyMesh(verts, cells)
    # physical tags of line elements become boundary tags; interior lines are ignored
    for conn, tag, _ in lines_tagged:
        if conn[0] not in remap or conn[1] not in remap:
            continue
        a, b = remap[conn[0]], remap[conn[1]]
        e = mesh._edge_index.get((min(a, b), max(a, b)))
        if e is not None and mesh.edge_cells[e, 1] < 0:
            mesh.boundary_tags[int(e)] = int(tag)
    return mesh


def _int(s, line):
    try:
        return int(s)
    except ValueError:
        raise MeshParseError(f"expected an integer, got {s[:40]!r}", line=line) from None


def _expect(s, token, line):
    if s != token:
        raise MeshParseError(f"expected {token}, got {s[:40]!r}", line=line)


# -- diagnostics --------------------------------------------------------------

@dataclass(frozen=True)
class MeshDiagnostics:
    h: float
    min_area: float
    shape_ratios: np.ndarray
    rho1: float

    @property
    def max_shape_ratio(self):
        return float(self.shape_ratios.max())


def diagnostics(mesh):
    """Shape-regularity report for ``mesh``.

    ``shape_ratios`` holds h_T / rho_T for every sub-triangle, with rho_T the
    inradius; ``rho1`` is the largest ratio of a cell diameter to the diameter
    of one of its sub-triangles.
    """
    t = mesh.subtriangles
    sides = np.stack([np.linalg.norm(t[:, 1] - t[:, 0], axis=1),
                      np.linalg.norm(t[:, 2] - t[:, 1], axis=1),
                      np.linalg.norm(t[:, 0] - t[:, 2], axis=1)], axis=1)
    area = np.abs(_tri_area(t[:, 0], t[:, 1], t[:, 2]))
    inradius = 2.0 * area / sides.sum(axis=1)
    h_t = sides.max(axis=1)
    ratios = h_t / inradius
    rho1 = float(np.max(mesh.diameters[mesh.subtri_cell] / h_t))
    return MeshDiagnostics(h=mesh.h, min_area=float(mesh.areas.min()),
                           shape_ratios=ratios, rho1=rho1)
