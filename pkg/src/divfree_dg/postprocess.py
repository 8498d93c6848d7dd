"""Error norms, observed convergence orders and field export."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .assembly import default_exactness
from .errors import InputDataError, UsageError
from .quadrature import cell_rules, edge_rules

NORMS = ("l2", "h1", "star", "diamond", "energy")


@dataclass(frozen=True)
class NormReport:
    l2: float
    h1_semi: float
    star: float
    diamond: float
    energy: float

    def as_dict(self):
        return asdict(self)

    def by_name(self, name):
        return self.h1_semi if name == "h1" else getattr(self, name)


def error_norms(field, spec, exactness=None):
    """Norms of ``u - u_h`` for the exact velocity in ``spec``.

    ``star`` weighs the full tensor jump by ``1 / h_e``, ``diamond`` the normal
    jump by ``1 / h_e**(m + 1)``; boundary edges use ``g`` as the outer trace.
    """
    if not spec.has_exact:
        raise UsageError("error norms need the exact velocity and its gradient", module="postprocess")
    mesh = field.mesh
    m = field.degree
    q = default_exactness(m) if exactness is None else exactness
    pts, w, owner = cell_rules(mesh, q)
    uh, guh = field.values(owner, pts, grad=True)
    e = spec.exact_u(pts) - uh
    ge = spec.exact_grad(pts) - guh
    l2 = math.sqrt(float(np.sum(w * np.sum(e * e, axis=1))))
    h1 = math.sqrt(float(np.sum(w * np.sum(ge * ge, axis=(1, 2)))))

    star2 = 0.0
    diamond2 = 0.0
    ie = mesh.interior_edges
    if len(ie):
        epts, ew = edge_rules(mesh, q, ie)
        L, R = mesh.edge_cells[ie, 0], mesh.edge_cells[ie, 1]
        nq = epts.shape[1]
        flat = epts.reshape(-1, 2)
        jump = (field.values(np.repeat(L, nq), flat) - field.values(np.repeat(R, nq), flat)).reshape(len(ie), nq, 2)
        star2 += _edge_sum(jump, ew, mesh.edge_lengths[ie], mesh.edge_normals[ie], m)[0]
        diamond2 += _edge_sum(jump, ew, mesh.edge_lengths[ie], mesh.edge_normals[ie], m)[1]
    be = mesh.boundary_edges
    epts, ew = edge_rules(mesh, q, be)
    nq = epts.shape[1]
    flat = epts.reshape(-1, 2)
    trace = (spec.g(flat) - field.values(np.repeat(mesh.edge_cells[be, 0], nq), flat)).reshape(len(be), nq, 2)
    s, d = _edge_sum(trace, ew, mesh.edge_lengths[be], mesh.edge_normals[be], m)
    star2 += s
    diamond2 += d
    star, diamond = math.sqrt(star2), math.sqrt(diamond2)
    energy = math.sqrt(h1 * h1 + star2 + diamond2)
    return NormReport(l2=l2, h1_semi=h1, star=star, diamond=diamond, energy=energy)


def _edge_sum(jump, w, h, n, m):
    # |[[v (x) n]]|^2 = |v+ - v-|^2 for unit n
    full = np.sum(w * np.sum(jump * jump, axis=2), axis=1)
    normal = np.sum(w * np.einsum("eqc,ec->eq", jump, n) ** 2, axis=1)
    return float(np.sum(full / h)), float(np.sum(normal / h ** (m + 1)))


# -- convergence tables -----------------------------------------------------

EXACT = "exact"


@dataclass
class ConvergenceTable:
    """Rows of ``h`` and per-norm errors; ``orders[i][norm]`` compares rows i-1 and i."""

    h: list
    errors: list
    orders: list

    CSV_HEADER = ("h", "l2", "l2_order", "h1", "h1_order", "star", "star_order",
                  "diamond", "diamond_order", "energy", "energy_order")

    def rows(self):
        out = []
        for h, err, order in zip(self.h, self.errors, self.orders):
            row = {"h": h}
            for name in NORMS:
                row[name] = err[name]
                row[f"{name}_order"] = order.get(name) if order else None
            out.append(row)
        return out

    def mean_order(self, norm):
        vals = [o[norm] for o in self.orders[1:] if not isinstance(o[norm], str)]
        return float(np.mean(vals)) if vals else math.nan

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_HEADER)
            for row in self.rows():
                writer.writerow([_fmt(row[k]) for k in self.CSV_HEADER])

    def summary(self):
        lines = ["     h    " + "".join(f"{n:>12} {'order':>6}" for n in NORMS)]
        for row in self.rows():
            cells = "".join(f"{row[n]:12.4e} {_fmt_order(row[n + '_order']):>6}" for n in NORMS)
            lines.append(f"{row['h']:9.3e} {cells}")
        return "\n".join(lines)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def _fmt_order(v):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return f"{v:.2f}"


def observed_orders(hs, errors, exact_floor=1e-9):
    """Orders ``log(e_prev / e_curr) / log(h_prev / h_curr)`` between consecutive rows.

    ``errors`` is a list of mappings norm -> error (or :class:`NormReport`).
    A pair whose current error is at or below ``exact_floor`` is marked
    ``"exact"`` instead of a number.
    """
    if len(hs) != len(errors):
        raise UsageError("one error row per mesh size is required", module="postprocess")
    if len(hs) < 2:
        raise UsageError("at least two rows are needed for an order", module="postprocess")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise InputDataError("mesh sizes must be strictly decreasing", module="postprocess")
    errs = [e.as_dict() if isinstance(e, NormReport) else dict(e) for e in errors]
    errs = [{("h1" if k == "h1_semi" else k): v for k, v in e.items()} for e in errs]
    orders = [{}]
    for i in range(1, len(hs)):
        row = {}
        for name in errs[i]:
            e0, e1 = errs[i - 1][name], errs[i][name]
            if e1 <= exact_floor or e0 <= exact_floor:
                row[name] = EXACT
            else:
                row[name] = math.log(e0 / e1) / math.log(hs[i - 1] / hs[i])
        orders.append(row)
    return ConvergenceTable(h=list(hs), errors=errs, orders=orders)


# -- export -------------------------------------------------------------------

def export_field(field, path, csv_path=None):
    """Legacy ASCII VTK of ``field`` on the sub-triangles of every cell.

    Each cell gets its own copy of its vertices (plus its barycenter for
    fanned polygons) so the discontinuous field is represented exactly at the
    nodes. Point data: velocity; cell data: owning cell id and ``|u|`` at the
    barycenter. ``csv_path`` additionally receives barycenter values.
    """
    mesh = field.mesh
    pts_all, cells_all, owner_pts, tri_owner = [], [], [], []
    offset = 0
    for k, c in enumerate(mesh.cells):
        xy = mesh.vertices[c]
        nv = len(c)
        if nv == 3:
            pts = xy
            tris = [(0, 1, 2)]
        else:
            pts = np.vstack([xy, mesh.barycenters[k]])
            tris = [(nv, i, (i + 1) % nv) for i in range(nv)]
        pts_all.append(pts)
        owner_pts.append(np.full(len(pts), k))
        cells_all += [tuple(offset + v for v in t) for t in tris]
        tri_owner += [k] * len(tris)
        offset += len(pts)
    P = np.vstack(pts_all)
    owner = np.concatenate(owner_pts)
    vel = field.values(owner, P)
    tri_owner = np.array(tri_owner)
    center_vals = field.cell_values()
    mag = np.linalg.norm(center_vals, axis=1)[tri_owner]
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write("divfree_dg velocity field\nASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {len(P)} double\n")
            for x, y in P:
                fh.write(f"{float(x)!r} {float(y)!r} 0.0\n")
            fh.write(f"CELLS {len(cells_all)} {4 * len(cells_all)}\n")
            for t in cells_all:
                fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
            fh.write(f"CELL_TYPES {len(cells_all)}\n")
            fh.write("5\n" * len(cells_all))
            fh.write(f"CELL_DATA {len(cells_all)}\n")
            fh.write("SCALARS cell_id int 1\nLOOKUP_TABLE default\n")
            for k in tri_owner:
                fh.write(f"{k}\n")
            fh.write("SCALARS speed double 1\nLOOKUP_TABLE default\n")
            for s in mag:
                fh.write(f"{float(s)!r}\n")
            fh.write(f"POINT_DATA {len(P)}\n")
            fh.write("VECTORS velocity double\n")
            for u, v in vel:
                fh.write(f"{float(u)!r} {float(v)!r} 0.0\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["x", "y", "u", "v"])
                for (x, y), (u, v) in zip(mesh.barycenters, center_vals):
                    writer.writerow([repr(float(x)), repr(float(y)), repr(float(u)), repr(float(v))])
    except OSError as exc:
        raise InputDataError(f"cannot write {exc.filename or path}: {exc.strerror}",
                             module="postprocess") from None
