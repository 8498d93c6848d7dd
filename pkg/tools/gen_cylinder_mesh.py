"""Generate the polygonal mesh for the channel-past-a-cylinder benchmark.

Centroidal Voronoi cells of ``[0, 1.5] x [0, 1]`` minus the disk of radius
0.2 centred at (0.5, 0.5): random seeds, Voronoi diagram with the seeds
mirrored far outside so every region is bounded, regions clipped to the
domain, then Lloyd iterations. The circle is a regular polygon. Edges much
shorter than the median are collapsed afterwards, since the normal-jump
penalty scales like a negative power of the edge length. Writes
poly-json with boundary tags 1 bottom, 2 right, 3 top, 4 left, 5 cylinder.

    python tools/gen_cylinder_mesh.py [--cells 300] [--out path]
"""
import argparse
import pathlib

import numpy as np
from scipy.spatial import Voronoi
from shapely.geometry import Point, Polygon, box

from divfree_dg.mesh import PolyMesh, write_poly_json

LENGTH, HEIGHT = 1.5, 1.0
CENTER, RADIUS = (0.5, 0.5), 0.2
OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "divfree_dg" / "data" / "meshes" / "cylinder.json"


def domain(segments):
    hole = Point(*CENTER).buffer(RADIUS, quad_segs=segments // 4)
    return box(0.0, 0.0, LENGTH, HEIGHT).difference(hole)


def random_seeds(dom, n, rng):
    pts = []
    while len(pts) < n:
        p = rng.uniform((0, 0), (LENGTH, HEIGHT))
        if dom.contains(Point(p)):
            pts.append(p)
    return np.array(pts)


def clipped_cells(seeds, dom):
    far = 10.0 * max(LENGTH, HEIGHT)
    ghosts = np.array([[-far, -far], [-far, far], [far, -far], [far, far]])
    vor = Voronoi(np.vstack([seeds, ghosts]))
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        assert -1 not in region
        poly = Polygon(vor.vertices[region]).intersection(dom)
        if poly.geom_type != "Polygon":
            # keep the piece holding the seed; the next Lloyd step usually heals this
            poly = max(poly.geoms, key=lambda g: g.area)
        cells.append(poly)
    return cells


def lloyd(seeds, dom, iterations):
    for _ in range(iterations):
        cells = clipped_cells(seeds, dom)
        seeds = np.array([c.centroid.coords[0] for c in cells])
    return clipped_cells(seeds, dom)


def to_mesh(cells, digits=12):
    index, verts, out = {}, [], []
    for c in cells:
        ring = np.round(np.asarray(c.exterior.coords)[:-1], digits)
        if Polygon(ring).exterior.is_ccw is False:
            ring = ring[::-1]
        ids = []
        for x, y in ring:
            key = (float(x), float(y))
            if key not in index:
                index[key] = len(verts)
                verts.append(key)
            if not ids or ids[-1] != index[key]:
                ids.append(index[key])
        if ids[0] == ids[-1]:
            ids.pop()
        out.append(ids)
    return PolyMesh(np.array(verts), out, boundary_tags=None)


def collapse_short_edges(mesh, fraction=0.2, tol=1e-9):
    """Merge endpoints of edges shorter than ``fraction`` of the median length.

    Rectangle corners win, then boundary vertices, then the vertex shared by
    more cells; two interior vertices merge at their midpoint.
    """
    verts = mesh.vertices.copy()
    cells = [list(c) for c in mesh.cells]
    x, y = verts[:, 0], verts[:, 1]
    corner = ((np.abs(x) < tol) | (np.abs(x - LENGTH) < tol)) & ((np.abs(y) < tol) | (np.abs(y - HEIGHT) < tol))
    on_boundary = np.zeros(len(verts), bool)
    on_boundary[mesh.edges[mesh.boundary_edges].ravel()] = True
    valence = np.bincount(np.concatenate(mesh.cells), minlength=len(verts))
    rank = 4 * corner + 2 * on_boundary + (valence > 1)
    limit = fraction * np.median(mesh.edge_lengths)
    target = np.arange(len(verts))
    for e in np.argsort(mesh.edge_lengths):
        if mesh.edge_lengths[e] >= limit:
            break
        a, b = (int(target[v]) for v in mesh.edges[e])
        if a == b:
            continue
        if rank[b] > rank[a]:
            a, b = b, a
        if rank[a] == rank[b] and not on_boundary[a]:
            verts[a] = 0.5 * (verts[a] + verts[b])
        target[target == b] = a
    out = []
    for c in cells:
        ids = [int(target[v]) for v in c]
        ids = [v for i, v in enumerate(ids) if v != ids[i - 1]]
        out.append(ids)
    used = np.unique(np.concatenate(out))
    renum = -np.ones(len(verts), int)
    renum[used] = np.arange(len(used))
    return PolyMesh(verts[used], [renum[c] for c in out])


def tag_boundary(mesh, tol=1e-9):
    tags = {}
    for e in mesh.boundary_edges:
        x, y = mesh.vertices[mesh.edges[e]].mean(axis=0)
        sides = (abs(y) < tol, abs(x - LENGTH) < tol, abs(y - HEIGHT) < tol, abs(x) < tol, True)
        tags[tuple(int(v) for v in mesh.edges[e])] = sides.index(True) + 1
    return PolyMesh(mesh.vertices, mesh.cells, boundary_tags=tags)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cells", type=int, default=300)
    parser.add_argument("--segments", type=int, default=64, help="polygon sides of the circle")
    parser.add_argument("--lloyd", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=pathlib.Path, default=OUT)
    args = parser.parse_args(argv)
    dom = domain(args.segments)
    seeds = random_seeds(dom, args.cells, np.random.default_rng(args.seed))
    mesh = tag_boundary(collapse_short_edges(to_mesh(lloyd(seeds, dom, args.lloyd))))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_poly_json(mesh, args.out)
    sizes = np.bincount([len(c) for c in mesh.cells])
    print(f"{mesh.n_cells} cells, {len(mesh.vertices)} vertices, h = {mesh.h:.4f}, "
          f"vertices per cell {dict((k, int(v)) for k, v in enumerate(sizes) if v)}")


if __name__ == "__main__":
    main()
