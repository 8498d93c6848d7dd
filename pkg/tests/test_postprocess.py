import math

import numpy as np
import pytest

from divfree_dg import ProblemSpec, build_patches, build_reconstruction, build_structured_mesh
from divfree_dg import error_norms, export_field, interpolate, observed_orders
from divfree_dg.errors import InputDataError, UsageError
from divfree_dg.postprocess import ConvergenceTable
from divfree_dg.reconstruction import SolutionField

from helpers import random_global_field


@pytest.fixture(scope="module")
def op():
    mesh = build_structured_mesh("tri", 4, 4)
    return build_reconstruction(mesh, build_patches(mesh, 2), 2)


def _spec(u, grad, g=None):
    return ProblemSpec(f=None, g=u if g is None else g, exact_u=u, exact_grad=grad)


def test_exact_field_has_zero_norms(op):
    u, grad = random_global_field(2, 0)
    norms = error_norms(interpolate(op, u), _spec(u, grad))
    assert max(norms.as_dict().values()) <= 1e-9


def test_zero_field_against_constant(op):
    u = lambda x: np.tile([1.0, 0.0], (len(x), 1))
    grad = lambda x: np.zeros((len(x), 2, 2))
    norms = error_norms(SolutionField(op, np.zeros(op.n_dofs)), _spec(u, grad))
    assert norms.l2 == pytest.approx(1.0, rel=1e-12)
    assert norms.h1_semi == 0.0


def test_continuous_field_has_no_jump_terms(op):
    w, grad = random_global_field(2, 1)
    shifted = lambda x: w(x) + [0.25, 0.0]
    norms = error_norms(interpolate(op, w), _spec(shifted, grad, g=w))
    assert norms.star <= 1e-10 and norms.diamond <= 1e-10
    assert norms.l2 == pytest.approx(0.25, rel=1e-9)


def test_pythagoras_and_homogeneity(op):
    u, grad = random_global_field(2, 2)
    spec = _spec(u, grad)
    base = interpolate(op, u).dofs
    delta = np.random.default_rng(3).normal(size=op.n_dofs)
    n1 = error_norms(SolutionField(op, base + delta), spec)
    assert n1.energy ** 2 == pytest.approx(n1.h1_semi ** 2 + n1.star ** 2 + n1.diamond ** 2, rel=1e-12)
    for s in (-0.5, 3.0):
        ns = error_norms(SolutionField(op, base + s * delta), spec)
        for name, val in ns.as_dict().items():
            assert val == pytest.approx(abs(s) * getattr(n1, name), rel=1e-8)


def test_missing_exact_solution(op):
    with pytest.raises(UsageError):
        error_norms(SolutionField(op, np.zeros(op.n_dofs)), ProblemSpec(f=None, g=None))


# -- orders -----------------------------------------------------------------------

def test_order_two():
    t = observed_orders([0.1, 0.05], [{"l2": 1e-2}, {"l2": 2.5e-3}])
    assert t.orders[1]["l2"] == pytest.approx(2.0, abs=1e-12)
    assert t.orders[0] == {}


def test_order_zero():
    t = observed_orders([0.1, 0.05], [{"l2": 3e-3}, {"l2": 3e-3}])
    assert t.orders[1]["l2"] == 0.0


def test_order_of_reference_errors():
    t = observed_orders([5e-2, 2.5e-2], [{"l2": 2.88e-3}, {"l2": 6.79e-4}])
    assert round(t.orders[1]["l2"], 2) == 2.08


def test_exact_marking(tmp_path):
    t = observed_orders([0.2, 0.1, 0.05], [{"l2": 1e-13}, {"l2": 2e-14}, {"l2": 3e-14}])
    assert t.orders[1]["l2"] == "exact" and t.orders[2]["l2"] == "exact"
    assert math.isnan(t.mean_order("l2"))


def test_order_input_checks():
    with pytest.raises(UsageError):
        observed_orders([0.1], [{"l2": 1.0}])
    with pytest.raises(InputDataError):
        observed_orders([0.1, 0.2], [{"l2": 1.0}, {"l2": 0.5}])


def test_table_csv(tmp_path):
    rows = [{n: 2.0 ** -k for n in ("l2", "h1", "star", "diamond", "energy")} for k in range(3)]
    t = observed_orders([0.4, 0.2, 0.1], rows)
    path = tmp_path / "t.csv"
    t.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(ConvergenceTable.CSV_HEADER)
    assert lines[1].split(",")[2] == ""
    assert float(lines[2].split(",")[2]) == pytest.approx(1.0)
    assert t.mean_order("energy") == pytest.approx(1.0)
    assert "order" in t.summary()


# -- export -----------------------------------------------------------------------

class _LinearField:
    """Minimal field stand-in: u(x, y) = (x, -y) on every cell."""

    def __init__(self, mesh, scale=1.0):
        self.mesh = mesh
        self.scale = scale

    def values(self, cells, pts):
        pts = np.asarray(pts, float)
        return self.scale * np.column_stack([pts[:, 0], -pts[:, 1]])

    def cell_values(self):
        return self.values(None, self.mesh.barycenters)


def _vtk_section(lines, key):
    i = next(k for k, l in enumerate(lines) if l.startswith(key))
    word = lines[i].split()[1]
    return i, int(word) if word.isdigit() else None


def test_vtk_two_triangles(two_triangles, tmp_path):
    path = tmp_path / "f.vtk"
    export_field(_LinearField(two_triangles), path, tmp_path / "f.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    i, npts = _vtk_section(lines, "POINTS")
    assert npts == 6
    _, ncells = _vtk_section(lines, "CELLS")
    assert ncells == 2
    j, _ = _vtk_section(lines, "VECTORS")
    vel = np.array([[float(v) for v in l.split()] for l in lines[j + 1:j + 7]])
    pts = np.array([[float(v) for v in l.split()] for l in lines[i + 1:i + 7]])
    assert len(vel) == 6
    np.testing.assert_allclose(vel[:, :2], np.column_stack([pts[:, 0], -pts[:, 1]]))
    csv_lines = (tmp_path / "f.csv").read_text().splitlines()
    assert csv_lines[0] == "x,y,u,v" and len(csv_lines) == 3


def test_vtk_zero_field(op, tmp_path):
    path = tmp_path / "z.vtk"
    export_field(SolutionField(op, np.zeros(op.n_dofs)), path)
    lines = path.read_text().splitlines()
    j, _ = _vtk_section(lines, "VECTORS")
    assert all(l == "0.0 0.0 0.0" for l in lines[j + 1:])


def test_vtk_polygon_fan(cylinder_mesh, tmp_path):
    path = tmp_path / "p.vtk"
    export_field(_LinearField(cylinder_mesh), path)
    lines = path.read_text().splitlines()
    _, npts = _vtk_section(lines, "POINTS")
    _, ntri = _vtk_section(lines, "CELLS")
    sizes = np.array([len(c) for c in cylinder_mesh.cells])
    assert npts == np.sum(np.where(sizes == 3, 3, sizes + 1))
    assert ntri == np.sum(sizes) - 2 * np.sum(sizes == 3)


def test_export_io_error(two_triangles, tmp_path):
    with pytest.raises(InputDataError, match="missing"):
        export_field(_LinearField(two_triangles), tmp_path / "missing" / "f.vtk")
