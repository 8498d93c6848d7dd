import numpy as np
import pytest

from divfree_dg import ProblemSpec, assemble, build_patches, build_reconstruction, build_structured_mesh
from divfree_dg import consistency_residual, get_problem, solve
from divfree_dg.assembly import compatibility_defect, default_penalties, jump_average
from divfree_dg.errors import AssemblyError, PatchError, UsageError
from divfree_dg.reconstruction import SolutionField



def zero(x):
    return np.zeros((len(x), 2))


ZERO = ProblemSpec(f=zero, g=zero)


def _op(mesh, m, size=None):
    return build_reconstruction(mesh, build_patches(mesh, m, size), m)


@pytest.fixture(scope="module")
def tri_op():
    return _op(build_structured_mesh("tri", 6, 6), 2)


# -- jump and average ---------------------------------------------------------

def test_scalar_jump():
    t = jump_average(1.0, [1.0, 0.0], 0.0)
    assert t.average == 0.5
    np.testing.assert_array_equal(t.jump, [1.0, 0.0])


def test_continuous_vector_trace():
    v = np.array([0.3, -1.2])
    n = np.array([0.6, 0.8])
    t = jump_average(v, n, v)
    assert abs(t.jump) < 1e-15
    np.testing.assert_allclose(t.jump_tensor, 0.0, atol=1e-15)
    np.testing.assert_allclose(t.average, v)


def test_boundary_convention():
    t = jump_average([2.0, 3.0], [0.0, 1.0])
    assert t.jump == 3.0
    np.testing.assert_array_equal(t.jump_tensor, [[0.0, 2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(t.average, [2.0, 3.0])


def test_batched_jumps():
    rng = np.random.default_rng(0)
    vp, vm = rng.normal(size=(2, 5, 2))
    n = rng.normal(size=(5, 2))
    t = jump_average(vp, n, vm)
    np.testing.assert_allclose(t.jump, np.sum((vp - vm) * n, axis=1))
    np.testing.assert_allclose(t.jump_tensor, np.einsum("ea,eb->eab", vp - vm, n))


# -- system structure -----------------------------------------------------------

def test_dof_count():
    mesh = build_structured_mesh("tri", 2, 2)
    system = assemble(_op(mesh, 1), ZERO)
    assert system.n_dofs == 2 * mesh.n_cells == 16
    assert system.dofs_of(1) == (2, 3)


def test_two_cells_cannot_carry_s1(two_triangles):
    # 4 nodal values for the 5 coefficients of S_1
    with pytest.raises(PatchError, match="exceeds the 2 cells|connected component"):
        _op(two_triangles, 1)


def test_zero_data_gives_zero_rhs(tri_op):
    system = assemble(tri_op, ZERO)
    assert np.array_equal(system.rhs, np.zeros(system.n_dofs))
    x, _ = solve(system)
    assert np.array_equal(x, np.zeros(system.n_dofs))


def test_symmetric_with_positive_diagonal(tri_op):
    A = assemble(tri_op, get_problem("example1")).matrix
    asym = abs(A - A.T).max()
    assert asym <= 1e-12 * abs(A).max()
    assert A.diagonal().min() > 0
    assert A.has_sorted_indices


def test_parts_add_up(tri_op):
    s = assemble(tri_op, ZERO, eta0=3.0, eps0=0.7)
    p = s.parts
    diff = s.matrix - (p["volume"] + p["consistency"] + 3.0 * p["eta"] + 0.7 * p["eps"])
    assert abs(diff).max() <= 1e-12 * abs(s.matrix).max()


def test_doubling_eta_changes_only_eta_term(tri_op):
    a = assemble(tri_op, ZERO, eta0=10.0, eps0=1.0)
    b = assemble(tri_op, ZERO, eta0=20.0, eps0=1.0)
    diff = b.matrix - a.matrix - 10.0 * a.parts["eta"]
    assert abs(diff).max() <= 1e-12 * abs(b.matrix).max()
    for key in ("volume", "consistency", "eps"):
        assert abs(a.parts[key] - b.parts[key]).max() == 0.0


def test_invalid_penalties(tri_op):
    with pytest.raises(UsageError):
        assemble(tri_op, ZERO, eta0=0.0)
    with pytest.raises(UsageError):
        assemble(tri_op, ZERO, eps0=-1.0)


def test_default_penalties():
    assert default_penalties(3) == (180.0, 0.1)


def test_nonfinite_data_names_location(tri_op):
    def bad(x):
        out = np.zeros((len(x), 2))
        out[x[:, 0] > 0.5] = np.inf
        return out

    with pytest.raises(AssemblyError, match="cell"):
        assemble(tri_op, ProblemSpec(f=bad, g=zero))
    with pytest.raises(AssemblyError, match="edge"):
        assemble(tri_op, ProblemSpec(f=zero, g=bad))


def test_workers_agree(tri_op):
    spec = get_problem("example1")
    a = assemble(tri_op, spec, workers=1)
    b = assemble(tri_op, spec, workers=4)
    assert abs(a.matrix - b.matrix).max() <= 1e-12 * abs(a.matrix).max()
    np.testing.assert_allclose(a.rhs, b.rhs, rtol=0, atol=1e-12 * abs(a.rhs).max())


# -- edge penalty against a dense quadrature oracle --------------------------------

def _brute_edge_energy(op, dofs, npts=40):
    """``sum_e h_e^-1 |[[v (x) n]]|^2`` and ``sum_e h_e^-(m+1) [[v . n]]^2`` by Gauss-Legendre."""
    mesh = op.mesh
    field = SolutionField(op, dofs)
    t, w = np.polynomial.legendre.leggauss(npts)
    t, w = 0.5 * (t + 1), 0.5 * w
    m = op.degree
    eta = eps = 0.0
    for e in range(mesh.n_edges):
        a, b = mesh.vertices[mesh.edges[e]]
        h = np.linalg.norm(b - a)
        n = mesh.edge_normals[e]
        pts = a + t[:, None] * (b - a)
        k0, k1 = mesh.edge_cells[e]
        vp = field.values(np.full(npts, k0), pts)
        vm = field.values(np.full(npts, k1), pts) if k1 >= 0 else None
        tr = jump_average(vp, np.broadcast_to(n, vp.shape), vm)
        eta += h * np.sum(w * np.sum(tr.jump_tensor ** 2, axis=(1, 2))) / h
        eps += h * np.sum(w * tr.jump ** 2) / h ** (m + 1)
    return eta, eps


@pytest.mark.parametrize("mesh_name", ["tri", "poly"])
def test_edge_penalty_matches_dense_quadrature(test_meshes, mesh_name):
    mesh = test_meshes[mesh_name]
    op = _op(mesh, 2)
    system = assemble(op, ZERO)
    for dof in (0, 7, 2 * mesh.n_cells - 1):
        v = np.zeros(op.n_dofs)
        v[dof] = 1.0
        eta, eps = _brute_edge_energy(op, v)
        assert v @ (system.parts["eta"] @ v) == pytest.approx(eta, rel=1e-10)
        assert v @ (system.parts["eps"] @ v) == pytest.approx(eps, rel=1e-10)


# -- consistency ----------------------------------------------------------------

def test_consistency_on_solenoidal_space():
    # u = curl((y^3 - x^3) / 3) = (y^2, x^2) lies in S_2; p = 0, f = -lap u
    u = lambda x: np.column_stack([x[:, 1] ** 2, x[:, 0] ** 2])
    grad = lambda x: np.stack([np.column_stack([np.zeros(len(x)), 2 * x[:, 1]]),
                               np.column_stack([2 * x[:, 0], np.zeros(len(x))])], axis=1)
    f = lambda x: np.full((len(x), 2), -2.0)
    spec = ProblemSpec(f=f, g=u, exact_u=u, exact_grad=grad, exact_p=lambda x: np.zeros(len(x)))
    system = assemble(_op(build_structured_mesh("quad", 6, 6), 2), spec)
    assert consistency_residual(system, spec) <= 1e-9


def test_consistency_with_constant_pressure():
    base = get_problem("polynomial-exact")
    spec = ProblemSpec(f=base.f, g=base.g, exact_u=base.exact_u, exact_grad=base.exact_grad,
                       exact_p=lambda x: np.full(len(x), 2.0))
    mesh = build_structured_mesh("tri", 6, 6)
    assert abs(compatibility_defect(mesh, spec)) <= 1e-12
    assert consistency_residual(assemble(_op(mesh, 1), spec), spec) <= 1e-8


def test_consistency_example1_decreases():
    spec = get_problem("example1")
    res = [consistency_residual(assemble(_op(build_structured_mesh("tri", n, n), 2), spec), spec)
           for n in (10, 20, 40)]
    assert res[0] <= 1e-7
    assert res[1] <= res[0] and res[2] <= res[1]


def test_consistency_needs_exact_pair(tri_op):
    with pytest.raises(UsageError):
        consistency_residual(assemble(tri_op, ZERO), ZERO)
