import math

import numpy as np
import pytest

from divfree_dg import build_patches, build_structured_mesh, default_patch_size
from divfree_dg.errors import PatchError
from divfree_dg.patching import (build_patch, evaluation_matrix, grow_by_ring, min_patch_size,
                                 patch_diagnostics, support_map)


@pytest.mark.parametrize("m,size", [(1, 6), (2, 8), (3, 10), (4, 13)])
def test_default_patch_size(m, size):
    assert default_patch_size(m) == size


def test_min_patch_size_cubic_case():
    assert min_patch_size(3) == 7


def test_target_one_is_owner(tri8):
    p = build_patch(tri8, 5, 1)
    assert p.members == (5,)
    assert p.diameter == pytest.approx(tri8.diameters[5])


def test_quad_von_neumann_neighbours(quad8):
    owner = 3 * 8 + 3
    p = build_patch(quad8, owner, 5)
    assert set(p.members) == {owner, owner - 1, owner + 1, owner - 8, owner + 8}


def test_patch_size_ten(tri8):
    p = build_patch(tri8, 40, 10)
    assert p.size == 10 and len(p.nodes) == 10


@pytest.mark.parametrize("mesh_name", ["tri8", "quad8", "cylinder_mesh"])
def test_patch_invariants(mesh_name, request):
    mesh = request.getfixturevalue(mesh_name)
    for k in range(0, mesh.n_cells, 7):
        p = build_patch(mesh, k, 10)
        assert p.members[0] == k and len(set(p.members)) == p.size
        np.testing.assert_array_equal(p.nodes, mesh.barycenters[list(p.members)])
        assert p.diameter >= mesh.diameters[k]
        # connected through members
        reached, stack = {k}, [k]
        while stack:
            c = stack.pop()
            for nb in mesh.neighbors[c]:
                if nb in p.members and nb not in reached:
                    reached.add(nb)
                    stack.append(nb)
        assert reached == set(p.members)


def test_monotone_and_deterministic(cylinder_mesh):
    for n in range(1, 15):
        a = build_patch(cylinder_mesh, 17, n)
        b = build_patch(cylinder_mesh, 17, n + 1)
        assert set(a.members) <= set(b.members)
        assert build_patch(cylinder_mesh, 17, n).members == a.members


def test_target_too_large(two_triangles):
    with pytest.raises(PatchError, match="short by 1"):
        build_patch(two_triangles, 0, 3)


def test_grow_by_ring(quad8):
    p = build_patch(quad8, 27, 1)
    q = grow_by_ring(quad8, p)
    assert q.size == 5


def test_collinear_nodes_rank_deficient():
    # a 1 x 3 strip: barycenters on the line y = 0.5
    mesh = build_structured_mesh("quad", 3, 1, (0, 0, 3, 1))
    p = build_patch(mesh, 1, 3)
    d = patch_diagnostics(mesh, p, 1)
    assert not d.rank_ok
    # explicit null vector: curl of (y - 0.5)^2 / 2 = (y - 0.5, 0) vanishes on the line
    A = evaluation_matrix(1, p.nodes, p.center, p.scale)
    assert np.linalg.matrix_rank(A, tol=1e-10 * np.abs(A).max()) < A.shape[1]


def test_too_few_nodes_rank_deficient(tri8):
    p = build_patch(tri8, 20, 2)
    assert not patch_diagnostics(tri8, p, 2).rank_ok


def test_cubic_ten_cell_patch_unisolvent(tri8):
    p = build_patch(tri8, 40, 10)
    d = patch_diagnostics(tri8, p, 3)
    assert d.rank_ok
    assert 1.0 <= d.lambda_est < math.inf


def test_evaluation_matrix_layout(tri8):
    p = build_patch(tri8, 40, 10)
    A = evaluation_matrix(3, p.nodes, p.center, p.scale)
    assert A.shape == (20, 14)
    # constant generators: first column (1,0) -> ones then zeros
    np.testing.assert_allclose(A[:, 0] * p.scale, np.r_[np.ones(10), np.zeros(10)])


def test_auto_grow_gives_up_on_collinear_strip():
    mesh = build_structured_mesh("quad", 6, 1, (0, 0, 6, 1))
    with pytest.raises(PatchError):
        build_patches(mesh, 1, target_size=3, auto_grow=False)
    # every node set on the strip is collinear, so growing cannot help either
    with pytest.raises(PatchError, match="not unisolvent|connected component"):
        build_patches(mesh, 1, target_size=3)


def test_auto_grow_succeeds(quad8):
    # 4 nodes cannot determine the 9 coefficients of S_2, so every patch grows
    patches = build_patches(quad8, 2, target_size=4)
    assert min(p.size for p in patches) > 4
    assert all(patch_diagnostics(quad8, p, 2).rank_ok for p in patches)


def test_support_map_transpose(cylinder_mesh):
    patches = build_patches(cylinder_mesh, 2)
    sup = support_map(patches)
    pairs = {(c, p.owner) for p in patches for c in p.members}
    assert pairs == {(k, o) for k, owners in enumerate(sup) for o in owners}
