import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divfree_dg import SolenoidalBasis, dim_solenoidal
from divfree_dg.solenoidal import evaluate, exponents

coords = st.floats(-3, 3, allow_nan=False)


@pytest.mark.parametrize("m,dim", [(0, 2), (1, 5), (2, 9), (3, 14), (4, 20)])
def test_dimension(m, dim):
    assert dim_solenoidal(m) == dim
    assert SolenoidalBasis(m).dim == dim == len(exponents(m))


def test_generator_order():
    assert exponents(2) == [(0, 1), (1, 0), (0, 2), (1, 1), (2, 0), (0, 3), (1, 2), (2, 1), (3, 0)]


def test_xy_generator_at_point():
    b = SolenoidalBasis(1)
    k = b.exponents.index((1, 1))
    np.testing.assert_allclose(b.eval(np.array([2.0, 3.0]))[k], [2.0, -3.0])
    np.testing.assert_allclose(b.eval_grad(np.array([0.3, -7.0]))[k], [[1, 0], [0, -1]])


def test_values_vanish_at_center():
    b = SolenoidalBasis(3, center=(0.4, -0.2), scale=0.5)
    v = b.eval(np.array([0.4, -0.2]))
    for k, (i, j) in enumerate(b.exponents):
        if i + j >= 2:
            np.testing.assert_array_equal(v[k], 0.0)


def test_cubic_generator():
    b = SolenoidalBasis(2)
    k = b.exponents.index((3, 0))
    np.testing.assert_allclose(b.eval(np.array([1.0, 1.0]))[k], [0.0, -3.0])


def test_constant_generators_have_zero_gradient():
    g = SolenoidalBasis(3).eval_grad(np.random.default_rng(0).normal(size=(5, 2)))
    np.testing.assert_array_equal(g[:, :2], 0.0)


def test_gradient_finite_differences():
    b = SolenoidalBasis(3, center=(0.1, 0.2), scale=0.7)
    k = b.exponents.index((2, 1))
    p = np.array([0.1 + 0.7, 0.2 + 1.4])
    step = 1e-6
    fd = np.column_stack([(b.eval(p + d)[k] - b.eval(p - d)[k]) / (2 * step)
                          for d in (np.array([step, 0]), np.array([0, step]))])
    np.testing.assert_allclose(b.eval_grad(p)[k], fd, atol=1e-6)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_trace_free_random_points(m):
    pts = np.random.default_rng(m).uniform(-2, 2, size=(100, 2))
    jac = SolenoidalBasis(m, center=(0.3, 0.1), scale=1.7).eval_grad(pts)
    div = np.abs(jac[..., 0, 0] + jac[..., 1, 1])
    norm = np.linalg.norm(jac, axis=(-2, -1))
    assert np.all(div <= 1e-13 * np.maximum(norm, 1e-300))


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_linear_independence_on_unit_disk(m):
    rng = np.random.default_rng(1)
    r, t = np.sqrt(rng.uniform(size=4000)), rng.uniform(0, 2 * np.pi, 4000)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    V = SolenoidalBasis(m).eval(pts)  # (n, dim, 2)
    G = np.einsum("ndc,nec->de", V, V) / len(pts)
    assert np.linalg.eigvalsh(G).min() > 0


@settings(max_examples=50, deadline=None)
@given(px=coords, py=coords, cx=coords, cy=coords, s=st.floats(0.1, 5))
def test_frame_covariance(px, py, cx, cy, s):
    p = np.array([px, py])
    shifted = SolenoidalBasis(3, center=(cx, cy), scale=s).eval(p)
    unit = SolenoidalBasis(3).eval((p - [cx, cy]) / s)
    np.testing.assert_allclose(shifted, unit / s, rtol=1e-12, atol=1e-12)


def _listed_cubic_basis(x, y):
    one, zero = np.ones_like(x), np.zeros_like(x)
    return np.stack([
        (one, zero), (zero, one), (zero, x), (x, -y), (y, zero),
        (zero, x ** 2), (2 * x * y, -y ** 2), (x ** 2, -2 * x * y), (y ** 2, zero),
        (zero, x ** 3), (3 * x * y ** 2, -y ** 3), (x ** 2 * y, -x * y ** 2),
        (x ** 3, -3 * x ** 2 * y), (y ** 3, zero),
    ])  # (14, 2, n)


def test_span_of_cubic_generator_list():
    pts = np.random.default_rng(2).uniform(-1, 1, size=(60, 2))
    V = SolenoidalBasis(3).eval(pts)  # (n, 14, 2)
    A = V.transpose(0, 2, 1).reshape(-1, 14)
    L = _listed_cubic_basis(pts[:, 0], pts[:, 1])
    for vec in L:
        b = vec.T.reshape(-1)
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        assert np.linalg.norm(A @ coef - b) <= 1e-12 * np.linalg.norm(b)
    # and the list has full rank, so the spans coincide
    assert np.linalg.matrix_rank(L.transpose(2, 1, 0).reshape(-1, 14)) == 14


def test_batched_frames():
    pts = np.random.default_rng(3).normal(size=(4, 7, 2))
    centers = np.random.default_rng(4).normal(size=(4, 1, 2))
    scales = np.array([0.5, 1.0, 2.0, 3.0])[:, None]
    vals = evaluate(2, pts, centers, scales)
    assert vals.shape == (4, 7, 9, 2)
    ref = SolenoidalBasis(2, center=centers[2, 0], scale=2.0).eval(pts[2])
    np.testing.assert_allclose(vals[2], ref, rtol=1e-14)


def test_describe_lists_every_generator():
    lines = SolenoidalBasis(1).describe()
    assert len(lines) == 5
    assert "curl(x^1 y^1) = (x, -y)" in lines
