"""Divergence-free vector polynomials on a shifted and scaled frame.

Every generator is the curl of a scaled monomial,

    psi(x, y) = X**i * Y**j,   X = (x - cx) / s,  Y = (y - cy) / s,
    curl psi  = (d psi / dy, -d psi / dx),

with ``1 <= i + j <= m + 1``, so divergence vanishes identically.
"""
from __future__ import annotations

import numpy as np


def dim_solenoidal(m):
    """Dimension of the degree-``m`` solenoidal space, ``(m + 1)(m + 4) / 2``."""
    if m < 0:
        raise ValueError("degree must be non-negative")
    return (m + 1) * (m + 4) // 2


def exponents(m):
    """Stream-function exponents ``(i, j)``, by total degree then ascending ``i``."""
    return [(i, k - i) for k in range(1, m + 2) for i in range(k + 1)]


def _powers(t, n):
    out = np.empty(t.shape + (n + 1,))
    out[..., 0] = 1.0
    for p in range(1, n + 1):
        out[..., p] = out[..., p - 1] * t
    return out


def evaluate(m, points, centers, scales, grad=False):
    """Generator values (and Jacobians) at ``points``.

    ``centers`` and ``scales`` broadcast against ``points[..., 0]``, so every
    point can carry its own frame. Returns an array of shape ``(..., dim, 2)``;
    with ``grad=True`` also ``(..., dim, 2, 2)`` where ``[..., a, b]`` is
    ``d u_a / d x_b``.
    """
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    scales = np.asarray(scales, dtype=float)
    X = (points[..., 0] - centers[..., 0]) / scales
    Y = (points[..., 1] - centers[..., 1]) / scales
    ij = np.array(exponents(m))
    i, j = ij[:, 0], ij[:, 1]
    PX = _powers(X, m + 1)
    PY = _powers(Y, m + 1)
    inv_s = (1.0 / scales)[..., None]

    def mono(a, b):
        # X**a * Y**b with negative exponents clipped (their coefficients are zero)
        return PX[..., np.maximum(a, 0)] * PY[..., np.maximum(b, 0)]

    vals = np.empty(X.shape + (len(i), 2))
    vals[..., 0] = j * mono(i, j - 1) * inv_s
    vals[..., 1] = -i * mono(i - 1, j) * inv_s
    if not grad:
        return vals
    inv_s2 = inv_s * inv_s
    jac = np.empty(X.shape + (len(i), 2, 2))
    mixed = i * j * mono(i - 1, j - 1) * inv_s2
    jac[..., 0, 0] = mixed
    jac[..., 0, 1] = j * (j - 1) * mono(i, j - 2) * inv_s2
    jac[..., 1, 0] = -i * (i - 1) * mono(i - 2, j) * inv_s2
    jac[..., 1, 1] = -mixed
    return vals, jac


class SolenoidalBasis:
    """The degree-``m`` solenoidal generators on the frame ``(center, scale)``."""

    def __init__(self, degree, center=(0.0, 0.0), scale=1.0):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        if not scale > 0:
            raise ValueError("frame scale must be positive")
        self.degree = int(degree)
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)

    @property
    def dim(self):
        return dim_solenoidal(self.degree)

    @property
    def exponents(self):
        return exponents(self.degree)

    def eval(self, points):
        """Values, shape ``(dim, 2)`` for one point or ``(n, dim, 2)``."""
        return evaluate(self.degree, points, self.center, self.scale)

    def eval_grad(self, points):
        """Jacobians, shape ``(dim, 2, 2)`` for one point or ``(n, dim, 2, 2)``."""
        return evaluate(self.degree, points, self.center, self.scale, grad=True)[1]

    def describe(self):
        """Human-readable generator list, e.g. ``curl(x^1 y^1) = (x, -y)``."""
        out = []
        for i, j in self.exponents:
            out.append(f"curl(x^{i} y^{j}) = ({_term(j, i, j - 1)}, {_term(-i, i - 1, j)})")
        return out


def _term(c, a, b):
    if c == 0:
        return "0"
    parts = []
    if a > 0:
        parts.append("x" if a == 1 else f"x^{a}")
    if b > 0:
        parts.append("y" if b == 1 else f"y^{b}")
    mono = "*".join(parts)
    if not mono:
        return str(c)
    if c == 1:
        return mono
    if c == -1:
        return "-" + mono
    return f"{c}*{mono}"
