"""Built-in Stokes problems."""
from __future__ import annotations

import numpy as np

from .assembly import ProblemSpec

TWO_PI = 2.0 * np.pi


def example1():
    """Smooth manufactured solution on the unit square, ``p = x^2 + y^2``."""

    def u(x):
        s1, c1 = np.sin(TWO_PI * x[:, 0]), np.cos(TWO_PI * x[:, 0])
        s2, c2 = np.sin(TWO_PI * x[:, 1]), np.cos(TWO_PI * x[:, 1])
        return np.column_stack([s1 * c2, -c1 * s2])

    def grad(x):
        s1, c1 = np.sin(TWO_PI * x[:, 0]), np.cos(TWO_PI * x[:, 0])
        s2, c2 = np.sin(TWO_PI * x[:, 1]), np.cos(TWO_PI * x[:, 1])
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = TWO_PI * c1 * c2
        out[:, 0, 1] = -TWO_PI * s1 * s2
        out[:, 1, 0] = TWO_PI * s1 * s2
        out[:, 1, 1] = -TWO_PI * c1 * c2
        return out

    def p(x):
        return x[:, 0] ** 2 + x[:, 1] ** 2

    def f(x):
        # -lap u = 8 pi^2 u, grad p = (2x, 2y)
        return 2.0 * TWO_PI ** 2 * u(x) + 2.0 * x

    return ProblemSpec(f=f, g=u, exact_u=u, exact_grad=grad, exact_p=p, name="example1")


def polynomial_exact():
    """Affine solenoidal velocity with zero pressure; lies in every S_m, m >= 1."""
    A = np.array([[1.0, 2.0], [3.0, -1.0]])
    b = np.array([0.5, -0.3])

    def u(x):
        return x @ A.T + b

    def grad(x):
        return np.broadcast_to(A, (len(x), 2, 2)).copy()

    def zero_vec(x):
        return np.zeros((len(x), 2))

    def p(x):
        return np.zeros(len(x))

    return ProblemSpec(f=zero_vec, g=u, exact_u=u, exact_grad=grad, exact_p=p, name="polynomial-exact")


CAVITY_BBOX = (0.0, 0.0, 1.0, 1.5)


def cavity(width=1.0, height=1.5):
    """Lid-driven cavity ``[0, width] x [0, height]``: unit tangential lid, no slip elsewhere."""
    tol = 1e-9 * max(width, height)

    def g(x):
        out = np.zeros((len(x), 2))
        lid = (np.abs(x[:, 1] - height) < tol) & (x[:, 0] > 0.0) & (x[:, 0] < width)
        out[lid, 0] = 1.0
        return out

    def f(x):
        return np.zeros((len(x), 2))

    return ProblemSpec(f=f, g=g, name="cavity")


CYLINDER_BOX = (0.0, 0.0, 1.5, 1.0)
CYLINDER_CENTER = (0.5, 0.5)
CYLINDER_RADIUS = 0.2


def cylinder(length=1.5):
    """Channel flow past a cylinder: parabolic profile on both vertical sides."""
    tol = 1e-9

    def g(x):
        out = np.zeros((len(x), 2))
        side = ((np.abs(x[:, 0]) < tol) | (np.abs(x[:, 0] - length) < tol)) & (x[:, 1] > 0) & (x[:, 1] < 1)
        y = x[side, 1]
        out[side, 0] = y * (1.0 - y)
        return out

    def f(x):
        return np.zeros((len(x), 2))

    return ProblemSpec(f=f, g=g, name="cylinder")


PROBLEMS = {
    "example1": example1,
    "polynomial-exact": polynomial_exact,
    "cavity": cavity,
    "cylinder": cylinder,
}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
