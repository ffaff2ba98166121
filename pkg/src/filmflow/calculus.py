"""Bulk and tangential differential operators over expression fields.

Bulk operators (grad, div, strain, material derivative) act symbolically and
return fields. Tangential operators come in two flavors:

* numeric: evaluated at chart nodes ``(u, v, t)``, projecting exact ambient
  derivatives with the chart normal;
* symbolic (``*_field``): built with the chart's ambient unit-normal
  extension, producing fields that restrict correctly on the surface and can
  be differentiated again (needed for divergences of surface stresses).

Tangential derivatives only see values on the surface, so any smooth normal
extension yields the same result there.
"""
from __future__ import annotations

import numpy as np

from .expr import ScalarField, VectorField


class TensorField:
    """A 3x3 matrix of scalar fields (velocity gradients, strains, stresses)."""

    __slots__ = ("rows",)

    def __init__(self, rows):
        self.rows = tuple(tuple(ScalarField(e) for e in row) for row in rows)
        if len(self.rows) != 3 or any(len(r) != 3 for r in self.rows):
            raise ValueError("TensorField requires a 3x3 layout")

    def entry(self, i, j):
        return self.rows[i][j]

    def row(self, i):
        return VectorField(*self.rows[i])

    def transpose(self):
        return TensorField([[self.rows[j][i] for j in range(3)] for i in range(3)])

    def sym(self):
        half = ScalarField(0.5)
        return TensorField([[ (self.rows[i][j] + self.rows[j][i]) * half
                              for j in range(3)] for i in range(3)])

    def trace(self):
        return self.rows[0][0] + self.rows[1][1] + self.rows[2][2]

    def matvec(self, v):
        return VectorField(*(self.row(i).dot(v) for i in range(3)))

    def frobenius(self, other):
        total = ScalarField(0.0)
        for i in range(3):
            for j in range(3):
                total = total + self.rows[i][j] * other.rows[i][j]
        return total

    def norm_sq(self):
        return self.frobenius(self)

    def matmul(self, other):
        return TensorField([[sum((self.rows[i][k] * other.rows[k][j] for k in range(3)),
                                 start=ScalarField(0.0))
                             for j in range(3)] for i in range(3)])

    def __add__(self, other):
        return TensorField([[self.rows[i][j] + other.rows[i][j] for j in range(3)]
                            for i in range(3)])

    def __sub__(self, other):
        return TensorField([[self.rows[i][j] - other.rows[i][j] for j in range(3)]
                            for i in range(3)])

    def __mul__(self, s):
        return TensorField([[self.rows[i][j] * s for j in range(3)] for i in range(3)])

    __rmul__ = __mul__

    def at_points(self, x, t):
        return np.stack([np.stack([self.rows[i][j].at_points(x, t)
                                   for j in range(3)]) for i in range(3)])


def identity_tensor(scale=1.0):
    z = ScalarField(0.0)
    s = ScalarField(scale) if not isinstance(scale, ScalarField) else scale
    return TensorField([[s if i == j else z for j in range(3)] for i in range(3)])


def outer(u, v):
    return TensorField([[u[i] * v[j] for j in range(3)] for i in range(3)])


# ---------------------------------------------------------------------------
# bulk operators (exact, symbolic)

def grad(f):
    return VectorField(f.diff(0), f.diff(1), f.diff(2))


def div(v):
    return v[0].diff(0) + v[1].diff(1) + v[2].diff(2)


def laplacian(f):
    return div(grad(f))


def jacobian(v):
    """J[i][j] = d v_i / d x_j."""
    return TensorField([[v[i].diff(j) for j in range(3)] for i in range(3)])


def strain_bulk(v):
    """Symmetric part of the velocity gradient."""
    return jacobian(v).sym()


def div_tensor(T):
    """Row-wise divergence: component i is sum_j d T_ij / d x_j."""
    return VectorField(*(sum((T.entry(i, j).diff(j) for j in range(3)),
                             start=ScalarField(0.0)) for i in range(3)))


def material_derivative(f, v):
    """D_t f = df/dt + (v . grad) f, for scalar or vector f."""
    if isinstance(f, VectorField):
        return VectorField(*(material_derivative(c, v) for c in f))
    out = f.dt()
    for i in range(3):
        out = out + v[i] * f.diff(i)
    return out


# ---------------------------------------------------------------------------
# tangential operators, numeric at chart nodes

def _gradient_at(f, x, t):
    return np.stack([f.diff(i).at_points(x, t) for i in range(3)])


def _jacobian_at(v, x, t):
    return np.stack([np.stack([v[i].diff(j).at_points(x, t) for j in range(3)])
                     for i in range(3)])


def tangential_grad(f, chart, u, v, t):
    """grad_G f = P grad f at the chart nodes; shape (3, K)."""
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    g = _gradient_at(f, x, t)
    return g - n * np.einsum("ik,ik->k", n, g)


def surface_divergence(V, chart, u, v, t):
    """div_G V = sum_j (d_j V_j - n_j (n . grad) V_j) at the chart nodes."""
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    J = _jacobian_at(V, x, t)
    return np.einsum("iik->k", J) - np.einsum("ik,ijk,jk->k", n, J, n)


def surface_gradient_matrix(V, chart, u, v, t):
    """Tangential Jacobian, entries d_j^G V_i; equals J P at each node."""
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    J = _jacobian_at(V, x, t)
    P = projection_matrices(n)
    return np.einsum("ilk,ljk->ijk", J, P)


def projection_matrices(n):
    """P = I - n (x) n for a batch of unit normals with shape (3, K)."""
    eye = np.eye(3)[:, :, None]
    return eye - np.einsum("ik,jk->ijk", n, n)


def strain_surface(vel, chart, u, v, t):
    """Surface strain P sym(grad v) P at the chart nodes; shape (3, 3, K).

    Agrees with the tangential-Jacobian form P (grad_G v + grad_G v^T) P / 2.
    """
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    J = _jacobian_at(vel, x, t)
    S = 0.5 * (J + np.swapaxes(J, 0, 1))
    P = projection_matrices(n)
    return np.einsum("ilk,lmk,mjk->ijk", P, S, P)


def normal_time_derivative(f, v_s, chart, u, v, t):
    """D_t^N f = df/dt + (v_s . n)(n . grad) f at the chart nodes."""
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    ft = f.dt().at_points(x, t)
    g = _gradient_at(f, x, t)
    vs = v_s.at_points(x, t)
    return ft + np.einsum("ik,ik->k", vs, n) * np.einsum("ik,ik->k", n, g)


def surface_div_tensor(T, chart, u, v, t):
    """Row-wise tangential divergence of a tensor field at the chart nodes."""
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    dT = np.stack([np.stack([_gradient_at(T.entry(i, j), x, t) for j in range(3)])
                   for i in range(3)])  # dT[i, j, k, node] = d_k T_ij
    straight = np.einsum("ijjk->ik", dT)
    correction = np.einsum("jk,ijlk,lk->ik", n, dT, n)
    return straight - correction


# ---------------------------------------------------------------------------
# tangential operators, symbolic via the chart's ambient normal extension

def projection_field(chart):
    N = chart.normal_field
    one = ScalarField(1.0)
    return TensorField([[ (one if i == j else ScalarField(0.0)) - N[i] * N[j]
                          for j in range(3)] for i in range(3)])


def tangential_grad_field(f, chart):
    N = chart.normal_field
    g = grad(f)
    ng = N.dot(g)
    return VectorField(*(g[i] - N[i] * ng for i in range(3)))


def surface_divergence_field(V, chart):
    N = chart.normal_field
    J = jacobian(V)
    return J.trace() - N.dot(J.matvec(N))


def surface_gradient_matrix_field(V, chart):
    return jacobian(V).matmul(projection_field(chart))


def strain_surface_field(v, chart):
    P = projection_field(chart)
    return P.matmul(strain_bulk(v)).matmul(P)


def normal_time_derivative_field(f, v_s, chart):
    if isinstance(f, VectorField):
        return VectorField(*(normal_time_derivative_field(c, v_s, chart) for c in f))
    N = chart.normal_field
    return f.dt() + v_s.dot(N) * N.dot(grad(f))


def surface_div_tensor_field(T, chart):
    N = chart.normal_field
    comps = []
    for i in range(3):
        total = ScalarField(0.0)
        for j in range(3):
            g = grad(T.entry(i, j))
            total = total + g[j] - N[j] * N.dot(g)
        comps.append(total)
    return VectorField(*comps)
