"""Analytic moving geometries with spectral quadrature.

The closed evolving surface is star-shaped about the origin,
``x(u, v, t) = R(u, v, t) * w(u, v)`` with ``w`` the unit-sphere direction and
``(u, v) in [0, pi] x [0, 2 pi)``. The inner region, the shell between the
surface and the outer ball, and the outer boundary all inherit analytic
quadrature from that parametrization. Gauss-Legendre nodes are interior to
their intervals, so the coordinate poles are never sampled.

Each chart also carries an ambient unit-normal extension (the normalized
gradient of a level-set function), which is what makes tangential derivatives
of surface-only quantities computable by exact symbolic differentiation.
"""
from __future__ import annotations

import math

import numpy as np

from . import calculus
from .expr import (
    ScalarField,
    VectorField,
    field,
    parse,
    sqrt_f,
    variables_used,
)


class GeometryError(ValueError):
    pass


_POLE_SIN_TOL = 1e-9


def _as_nodes(u, v):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u, v = np.broadcast_arrays(u, v)
    return u.ravel(), v.ravel()


def _direction_fields():
    # unit-sphere direction written in chart coordinates (x1 = u, x2 = v)
    return VectorField("sin(x1)*cos(x2)", "sin(x1)*sin(x2)", "cos(x1)")


def _norm_field(v):
    return sqrt_f(v.dot(v))


def _unit_gradient_field(level_set):
    g = level_set.grad()
    norm = _norm_field(g)
    return VectorField(g[0] / norm, g[1] / norm, g[2] / norm)


class SurfaceChart:
    """Closed star-shaped surface with exact chart and ambient descriptions.

    Attributes
    ----------
    radial : ScalarField
        R(u, v, t) in chart coordinates (x1 = u, x2 = v).
    position : VectorField
        Chart embedding x(u, v, t).
    level_set : ScalarField
        Ambient function vanishing on the surface, negative inside.
    radial_gap : ScalarField
        Ambient ``|x| - R(direction(x), t)``; a radial coordinate relative to
        the surface, used for blending constructions.
    normal_field : VectorField
        Ambient unit outward normal extension, grad(level_set) normalized.
    """

    def __init__(self, kind, radial, position, level_set, radial_gap, params):
        self.kind = kind
        self.radial = radial
        self.position = position
        self.level_set = level_set
        self.radial_gap = radial_gap
        self.params = dict(params)
        self.normal_field = _unit_gradient_field(level_set)
        self.position_u = VectorField(*(c.diff(0) for c in position))
        self.position_v = VectorField(*(c.diff(1) for c in position))
        self.position_t = VectorField(*(c.diff(3) for c in position))
        self._cache = {}

    # -- chart evaluation ---------------------------------------------------

    def _chart_values(self, f, u, v, t):
        out = f(u, v, 0.0, t)
        if np.ndim(out) == 0:
            return np.full(np.shape(u), float(out))
        return out

    def radial_at(self, u, v, t):
        u, v = _as_nodes(u, v)
        return self._chart_values(self.radial, u, v, t)

    def point(self, u, v, t):
        u, v = _as_nodes(u, v)
        return np.stack([self._chart_values(c, u, v, t) for c in self.position])

    def tangents(self, u, v, t):
        u, v = _as_nodes(u, v)
        xu = np.stack([self._chart_values(c, u, v, t) for c in self.position_u])
        xv = np.stack([self._chart_values(c, u, v, t) for c in self.position_v])
        return xu, xv

    def area_element(self, u, v, t):
        xu, xv = self.tangents(u, v, t)
        return np.linalg.norm(np.cross(xu.T, xv.T).T, axis=0)

    def normal(self, u, v, t):
        """Outward unit normal; pole-degenerate nodes fall back to the
        ambient extension, which is regular there."""
        u, v = _as_nodes(u, v)
        xu, xv = self.tangents(u, v, t)
        c = np.cross(xu.T, xv.T).T
        norms = np.linalg.norm(c, axis=0)
        polar = np.abs(np.sin(u)) < _POLE_SIN_TOL
        if np.any(norms[~polar] == 0.0):
            raise GeometryError("chart tangents are rank-deficient away from the poles")
        safe = np.where(norms == 0.0, 1.0, norms)
        n = c / safe
        if np.any(polar):
            x = self.point(u, v, t)
            amb = self.normal_field.at_points(x, t)
            n[:, polar] = amb[:, polar]
        return n

    def projection(self, u, v, t):
        return calculus.projection_matrices(self.normal(u, v, t))

    def mean_curvature(self, u, v, t):
        """H = -div_G n, via the tangential divergence of the normal extension."""
        return -calculus.surface_divergence(self.normal_field, self, u, v, t)

    def normal_speed(self, u, v, t):
        """Velocity of the chart motion along the outward normal."""
        u, v = _as_nodes(u, v)
        xt = np.stack([self._chart_values(c, u, v, t) for c in self.position_t])
        n = self.normal(u, v, t)
        return np.einsum("ik,ik->k", xt, n)

    def min_radius(self, t, n=48):
        g = _angular_grid(n)
        return float(np.min(self.radial_at(g.u, g.v, t)))

    def max_radius(self, t, n=48):
        g = _angular_grid(n)
        return float(np.max(self.radial_at(g.u, g.v, t)))

    def validate(self, times, n=32):
        for t in times:
            if self.min_radius(t, n) <= 0.0:
                raise GeometryError(f"surface radius is not positive at t={t}")


# ---------------------------------------------------------------------------
# chart constructors

def _time_only_field(src, what):
    f = field(src)
    used = variables_used(f.expr)
    if used - {3}:
        raise GeometryError(f"{what} may depend on t only")
    return f


def sphere(radius="1"):
    """Sphere of (possibly time-dependent) radius about the origin."""
    r = _time_only_field(radius, "sphere radius")
    w = _direction_fields()
    position = VectorField(*(r * w[i] for i in range(3)))
    rho = sqrt_f(field("x1^2+x2^2+x3^2"))
    level_set = rho - r
    return SurfaceChart("sphere", r, position, level_set, level_set,
                        {"radius": radius})


def ellipsoid(a, b, c):
    """Static ellipsoid with semi-axes (a, b, c), star-shaped about the origin.

    The surface is parametrized by the standard embedding (its components are
    entire in the chart angles, which keeps quadrature spectrally sharp); the
    radial profile describing the same surface in star-shaped form is what the
    volume grids use for their radial limits.
    """
    if min(a, b, c) <= 0:
        raise GeometryError("ellipsoid semi-axes must be positive")
    w = _direction_fields()
    quad_dir = w[0] * w[0] * (1.0 / a**2) + w[1] * w[1] * (1.0 / b**2) \
        + w[2] * w[2] * (1.0 / c**2)
    radial = 1.0 / sqrt_f(quad_dir)
    position = VectorField(a * w[0], b * w[1], c * w[2])
    quad = field(f"x1^2/{a * a}+x2^2/{b * b}+x3^2/{c * c}")
    level_set = quad - 1.0
    rho = sqrt_f(field("x1^2+x2^2+x3^2"))
    radial_gap = rho * (1.0 - quad ** -0.5)
    return SurfaceChart("ellipsoid", radial, position, level_set, radial_gap,
                        {"a": a, "b": b, "c": c})


def perturbed_sphere(base="1", eps=0.1, shape="(3*x3^2-1)/2"):
    """Sphere of radius base(t) modulated by a direction-dependent profile.

    ``shape`` is an expression in (x1, x2, x3) read as the components of the
    unit direction x/|x|.
    """
    r0 = _time_only_field(base, "perturbed sphere base radius")
    shape_expr = parse(shape)
    if 3 in variables_used(shape_expr):
        raise GeometryError("shape profile may not depend on t")
    shape_f = ScalarField(shape_expr)
    w = _direction_fields()
    shape_chart = shape_f.compose({"x1": w[0], "x2": w[1], "x3": w[2]})
    radial = r0 * (1.0 + eps * shape_chart)
    position = VectorField(*(radial * w[i] for i in range(3)))
    rho = sqrt_f(field("x1^2+x2^2+x3^2"))
    shape_ambient = shape_f.compose({"x1": ScalarField("x1") / rho,
                                     "x2": ScalarField("x2") / rho,
                                     "x3": ScalarField("x3") / rho})
    radial_gap = rho - r0 * (1.0 + eps * shape_ambient)
    return SurfaceChart("perturbed_sphere", radial, position, radial_gap, radial_gap,
                        {"base": base, "eps": eps, "shape": shape})


def make_chart(kind, **params):
    if kind == "sphere":
        return sphere(**params)
    if kind == "ellipsoid":
        return ellipsoid(**params)
    if kind == "perturbed_sphere":
        return perturbed_sphere(**params)
    raise GeometryError(f"unknown surface kind '{kind}'")


# ---------------------------------------------------------------------------
# domain

class DomainConfig:
    """The concentric configuration: surface inside a ball of radius outer_radius."""

    def __init__(self, chart, outer_radius, slip=0):
        if slip not in (0, 1):
            raise GeometryError("slip flag must be 0 or 1")
        if outer_radius <= 0:
            raise GeometryError("outer radius must be positive")
        self.chart = chart
        self.outer_radius = float(outer_radius)
        self.slip = int(slip)
        self._cache = {}

    def validate(self, times, n=32):
        self.chart.validate(times, n)
        for t in times:
            if self.chart.max_radius(t, n) >= self.outer_radius:
                raise GeometryError(
                    f"surface is not strictly inside the outer ball at t={t}")


# ---------------------------------------------------------------------------
# quadrature

class _AngularGrid:
    __slots__ = ("u", "v", "wu", "wv", "w")

    def __init__(self, u, v, wu, wv):
        uu, vv = np.meshgrid(u, v, indexing="ij")
        wuu, wvv = np.meshgrid(wu, wv, indexing="ij")
        self.u = uu.ravel()
        self.v = vv.ravel()
        self.wu = wuu.ravel()
        self.wv = wvv.ravel()
        self.w = self.wu * self.wv


_angular_cache = {}


def gauss_legendre(n, a, b):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * nodes, half * weights


def _angular_grid(n, cap=None):
    key = (n, cap)
    grid = _angular_cache.get(key)
    if grid is None:
        u_max = math.pi if cap is None else float(cap)
        u, wu = gauss_legendre(n, 0.0, u_max)
        v, wv = gauss_legendre(n, 0.0, 2.0 * math.pi)
        grid = _AngularGrid(u, v, wu, wv)
        _angular_cache[key] = grid
    return grid


class SurfaceGrid:
    """Quadrature nodes on the moving surface at a fixed time."""

    __slots__ = ("u", "v", "w", "x", "n", "t")

    def __init__(self, chart, t, n, cap=None):
        g = _angular_grid(n, cap)
        self.u, self.v, self.t = g.u, g.v, float(t)
        self.x = chart.point(g.u, g.v, t)
        area = chart.area_element(g.u, g.v, t)
        self.w = g.w * area
        self.n = chart.normal(g.u, g.v, t)
        outward = np.einsum("ik,ik->k", self.n, self.x)
        if np.any(outward <= 0.0):
            raise GeometryError("normal orientation is not outward; "
                                "chart is not star-shaped about the origin")


class VolumeGrid:
    """Quadrature nodes for the inner region or the shell at a fixed time."""

    __slots__ = ("x", "w", "t", "u", "v")

    def __init__(self, config, region, t, n, cap=None):
        g = _angular_grid(n, cap)
        r_surf = config.chart.radial_at(g.u, g.v, t)
        s, ws = np.polynomial.legendre.leggauss(n)
        s = 0.5 * (s + 1.0)
        ws = 0.5 * ws
        if region == "A":
            lo = np.zeros_like(r_surf)
            hi = r_surf
        elif region == "B":
            lo = r_surf
            hi = np.full_like(r_surf, config.outer_radius)
        else:
            raise GeometryError(f"unknown volume region '{region}'")
        # radius rho = lo + s (hi - lo) along each direction
        rho = lo[None, :] + s[:, None] * (hi - lo)[None, :]
        jac = (hi - lo)[None, :] * rho**2 * np.sin(g.u)[None, :]
        w = ws[:, None] * g.w[None, :] * jac
        direction = np.stack([np.sin(g.u) * np.cos(g.v),
                              np.sin(g.u) * np.sin(g.v),
                              np.cos(g.u)])
        x = rho[None, :, :] * direction[:, None, :]
        self.x = x.reshape(3, -1)
        self.w = w.ravel()
        self.u = np.broadcast_to(g.u[None, :], rho.shape).ravel()
        self.v = np.broadcast_to(g.v[None, :], rho.shape).ravel()
        self.t = float(t)


class BoundaryGrid:
    """Quadrature nodes on the static outer sphere."""

    __slots__ = ("x", "w", "n")

    def __init__(self, config, n):
        g = _angular_grid(n)
        direction = np.stack([np.sin(g.u) * np.cos(g.v),
                              np.sin(g.u) * np.sin(g.v),
                              np.cos(g.u)])
        r = config.outer_radius
        self.x = r * direction
        self.w = g.w * r * r * np.sin(g.u)
        self.n = direction


def surface_grid(chart, t, n, cap=None):
    key = ("surface", n, float(t), cap)
    grid = chart._cache.get(key)
    if grid is None:
        grid = SurfaceGrid(chart, t, n, cap)
        chart._cache[key] = grid
    return grid


def volume_grid(config, region, t, n, cap=None):
    key = (region, n, float(t), cap)
    grid = config._cache.get(key)
    if grid is None:
        grid = VolumeGrid(config, region, t, n, cap)
        config._cache[key] = grid
    return grid


def boundary_grid(config, n):
    key = ("boundary", n)
    grid = config._cache.get(key)
    if grid is None:
        grid = BoundaryGrid(config, n)
        config._cache[key] = grid
    return grid


# ---------------------------------------------------------------------------
# integration

def _values_at(integrand, x, t):
    if hasattr(integrand, "at_points"):
        vals = integrand.at_points(x, t)
    else:
        vals = integrand(x[0], x[1], x[2], t)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 0:
        vals = np.full(x.shape[1], float(vals))
    return vals


def _checked_sum(w, vals, x, what):
    if not np.all(np.isfinite(vals)):
        k = int(np.argmin(np.isfinite(vals)))
        raise GeometryError(
            f"non-finite {what} integrand at node x="
            f"({x[0, k]:.6g}, {x[1, k]:.6g}, {x[2, k]:.6g})")
    # compensated summation: result independent of node ordering
    return math.fsum((w * vals).tolist())


def integrate_surface(chart, integrand, t, n=24, cap=None):
    grid = surface_grid(chart, t, n, cap)
    return _checked_sum(grid.w, _values_at(integrand, grid.x, t), grid.x, "surface")


def integrate_volume(config, region, integrand, t, n=24, cap=None):
    grid = volume_grid(config, region, t, n, cap)
    return _checked_sum(grid.w, _values_at(integrand, grid.x, t), grid.x,
                        f"volume({region})")


def integrate_outer_boundary(config, integrand, t, n=24):
    grid = boundary_grid(config, n)
    return _checked_sum(grid.w, _values_at(integrand, grid.x, t), grid.x, "boundary")


# module-level spec operations -----------------------------------------------

def normal(chart, u, v, t):
    return chart.normal(u, v, t)


def projection(chart, u, v, t):
    return chart.projection(u, v, t)


def mean_curvature(chart, u, v, t):
    return chart.mean_curvature(u, v, t)
