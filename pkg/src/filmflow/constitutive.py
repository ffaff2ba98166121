"""Constitutive objects: heat fluxes, energy densities, stresses, tractions.

Phase "S" lives on the moving surface; its constitutive fields are built with
the chart's ambient normal extension so they stay symbolic and can be
differentiated again. They are meaningful on the surface only.

Conventions follow the model verbatim: the viscous stress is
``mu D(v) + lambda (div v) I - pi I`` with the plain Frobenius norm in the
dissipation density (no factor 2 on the shear term), and ``mu + lambda`` is
what the model calls the dilatational viscosity. Note this differs from the
common ``2 mu / 3 + lambda`` convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from .expr import (
    ScalarField,
    VectorField,
    derivative,
    log_f,
    parse_in_vars,
    to_source,
)

PHASES = ("A", "B", "S")


class ConstitutiveError(ValueError):
    pass


# ---------------------------------------------------------------------------
# equations of state

class IdealGas:
    """e = c_v theta, pi = R rho theta, entropy = c_v log theta - R log rho.

    This choice satisfies the thermodynamic identity
    D_t e = theta D_t s - pi D_t (1/rho) exactly.
    """

    kind = "ideal"

    def __init__(self, c_v, r_gas):
        if c_v <= 0 or r_gas <= 0:
            raise ConstitutiveError("ideal gas needs c_v > 0 and r_gas > 0")
        self.c_v = float(c_v)
        self.r_gas = float(r_gas)

    def pressure(self, rho, theta):
        return self.r_gas * rho * theta

    def internal_energy(self, theta):
        return self.c_v * theta

    def entropy(self, rho, theta):
        return self.c_v * log_f(theta) - self.r_gas * log_f(rho)


class Barotropic:
    """Pressure induced by a density-only energy p(rho): Pi = rho p'(rho) - p(rho)."""

    kind = "barotropic"

    def __init__(self, p_source):
        self.source = p_source
        self.p_expr = parse_in_vars(p_source, ("rho",))
        self.dp_expr = derivative(self.p_expr, 0)

    def p_of(self, rho_field):
        return ScalarField(self.p_expr).compose({0: rho_field})

    def induced_pressure(self, rho_field):
        """Pi(rho) as a field of whatever rho is a field of."""
        if not isinstance(rho_field, ScalarField):
            rho_field = ScalarField(rho_field)
        p = ScalarField(self.p_expr).compose({0: rho_field})
        dp = ScalarField(self.dp_expr).compose({0: rho_field})
        return rho_field * dp - p

    def __repr__(self):
        return f"Barotropic({to_source(self.p_expr)!r})"


@dataclass(frozen=True)
class PhaseMaterial:
    """Per-phase parameters; mu and lam are the two viscosities, kappa the
    thermal conductivity."""

    phase: str
    mu: float = 0.0
    lam: float = 0.0
    kappa: float = 0.0
    eos: object = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConstitutiveError(f"unknown phase {self.phase!r}")
        if self.mu < 0 or self.lam < 0 or self.kappa < 0:
            raise ConstitutiveError("viscosities and conductivity must be nonnegative")


@dataclass
class PhaseState:
    """Fields of one phase. pi and e may be omitted when the EOS derives them."""

    rho: ScalarField
    v: VectorField
    theta: ScalarField = None
    pi: ScalarField = None
    e: ScalarField = None


def pressure_field(mat, state):
    if state.pi is not None:
        return state.pi
    if mat.eos is None:
        raise ConstitutiveError(f"phase {mat.phase}: no pressure field and no EOS")
    if mat.eos.kind == "ideal":
        if state.theta is None:
            raise ConstitutiveError(f"phase {mat.phase}: ideal gas needs a temperature")
        return mat.eos.pressure(state.rho, state.theta)
    return mat.eos.induced_pressure(state.rho)


def internal_energy_field(mat, state):
    if state.e is not None:
        return state.e
    if mat.eos is not None and mat.eos.kind == "ideal":
        if state.theta is None:
            raise ConstitutiveError(f"phase {mat.phase}: ideal gas needs a temperature")
        return mat.eos.internal_energy(state.theta)
    raise ConstitutiveError(f"phase {mat.phase}: no internal energy available")


def entropy_field(mat, state):
    if mat.eos is None or mat.eos.kind != "ideal":
        raise ConstitutiveError(
            f"phase {mat.phase}: entropy requires the ideal-gas model")
    return mat.eos.entropy(state.rho, state.theta)


# ---------------------------------------------------------------------------
# fluxes and energy densities

def heat_flux(mat, state, chart=None):
    """q = kappa grad theta; tangential gradient for the surface phase."""
    if state.theta is None:
        raise ConstitutiveError(f"phase {mat.phase}: heat flux needs a temperature")
    if mat.phase == "S":
        return calc.tangential_grad_field(state.theta, chart) * mat.kappa
    return calc.grad(state.theta) * mat.kappa


def dissipation_density(mat, state, chart=None):
    if mat.phase == "S":
        D = calc.strain_surface_field(state.v, chart)
        dv = calc.surface_divergence_field(state.v, chart)
    else:
        D = calc.strain_bulk(state.v)
        dv = calc.div(state.v)
    return D.norm_sq() * mat.mu + dv * dv * mat.lam


def kinetic_density(mat, state):
    return state.rho * state.v.norm_sq() * 0.5


def work_density(mat, state, chart=None):
    pi = pressure_field(mat, state)
    if mat.phase == "S":
        return calc.surface_divergence_field(state.v, chart) * pi
    return calc.div(state.v) * pi


def thermal_density(mat, state, chart=None):
    if state.theta is None:
        raise ConstitutiveError(f"phase {mat.phase}: thermal density needs a temperature")
    if mat.phase == "S":
        g = calc.tangential_grad_field(state.theta, chart)
    else:
        g = calc.grad(state.theta)
    return g.dot(g) * mat.kappa


def total_energy_density(mat, state):
    e = internal_energy_field(mat, state)
    return state.rho * (state.v.norm_sq() * 0.5 + e)


# ---------------------------------------------------------------------------
# stresses and tractions

def stress(mat, state, chart=None):
    """Viscous stress tensor; the Boussinesq-Scriven form for the surface phase."""
    pi = pressure_field(mat, state)
    if mat.phase == "S":
        D = calc.strain_surface_field(state.v, chart)
        dv = calc.surface_divergence_field(state.v, chart)
        P = calc.projection_field(chart)
        return D * mat.mu + P * (dv * mat.lam) - P * pi
    D = calc.strain_bulk(state.v)
    dv = calc.div(state.v)
    return D * mat.mu + calc.identity_tensor(dv * mat.lam) - calc.identity_tensor(pi)


def jump_traction(mat, state, chart, r):
    """Traction transmitted through the surface from a bulk phase.

    r = 0 (no slip): the scalar mu n.(n.grad)v + lambda div v - pi, acting
    along the surface normal. r = 1 (slip): the full stress applied to the
    normal, returned as a vector field.
    """
    if mat.phase == "S":
        raise ConstitutiveError("jump tractions are defined for the bulk phases")
    if r == 0:
        N = chart.normal_field
        J = calc.jacobian(state.v)
        n_dn_v = N.dot(J.matvec(N))
        return n_dn_v * mat.mu + calc.div(state.v) * mat.lam \
            - pressure_field(mat, state)
    if r == 1:
        return stress(mat, state).matvec(chart.normal_field)
    raise ConstitutiveError("slip flag r must be 0 or 1")


def traction_dot(traction, w, chart):
    """(traction n) . w for either traction representation."""
    if isinstance(traction, ScalarField):
        return traction * chart.normal_field.dot(w)
    return traction.dot(w)


def barotropic_pressure(mat, rho):
    """Induced pressure Pi(rho) = rho p'(rho) - p(rho) at a numeric density."""
    if rho <= 0:
        raise ConstitutiveError("density must be positive")
    if mat.eos is None or mat.eos.kind != "barotropic":
        raise ConstitutiveError(f"phase {mat.phase}: no barotropic pressure law")
    f = mat.eos.induced_pressure(ScalarField("x1"))
    return f(float(rho), 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# surface energy jump

_COUPLING_TOL = 1e-8


def coupling_residuals_at(mats, states, chart, r, u, v, t):
    """Max-abs residuals of the interface coupling conditions at chart nodes."""
    x = chart.point(u, v, t)
    n = chart.normal(u, v, t)
    va = states["A"].v.at_points(x, t)
    vb = states["B"].v.at_points(x, t)
    vs = states["S"].v.at_points(x, t)

    def normal_part(w):
        return np.einsum("ik,ik->k", w, n)

    def tangential(w):
        return w - n * normal_part(w)

    out = {
        "normal_velocity_A_vs_S": np.abs(normal_part(va - vs)),
        "normal_velocity_B_vs_S": np.abs(normal_part(vb - vs)),
        "tangential_velocity_A": np.max(np.abs(tangential(va - r * vs)), axis=0),
        "tangential_velocity_B": np.max(np.abs(tangential(vb - r * vs)), axis=0),
        "tangential_velocity_A_vs_B": np.max(np.abs(tangential(va - vb)), axis=0),
    }
    thetas = [states[p].theta for p in PHASES]
    if all(th is not None for th in thetas):
        ta, tb, ts = (th.at_points(x, t) for th in thetas)
        out["temperature_A_vs_S"] = np.abs(ta - ts)
        out["temperature_B_vs_S"] = np.abs(tb - ts)
    return out


def energy_jump_field(mats, states, chart, r):
    """Surface energy supply from the bulk: traction power jump plus heat-flux
    jump across the interface."""
    vs = states["S"].v
    tb = jump_traction(mats["B"], states["B"], chart, r)
    ta = jump_traction(mats["A"], states["A"], chart, r)
    power = traction_dot(tb, vs, chart) - traction_dot(ta, vs, chart)
    qa = heat_flux(mats["A"], states["A"])
    qb = heat_flux(mats["B"], states["B"])
    N = chart.normal_field
    return power + qb.dot(N) - qa.dot(N)


def energy_jump(mats, states, chart, r, u, v, t, check_coupling=True,
                tol=_COUPLING_TOL):
    """Evaluate the surface energy supply at chart nodes, verifying that the
    interface coupling conditions hold there first."""
    if check_coupling:
        res = coupling_residuals_at(mats, states, chart, r, u, v, t)
        for name, vals in res.items():
            worst = float(np.max(vals))
            if worst > tol:
                raise ConstitutiveError(
                    f"coupling condition '{name}' violated: {worst:.3e} > {tol:.1e}")
    x = chart.point(u, v, t)
    return energy_jump_field(mats, states, chart, r).at_points(x, t)
