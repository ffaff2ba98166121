"""Thermodynamic potentials and their evolution identities.

The potentials are built from the ideal-gas model (the supplied equation of
state satisfying the Gibbs relation exactly); enthalpy, Helmholtz and Gibbs
energies follow by their defining combinations, so the constructed-identity
checks are exact and the interesting content is the evolution equations,
which hold conditionally on the governing system. Preconditions are checked,
never assumed. Entropy is never derived from first principles; states without
a temperature model simply cannot request the potential checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from . import constitutive as con
from . import geometry as geo
from . import residuals as res
from .expr import ScalarField, VectorField

POTENTIAL_EQUATIONS = ("enthalpy", "entropy", "helmholtz", "gibbs")


class ThermoError(ValueError):
    pass


def thermo_fields(sys, phase):
    """Internal energy, enthalpy, entropy and free energies of one phase."""

    def build():
        st = sys.state(phase)
        mat = sys.material(phase)
        if st.theta is None:
            raise ThermoError(f"phase {phase}: potentials need a temperature")
        e = con.internal_energy_field(mat, st)
        pi = con.pressure_field(mat, st)
        entropy = con.entropy_field(mat, st)
        h = e + pi / st.rho
        helmholtz = e - st.theta * entropy
        gibbs = h - st.theta * entropy
        return {"e": e, "pi": pi, "h": h, "entropy": entropy,
                "helmholtz": helmholtz, "gibbs": gibbs}

    return sys.cached(("thermo_fields", phase), build)


def thermodynamic_identity_gap(sys, phase, x, t, entropy=None):
    """|D_t e - theta D_t s + pi D_t (1/rho)| at points x (shape (3, K)).

    Passing an explicit entropy field overrides the model entropy; useful as
    a negative control for inconsistent choices.
    """
    st = sys.state(phase)
    fields = thermo_fields(sys, phase)
    entropy = fields["entropy"] if entropy is None else entropy
    v = st.v
    lhs = calc.material_derivative(fields["e"], v)
    rhs = st.theta * calc.material_derivative(entropy, v) \
        - fields["pi"] * calc.material_derivative(1.0 / st.rho, v)
    return np.abs((lhs - rhs).at_points(x, t))


def _check_positive(sys, phase, x, t):
    st = sys.state(phase)
    rho = st.rho.at_points(x, t)
    if np.any(rho <= 0.0):
        raise ThermoError(f"phase {phase}: density must be positive")
    theta = st.theta.at_points(x, t)
    if np.any(theta <= 0.0):
        raise ThermoError(f"phase {phase}: temperature must be positive")


def potential_equation_residual(sys, which, phase):
    """Residual field of one thermodynamic-potential evolution equation."""
    if which not in POTENTIAL_EQUATIONS:
        raise ThermoError(f"unknown potential equation {which!r}")

    def build():
        st = sys.state(phase)
        mat = sys.material(phase)
        fields = thermo_fields(sys, phase)
        rho, v = st.rho, st.v
        surface = phase == "S"
        chart = sys.chart

        if surface:
            q = con.heat_flux(mat, st, chart)
            e_d = con.dissipation_density(mat, st, chart)
            dv = calc.surface_divergence_field(v, chart)
            N = chart.normal_field
            qa = con.heat_flux(sys.material("A"), sys.state("A"))
            qb = con.heat_flux(sys.material("B"), sys.state("B"))
            heat_jump = qb.dot(N) - qa.dot(N)

            def transport(density_field, flux):
                return calc.normal_time_derivative_field(density_field, v, chart) \
                    + calc.surface_divergence_field(flux, chart)

            def grad_t(f):
                return calc.tangential_grad_field(f, chart)
        else:
            q = con.heat_flux(mat, st)
            e_d = con.dissipation_density(mat, st)
            dv = calc.div(v)
            heat_jump = ScalarField(0.0)

            def transport(density_field, flux):
                return density_field.dt() + calc.div(flux)

            def grad_t(f):
                return calc.grad(f)

        if which == "enthalpy":
            dens = rho * fields["h"]
            flux = VectorField(*(dens * v[i] - q[i] for i in range(3)))
            dtpi = calc.material_derivative(fields["pi"], v)
            return transport(dens, flux) - e_d - dtpi - heat_jump

        if which == "entropy":
            theta = st.theta
            dens = rho * fields["entropy"]
            flux = VectorField(*(dens * v[i] - q[i] / theta for i in range(3)))
            production = e_d / theta + q.dot(grad_t(theta)) / (theta * theta)
            return transport(dens, flux) - production - heat_jump / theta

        if which == "helmholtz":
            dtf = calc.material_derivative(fields["helmholtz"], v)
            dtth = calc.material_derivative(st.theta, v)
            return rho * dtf + rho * fields["entropy"] * dtth + dv * fields["pi"]

        # gibbs
        dtf = calc.material_derivative(fields["gibbs"], v)
        dtth = calc.material_derivative(st.theta, v)
        dtpi = calc.material_derivative(fields["pi"], v)
        return rho * dtf + rho * fields["entropy"] * dtth - dtpi

    return sys.cached(("potential_eq", which, phase), build)


@dataclass
class PotentialCheck:
    which: str
    phase: str
    gap: float
    continuity_inf: float
    energy_inf: float
    identity_inf: float


def potential_equation_gap(sys, which, phase, x, t, check_preconditions=True,
                           tol=1e-8):
    """Max-abs residual of the selected potential equation at points x.

    The evolution equations presume the governing mass and energy balances
    and the thermodynamic identity; violations are itemized.
    """
    _check_positive(sys, phase, x, t)
    cont = float(np.max(np.abs(
        res.continuity_residual(sys, phase).at_points(x, t))))
    energy = float(np.max(np.abs(
        res.energy_residual(sys, phase).at_points(x, t))))
    ident = float(np.max(thermodynamic_identity_gap(sys, phase, x, t)))
    if check_preconditions:
        problems = [f"{name} residual {val:.3e}" for name, val in
                    (("continuity", cont), ("internal-energy", energy),
                     ("thermodynamic-identity", ident)) if val > tol]
        if problems:
            raise ThermoError(
                f"phase {phase}: preconditions of the {which} equation fail: "
                + "; ".join(problems))
    gap = float(np.max(np.abs(
        potential_equation_residual(sys, which, phase).at_points(x, t))))
    return PotentialCheck(which, phase, gap, cont, energy, ident)


def entropy_production(sys, phase, x, t):
    """e_D / theta + kappa |grad theta|^2 / theta^2 at points x; the heat-flux
    term uses the tangential gradient on the surface."""
    st = sys.state(phase)
    mat = sys.material(phase)
    theta = st.theta.at_points(x, t)
    if np.any(theta <= 0.0):
        raise ThermoError(f"phase {phase}: temperature must be positive")
    if phase == "S":
        e_d = con.dissipation_density(mat, st, sys.chart)
        g = calc.tangential_grad_field(st.theta, sys.chart)
    else:
        e_d = con.dissipation_density(mat, st)
        g = calc.grad(st.theta)
    ed_vals = e_d.at_points(x, t)
    g_vals = g.at_points(x, t)
    return ed_vals / theta + mat.kappa * np.einsum("ik,ik->k", g_vals, g_vals) \
        / (theta * theta)


def material_potential_identities(sys, phase, x, t):
    """Gaps of the eight material-derivative potential identities.

    Four specific (per unit mass) forms for e, h, and the two free energies,
    plus their density-weighted counterparts (rho D_t f versions); keys name
    the potential with a ``density_`` prefix for the weighted forms.
    """
    st = sys.state(phase)
    fields = thermo_fields(sys, phase)
    v = st.v
    theta, rho, pi, entropy = st.theta, st.rho, fields["pi"], fields["entropy"]

    def d(f):
        return calc.material_derivative(f, v)

    specific = {
        "internal_energy": d(fields["e"]) - theta * d(entropy) + pi * d(1.0 / rho),
        "enthalpy": d(fields["h"]) - theta * d(entropy) - d(pi) / rho,
        "helmholtz": d(fields["helmholtz"]) + entropy * d(theta) + pi * d(1.0 / rho),
        "gibbs": d(fields["gibbs"]) + entropy * d(theta) - d(pi) / rho,
    }
    out = {}
    for name, fld in specific.items():
        out[name] = float(np.max(np.abs(fld.at_points(x, t))))
        weighted = rho * fld
        out[f"density_{name}"] = float(np.max(np.abs(weighted.at_points(x, t))))
    return out
