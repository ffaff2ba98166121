"""Pointwise residual evaluators for the governing system.

Every evaluator returns an expression field built from the system state, so a
manufactured state can either be scored (report the residual norms) or turned
into an exact solution of the sourced equations (use the residual fields as
source terms). Surface-phase residual fields are built with the chart's normal
extension and are meaningful on the surface only.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import calculus as calc
from . import constitutive as con
from . import geometry as geo
from .expr import ScalarField, VectorField

BULK_PHASES = ("A", "B")


class ResidualError(ValueError):
    pass


@dataclass
class SystemState:
    """Domain, materials and fields for the three phases."""

    domain: geo.DomainConfig
    materials: dict
    states: dict
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def material(self, phase):
        return self.materials[phase]

    def state(self, phase):
        return self.states[phase]

    @property
    def chart(self):
        return self.domain.chart

    @property
    def slip(self):
        return self.domain.slip

    def cached(self, key, build):
        out = self._cache.get(key)
        if out is None:
            out = build()
            self._cache[key] = out
        return out


def _require_phase(phase):
    if phase not in ("A", "B", "S"):
        raise ResidualError(f"unknown phase {phase!r}")


# ---------------------------------------------------------------------------
# non-conservative residual fields

def continuity_residual(sys, phase):
    """D_t rho + (div v) rho, with tangential divergence on the surface."""
    _require_phase(phase)

    def build():
        st = sys.state(phase)
        dt_rho = calc.material_derivative(st.rho, st.v)
        if phase == "S":
            dv = calc.surface_divergence_field(st.v, sys.chart)
        else:
            dv = calc.div(st.v)
        return dt_rho + dv * st.rho

    return sys.cached(("continuity", phase), build)


def energy_residual(sys, phase):
    """rho D_t e + (div v) pi - div q - e_D, minus the bulk heat-flux jump on
    the surface."""
    _require_phase(phase)

    def build():
        st = sys.state(phase)
        mat = sys.material(phase)
        e = con.internal_energy_field(mat, st)
        pi = con.pressure_field(mat, st)
        dt_e = calc.material_derivative(e, st.v)
        if phase == "S":
            chart = sys.chart
            dv = calc.surface_divergence_field(st.v, chart)
            q = con.heat_flux(mat, st, chart)
            div_q = calc.surface_divergence_field(q, chart)
            e_d = con.dissipation_density(mat, st, chart)
            qa = con.heat_flux(sys.material("A"), sys.state("A"))
            qb = con.heat_flux(sys.material("B"), sys.state("B"))
            N = chart.normal_field
            jump = qb.dot(N) - qa.dot(N)
            return st.rho * dt_e + dv * pi - div_q - e_d - jump
        dv = calc.div(st.v)
        q = con.heat_flux(mat, st)
        e_d = con.dissipation_density(mat, st)
        return st.rho * dt_e + dv * pi - calc.div(q) - e_d

    return sys.cached(("energy", phase), build)


def _traction_jump_vector(sys):
    """(TB n - TA n) as an ambient vector field on the surface."""
    chart = sys.chart
    r = sys.slip
    tb = con.jump_traction(sys.material("B"), sys.state("B"), chart, r)
    ta = con.jump_traction(sys.material("A"), sys.state("A"), chart, r)
    if r == 0:
        N = chart.normal_field
        diff = tb - ta
        return VectorField(*(N[i] * diff for i in range(3)))
    return tb - ta


def momentum_residual(sys, phase):
    """rho D_t v - div T, minus the transmitted tractions on the surface."""
    _require_phase(phase)

    def build():
        st = sys.state(phase)
        mat = sys.material(phase)
        dt_v = calc.material_derivative(st.v, st.v)
        inertia = VectorField(*(st.rho * c for c in dt_v))
        if phase == "S":
            chart = sys.chart
            T = con.stress(mat, st, chart)
            div_T = calc.surface_div_tensor_field(T, chart)
            jump = _traction_jump_vector(sys)
            return inertia - div_T - jump
        T = con.stress(mat, st)
        return inertia - calc.div_tensor(T)

    return sys.cached(("momentum", phase), build)


# ---------------------------------------------------------------------------
# conservative-form residual fields

def conservative_residuals(sys, phase):
    """Residuals of the conservative mass / total-energy / momentum forms.

    Surface lines use the normal-time derivative. Returns a dict with keys
    'mass', 'energy', 'momentum'.
    """
    _require_phase(phase)

    def build():
        st = sys.state(phase)
        mat = sys.material(phase)
        E = con.total_energy_density(mat, st)
        if phase == "S":
            chart = sys.chart
            vs = st.v
            q = con.heat_flux(mat, st, chart)
            T = con.stress(mat, st, chart)
            Tv = T.matvec(vs)
            mass = calc.normal_time_derivative_field(st.rho, vs, chart) \
                + calc.surface_divergence_field(
                    VectorField(*(st.rho * c for c in vs)), chart)
            eflux = VectorField(*(E * vs[i] - q[i] - Tv[i] for i in range(3)))
            energy = calc.normal_time_derivative_field(E, vs, chart) \
                + calc.surface_divergence_field(eflux, chart) \
                - con.energy_jump_field(sys.materials, sys.states, chart, sys.slip)
            jump = _traction_jump_vector(sys)
            mom = []
            for i in range(3):
                rho_vi = st.rho * vs[i]
                flux_i = VectorField(*(rho_vi * vs[j] - T.entry(i, j)
                                       for j in range(3)))
                mom.append(calc.normal_time_derivative_field(rho_vi, vs, chart)
                           + calc.surface_divergence_field(flux_i, chart)
                           - jump[i])
            return {"mass": mass, "energy": energy, "momentum": VectorField(*mom)}
        v = st.v
        q = con.heat_flux(mat, st)
        T = con.stress(mat, st)
        Tv = T.matvec(v)
        mass = st.rho.dt() + calc.div(VectorField(*(st.rho * c for c in v)))
        eflux = VectorField(*(E * v[i] - q[i] - Tv[i] for i in range(3)))
        energy = E.dt() + calc.div(eflux)
        mom = []
        for i in range(3):
            rho_vi = st.rho * v[i]
            flux_i = VectorField(*(rho_vi * v[j] - T.entry(i, j) for j in range(3)))
            mom.append(rho_vi.dt() + calc.div(flux_i))
        return {"mass": mass, "energy": energy, "momentum": VectorField(*mom)}

    return sys.cached(("conservative", phase), build)


def manufactured_sources(sys):
    """Source fields that turn the current state into an exact solution.

    Adding these to the right-hand sides of the governing equations makes the
    stored fields solve the sourced system identically; they are simply the
    residual fields, labelled per equation and phase.
    """
    out = {}
    for phase in ("A", "B", "S"):
        out[("mass", phase)] = continuity_residual(sys, phase)
        out[("internal_energy", phase)] = energy_residual(sys, phase)
        out[("momentum", phase)] = momentum_residual(sys, phase)
    return out


# ---------------------------------------------------------------------------
# boundary and coupling conditions

def boundary_residuals(sys, t, n=24):
    """Max-abs residuals of the outer-boundary and interface conditions."""
    chart = sys.chart
    grid = geo.surface_grid(chart, t, n)
    gamma = con.coupling_residuals_at(sys.materials, sys.states, chart,
                                      sys.slip, grid.u, grid.v, t)
    out = {name: float(np.max(vals)) for name, vals in gamma.items()}
    bnd = geo.boundary_grid(sys.domain, n)
    vb = sys.state("B").v.at_points(bnd.x, t)
    out["outer_velocity_B"] = float(np.max(np.abs(vb)))
    theta_b = sys.state("B").theta
    if theta_b is not None:
        g = np.stack([theta_b.diff(i).at_points(bnd.x, t) for i in range(3)])
        out["outer_neumann_theta_B"] = float(np.max(np.abs(
            np.einsum("ik,ik->k", bnd.n, g))))
    return out


# ---------------------------------------------------------------------------
# reports

@dataclass
class ResidualReport:
    equation: str
    phase: str
    norm_inf: float
    norm_l2: float
    node_u: float
    node_v: float
    t: float

    def row(self):
        return [self.equation, self.phase, self.norm_inf, self.norm_l2,
                self.node_u, self.node_v, self.t]


CSV_HEADER = ["equation", "phase", "norm_inf", "norm_l2", "node_u", "node_v", "t"]


def _norms(values, weights, u, v):
    mags = np.abs(values) if values.ndim == 1 else np.max(np.abs(values), axis=0)
    k = int(np.argmax(mags))
    l2 = float(np.sqrt(np.sum(weights * mags * mags)))
    return float(mags[k]), l2, float(u[k]), float(v[k])


def _phase_nodes(sys, phase, t, n):
    if phase == "S":
        g = geo.surface_grid(sys.chart, t, n)
        return g.x, g.w, g.u, g.v
    g = geo.volume_grid(sys.domain, phase, t, n)
    return g.x, g.w, g.u, g.v


def residual_report(sys, t, n=24, equations=("mass", "internal_energy", "momentum")):
    """Evaluate residual norms for every phase at time t."""
    builders = {
        "mass": continuity_residual,
        "internal_energy": energy_residual,
        "momentum": momentum_residual,
    }
    reports = []
    for eq in equations:
        for phase in ("A", "B", "S"):
            fld = builders[eq](sys, phase)
            x, w, u, v = _phase_nodes(sys, phase, t, n)
            if isinstance(fld, VectorField):
                vals = fld.at_points(x, t)
            else:
                vals = fld.at_points(x, t)
            ninf, nl2, nu, nv = _norms(np.asarray(vals), w, u, v)
            reports.append(ResidualReport(eq, phase, ninf, nl2, nu, nv, t))
    return reports


def max_residual(sys, t, n=16, equations=("mass", "internal_energy", "momentum")):
    return max(r.norm_inf for r in residual_report(sys, t, n, equations))
