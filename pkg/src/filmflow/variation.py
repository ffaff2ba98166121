"""Dissipation functionals and their variational force identities.

The functionals are quadratic in the variation parameter, so their derivative
at zero is estimated by honest central differences of functional *values*;
the comparison side integrates the divergence-form forces against the
variation. Agreement of the two routes is the content being certified.

Admissible variations are built by blending seed fields into the required
interface traces with smooth (tanh-squared) radial profiles, so the trace
conditions hold to machine precision while every field stays infinitely
smooth; spectral quadrature accuracy is preserved. The piecewise-polynomial
bump of fixed width would break both: the expression language has no
branches, and a merely C^2 kink would degrade the quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from . import constitutive as con
from . import geometry as geo
from .expr import ScalarField, VectorField, sqrt_f, tanh_f

PHASES = ("A", "B", "S")


class VariationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# admissible variations

@dataclass
class AdmissibleVariation:
    """Velocity variations phi and temperature variations psi per phase,
    frozen at one time; satisfies the interface and outer-boundary
    compatibility conditions by construction."""

    phi: dict
    psi: dict
    r: int
    t: float
    widths: tuple


def outer_flat_map(config, t):
    """Radial reparametrization of the shell that is the identity on the
    surface and has vanishing radial derivative on the outer boundary.

    Composing any smooth field with this map yields a field whose normal
    derivative vanishes exactly on the outer sphere while its trace on the
    moving surface is unchanged.
    """
    chart = config.chart
    rho = sqrt_f(ScalarField("x1^2+x2^2+x3^2"))
    r_surf = rho - chart.radial_gap.freeze_time(t)
    r_out = config.outer_radius
    # identity-tangent at the surface, derivative zero at the outer boundary
    squashed = rho - ((rho - r_surf) ** 2) / ((r_out - r_surf) * 2.0)
    scale = squashed / rho
    return {"x1": ScalarField("x1") * scale,
            "x2": ScalarField("x2") * scale,
            "x3": ScalarField("x3") * scale}


def inner_flat_map(config, t):
    """Radial reparametrization of the inner region, identity-tangent on the
    surface, with image bounded away from the origin.

    The ambient normal extension turns over rapidly near the center of the
    inner region; fields that sample it there converge slowly under
    quadrature. Composing with this map keeps every evaluation at radii of at
    least half the surface radius while leaving surface traces untouched.
    """
    chart = config.chart
    rho = sqrt_f(ScalarField("x1^2+x2^2+x3^2"))
    r_surf = rho - chart.radial_gap.freeze_time(t)
    squashed = rho + ((r_surf - rho) ** 2) / (r_surf * 2.0)
    scale = squashed / rho
    return {"x1": ScalarField("x1") * scale,
            "x2": ScalarField("x2") * scale,
            "x3": ScalarField("x3") * scale}


def make_admissible(config, r, t, phi_seeds, psi_seeds, width_scale=0.3):
    """Blend free seed fields into an admissible variation at time t.

    phi_seeds / psi_seeds map phase -> seed field. On the surface the built
    fields take the transmitted trace ((phi_S . n) n + r P phi_S for
    velocities, psi_S for temperatures); phi_B vanishes on the outer boundary
    and psi_B, built through the flattening map, carries a nonzero boundary
    value with an exactly vanishing normal derivative there. Inner-phase
    fields are composed with the interior flattening map; all trace
    conditions hold to rounding error.
    """
    if r not in (0, 1):
        raise VariationError("slip flag r must be 0 or 1")
    chart = config.chart
    min_r = chart.min_radius(t)
    max_r = chart.max_radius(t)
    shell = config.outer_radius - max_r
    if not 0.0 < width_scale < 1.0:
        raise VariationError("width_scale must lie in (0, 1)")
    w_in = width_scale * min_r
    w_out = width_scale * shell
    if w_out >= shell or w_in >= min_r:
        raise VariationError("blending width exceeds the available thickness")

    d = chart.radial_gap.freeze_time(t)
    N = chart.normal_field.freeze_time(t)
    rho_len = sqrt_f(ScalarField("x1^2+x2^2+x3^2"))
    r_surf = rho_len - d  # radius of the surface along each direction
    b = (config.outer_radius - rho_len) / (config.outer_radius - r_surf)
    m_in = tanh_f(d * (1.0 / w_in)) ** 2
    m_out = tanh_f(d * (1.0 / w_out)) ** 2

    inner_map = inner_flat_map(config, t)
    outer_map = outer_flat_map(config, t)

    phi_s = VectorField(*(c.freeze_time(t) for c in phi_seeds["S"]))
    ns = N.dot(phi_s)
    trace = VectorField(*(ns * N[i] + r * (phi_s[i] - N[i] * ns)
                          for i in range(3)))
    phi_a_seed = VectorField(*(c.freeze_time(t) for c in phi_seeds["A"]))
    phi_b_seed = VectorField(*(c.freeze_time(t) for c in phi_seeds["B"]))
    phi_a = VectorField(*(
        (trace[i] + m_in * (phi_a_seed[i] - trace[i])).compose(inner_map)
        for i in range(3)))
    phi_b = VectorField(*(b * (trace[i] + m_out * (phi_b_seed[i] - trace[i]))
                          for i in range(3)))

    psi_s = psi_seeds["S"].freeze_time(t)
    psi_a = (psi_s + m_in * (psi_seeds["A"].freeze_time(t) - psi_s)) \
        .compose(inner_map)
    psi_b = (psi_s + m_out * (psi_seeds["B"].freeze_time(t) - psi_s)) \
        .compose(outer_map)

    return AdmissibleVariation(
        phi={"A": phi_a, "B": phi_b, "S": phi_s},
        psi={"A": psi_a, "B": psi_b, "S": psi_s},
        r=r, t=float(t), widths=(w_in, w_out))


def admissibility_residuals(variation, config, n=16):
    """Max-abs residuals of the compatibility conditions at quadrature nodes."""
    t = variation.t
    chart = config.chart
    g = geo.surface_grid(chart, t, n)
    bnd = geo.boundary_grid(config, n)
    r = variation.r
    pa = variation.phi["A"].at_points(g.x, t)
    pb = variation.phi["B"].at_points(g.x, t)
    ps = variation.phi["S"].at_points(g.x, t)

    def nrm(w):
        return np.einsum("ik,ik->k", w, g.n)

    def tang(w):
        return w - g.n * nrm(w)

    out = {
        "phi_B_outer": float(np.max(np.abs(
            variation.phi["B"].at_points(bnd.x, t)))),
        "phi_normal_A": float(np.max(np.abs(nrm(pa) - nrm(ps)))),
        "phi_normal_B": float(np.max(np.abs(nrm(pb) - nrm(ps)))),
        "phi_tangential_A": float(np.max(np.abs(tang(pa) - r * tang(ps)))),
        "phi_tangential_B": float(np.max(np.abs(tang(pb) - r * tang(ps)))),
        "psi_A_trace": float(np.max(np.abs(
            variation.psi["A"].at_points(g.x, t)
            - variation.psi["S"].at_points(g.x, t)))),
        "psi_B_trace": float(np.max(np.abs(
            variation.psi["B"].at_points(g.x, t)
            - variation.psi["S"].at_points(g.x, t)))),
    }
    grad_psi_b = np.stack([variation.psi["B"].diff(i).at_points(bnd.x, t)
                           for i in range(3)])
    out["psi_B_outer_neumann"] = float(np.max(np.abs(
        np.einsum("ik,ik->k", bnd.n, grad_psi_b))))
    return out


# ---------------------------------------------------------------------------
# functionals

def _phase_quadrature(sys, phase, t, n):
    if phase == "S":
        g = geo.surface_grid(sys.chart, t, n)
        return g.x, g.w, g
    g = geo.volume_grid(sys.domain, phase, t, n)
    return g.x, g.w, None


def _strain_and_div(vfield, sys, phase, t, n):
    x, w, g = _phase_quadrature(sys, phase, t, n)
    if phase == "S":
        D = calc.strain_surface(vfield, sys.chart, g.u, g.v, t)
        dv = calc.surface_divergence(vfield, sys.chart, g.u, g.v, t)
    else:
        J = np.stack([np.stack([vfield[i].diff(j).at_points(x, t)
                                for j in range(3)]) for i in range(3)])
        D = 0.5 * (J + np.swapaxes(J, 0, 1))
        dv = np.einsum("iik->k", J)
    return D, dv, w, x


def _temp_gradient(f, sys, phase, t, n):
    x, w, g = _phase_quadrature(sys, phase, t, n)
    grad = np.stack([f.diff(i).at_points(x, t) for i in range(3)])
    if phase == "S":
        grad = grad - g.n * np.einsum("ik,ik->k", g.n, grad)
    return grad, w, x


def dissipation_energy(sys, t, n=24):
    """E_D: minus one half the viscous dissipation, summed over the phases."""
    total = 0.0
    for phase in PHASES:
        mat = sys.material(phase)
        D, dv, w, _ = _strain_and_div(sys.state(phase).v, sys, phase, t, n)
        dens = 0.5 * mat.mu * np.einsum("ijk,ijk->k", D, D) \
            + 0.5 * mat.lam * dv * dv
        total -= math.fsum((w * dens).tolist())
    return total


def pressure_work_energy(sys, t, n=24):
    """E_W: the power density of the pressures, summed over the phases."""
    total = 0.0
    for phase in PHASES:
        st = sys.state(phase)
        pi = con.pressure_field(sys.material(phase), st)
        if phase == "S":
            g = geo.surface_grid(sys.chart, t, n)
            dv = calc.surface_divergence(st.v, sys.chart, g.u, g.v, t)
            total += math.fsum((g.w * dv * pi.at_points(g.x, t)).tolist())
        else:
            vg = geo.volume_grid(sys.domain, phase, t, n)
            vals = (calc.div(st.v) * pi).at_points(vg.x, t)
            total += math.fsum((vg.w * vals).tolist())
    return total


def thermal_dissipation_energy(sys, t, n=24):
    """E_TD: minus one half the thermal dissipation, summed over the phases."""
    total = 0.0
    for phase in PHASES:
        mat = sys.material(phase)
        grad, w, _ = _temp_gradient(sys.state(phase).theta, sys, phase, t, n)
        dens = 0.5 * mat.kappa * np.einsum("ik,ik->k", grad, grad)
        total -= math.fsum((w * dens).tolist())
    return total


# ---------------------------------------------------------------------------
# Gateaux checks

@dataclass
class GateauxResult:
    kind: str
    r: int
    side_fd: float
    side_force: float
    gap: float
    rel_gap: float
    scale: float = 1.0


def _relative(gap, a, b, pieces=0.0):
    # normalize by the magnitude of the integrals being compared; the net
    # result may nearly cancel for variations close to orthogonal to the
    # force, which is not an error of the identity
    scale = max(abs(a), abs(b), pieces)
    return (gap / scale if scale > 1e-8 else gap), scale


_STENCIL = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))


def _force_fields_velocity(sys):
    def build():
        chart = sys.chart
        r = sys.slip
        f_a = calc.div_tensor(con.stress(sys.material("A"), sys.state("A")))
        f_b = calc.div_tensor(con.stress(sys.material("B"), sys.state("B")))
        t_s = con.stress(sys.material("S"), sys.state("S"), chart)
        div_ts = calc.surface_div_tensor_field(t_s, chart)
        tb = con.jump_traction(sys.material("B"), sys.state("B"), chart, r)
        ta = con.jump_traction(sys.material("A"), sys.state("A"), chart, r)
        if r == 0:
            diff = tb - ta
            N = chart.normal_field
            f_s = VectorField(*(div_ts[i] + N[i] * diff for i in range(3)))
        else:
            f_s = div_ts + (tb - ta)
        return {"A": f_a, "B": f_b, "S": f_s}

    return sys.cached(("gateaux_forces", sys.slip), build)


def gateaux_gap_velocity(sys, variation, t, n=24, eps=1e-3):
    """Compare d/de E_{D+W}[v + e phi] at e = 0 with the force integrals."""
    if variation.r != sys.slip:
        raise VariationError("variation and system disagree on the slip flag")
    base = {}
    for phase in PHASES:
        key = ("gateaux_base_velocity", phase, float(t), n)
        base[phase] = sys.cached(
            key, lambda p=phase: _strain_and_div(sys.state(p).v, sys, p, t, n))
    pis = {}
    for phase in PHASES:
        key = ("gateaux_pi", phase, float(t), n)

        def build(p=phase):
            x, _, _ = _phase_quadrature(sys, p, t, n)
            return con.pressure_field(sys.material(p), sys.state(p)).at_points(x, t)

        pis[phase] = sys.cached(key, build)

    var_samples = {p: _strain_and_div(variation.phi[p], sys, p, t, n)
                   for p in PHASES}

    def energy(eps_value):
        total = 0.0
        for phase in PHASES:
            mat = sys.material(phase)
            D0, dv0, w, _ = base[phase]
            D1, dv1, _, _ = var_samples[phase]
            D = D0 + eps_value * D1
            dv = dv0 + eps_value * dv1
            dens = -0.5 * mat.mu * np.einsum("ijk,ijk->k", D, D) \
                - 0.5 * mat.lam * dv * dv + dv * pis[phase]
            total += math.fsum((w * dens).tolist())
        return total

    side_fd = math.fsum(c * energy(k * eps) for k, c in _STENCIL) / (12.0 * eps)

    forces = _force_fields_velocity(sys)
    side_force = 0.0
    pieces = 0.0
    for phase in PHASES:
        x, w, _ = _phase_quadrature(sys, phase, t, n)
        fv = forces[phase].at_points(x, t)
        pv = variation.phi[phase].at_points(x, t)
        term = math.fsum((w * np.einsum("ik,ik->k", fv, pv)).tolist())
        side_force += term
        pieces = max(pieces, abs(term))

    gap = abs(side_fd - side_force)
    rel, scale = _relative(gap, side_fd, side_force, pieces)
    return GateauxResult("velocity", sys.slip, side_fd, side_force, gap, rel,
                         scale)


def _force_fields_temperature(sys):
    def build():
        chart = sys.chart
        q_a = calc.div(con.heat_flux(sys.material("A"), sys.state("A")))
        q_b = calc.div(con.heat_flux(sys.material("B"), sys.state("B")))
        flux_s = con.heat_flux(sys.material("S"), sys.state("S"), chart)
        N = chart.normal_field
        jump = sys.material("B").kappa * N.dot(calc.grad(sys.state("B").theta)) \
            - sys.material("A").kappa * N.dot(calc.grad(sys.state("A").theta))
        q_s = calc.surface_divergence_field(flux_s, chart) + jump
        return {"A": q_a, "B": q_b, "S": q_s}

    return sys.cached(("gateaux_heat",), build)


def gateaux_gap_temperature(sys, variation, t, n=24, eps=1e-3):
    """Compare d/de E_TD[theta + e psi] at e = 0 with the endothermic
    energies integrated against the variation."""
    base = {}
    for phase in PHASES:
        key = ("gateaux_base_temp", phase, float(t), n)
        base[phase] = sys.cached(
            key, lambda p=phase: _temp_gradient(sys.state(p).theta, sys, p, t, n))
    var_samples = {p: _temp_gradient(variation.psi[p], sys, p, t, n)
                   for p in PHASES}

    def energy(eps_value):
        total = 0.0
        for phase in PHASES:
            mat = sys.material(phase)
            g0, w, _ = base[phase]
            g1, _, _ = var_samples[phase]
            g = g0 + eps_value * g1
            dens = -0.5 * mat.kappa * np.einsum("ik,ik->k", g, g)
            total += math.fsum((w * dens).tolist())
        return total

    side_fd = math.fsum(c * energy(k * eps) for k, c in _STENCIL) / (12.0 * eps)

    sources = _force_fields_temperature(sys)
    side_force = 0.0
    for phase in PHASES:
        x, w, _ = _phase_quadrature(sys, phase, t, n)
        qv = sources[phase].at_points(x, t)
        pv = variation.psi[phase].at_points(x, t)
        side_force += math.fsum((w * qv * pv).tolist())

    gap = abs(side_fd - side_force)
    return GateauxResult("temperature", sys.slip, side_fd, side_force, gap,
                         _relative(gap, side_fd, side_force))
