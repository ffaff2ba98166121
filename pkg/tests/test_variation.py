import math

import numpy as np
import pytest

from filmflow import constitutive as con
from filmflow import fixtures
from filmflow import geometry as geo
from filmflow import variation as vr
from filmflow.expr import field, vector
from filmflow.residuals import SystemState


def zero_system(slip=0, pi=("0", "0", "0"), chart=None, outer=3.0):
    chart = chart or geo.sphere("1")
    domain = geo.DomainConfig(chart, outer, slip)
    mats = {p: con.PhaseMaterial(phase=p, mu=1.0, lam=0.5, kappa=1.0)
            for p in "ABS"}
    states = {p: con.PhaseState(rho=field("1"), v=vector("0", "0", "0"),
                                theta=field("1"), pi=field(pi[i]), e=field("1"))
              for i, p in enumerate("ABS")}
    return SystemState(domain, mats, states)


def make_variation(config, r, rng, t=0.0, **kw):
    seeds_phi = {p: fixtures.random_vector(rng) for p in "ABS"}
    seeds_psi = {p: fixtures.random_scalar(rng) for p in "ABS"}
    return vr.make_admissible(config, r, t, seeds_phi, seeds_psi, **kw)


# ---------------------------------------------------------------------------
# admissible variations

def test_normal_seed_transmits_normally():
    # seed phi_S = n extension with r = 0: phi_A and phi_B equal the normal
    # field on the surface, with zero tangential part
    config = geo.DomainConfig(geo.sphere("1"), 3.0, 0)
    n_ext = vector("x1", "x2", "x3") * (1.0 / field("sqrt(x1^2+x2^2+x3^2)"))
    seeds_phi = {"A": vector("x3", "x1", "x2"), "B": vector("1", "0", "0"),
                 "S": n_ext}
    seeds_psi = {p: field("0") for p in "ABS"}
    var = vr.make_admissible(config, 0, 0.0, seeds_phi, seeds_psi)
    g = geo.surface_grid(config.chart, 0.0, 10)
    for p in ("A", "B"):
        vals = var.phi[p].at_points(g.x, 0.0)
        assert np.max(np.abs(vals - g.n)) <= 1e-12


def test_tangential_seed_killed_without_slip():
    config = geo.DomainConfig(geo.sphere("1"), 3.0, 0)
    seeds_phi = {"A": vector("1", "2", "3"), "B": vector("0", "1", "0"),
                 "S": vector("-x2", "x1", "0")}  # tangential on the sphere
    seeds_psi = {p: field("0") for p in "ABS"}
    var = vr.make_admissible(config, 0, 0.0, seeds_phi, seeds_psi)
    g = geo.surface_grid(config.chart, 0.0, 10)
    for p in ("A", "B"):
        vals = var.phi[p].at_points(g.x, 0.0)
        # r = 0 transmits only the (vanishing) normal part of the seed
        assert np.max(np.abs(vals)) <= 1e-12


def test_admissibility_residuals_tiny():
    rng = np.random.Generator(np.random.Philox(61))
    for chart, outer in ((geo.sphere("1"), 3.0),
                         (geo.perturbed_sphere("1", 0.15, "x3^2"), 3.0),
                         (geo.ellipsoid(1, 1, 2), 4.0)):
        for r in (0, 1):
            config = geo.DomainConfig(chart, outer, r)
            var = make_variation(config, r, rng)
            res = vr.admissibility_residuals(var, config)
            assert max(res.values()) <= 1e-10, (chart.kind, r, res)


def test_variation_psi_B_carries_boundary_values():
    # the admissible class includes temperature variations that are nonzero
    # on the outer boundary (only the normal derivative must vanish)
    rng = np.random.Generator(np.random.Philox(62))
    config = geo.DomainConfig(geo.sphere("1"), 3.0, 0)
    var = make_variation(config, 0, rng)
    bnd = geo.boundary_grid(config, 8)
    assert np.max(np.abs(var.psi["B"].at_points(bnd.x, 0.0))) > 1e-3


def test_blending_width_validation():
    config = geo.DomainConfig(geo.sphere("1"), 3.0, 0)
    rng = np.random.Generator(np.random.Philox(63))
    with pytest.raises(vr.VariationError, match="width_scale"):
        make_variation(config, 0, rng, width_scale=1.2)


def test_slip_flag_validation():
    config = geo.DomainConfig(geo.sphere("1"), 3.0, 0)
    rng = np.random.Generator(np.random.Philox(64))
    with pytest.raises(vr.VariationError, match="slip"):
        make_variation(config, 2, rng)


# ---------------------------------------------------------------------------
# functionals

def test_functional_signs_on_random_state():
    rng = np.random.Generator(np.random.Philox(65))
    sys = fixtures.random_system(rng)
    assert vr.dissipation_energy(sys, 0.0, n=10) <= 0.0
    assert vr.thermal_dissipation_energy(sys, 0.0, n=10) <= 0.0


def test_functionals_zero_state():
    sys = zero_system()
    assert vr.dissipation_energy(sys, 0.0, n=8) == 0.0
    assert vr.pressure_work_energy(sys, 0.0, n=8) == 0.0


# ---------------------------------------------------------------------------
# velocity Gateaux identity

def test_gateaux_velocity_zero_state_trivial():
    sys = zero_system()
    rng = np.random.Generator(np.random.Philox(66))
    var = make_variation(sys.domain, 0, rng)
    out = vr.gateaux_gap_velocity(sys, var, 0.0, n=12)
    assert abs(out.side_fd) <= 1e-12
    assert abs(out.side_force) <= 1e-12


def test_gateaux_velocity_constant_pressures():
    # v = 0 with constant unbalanced pressures: both sides reduce to the
    # divergence-theorem value (2 pi_S + pi_A - pi_B) int (n . phi_S) on the
    # unit sphere, evaluated here as an independent oracle
    pi_a, pi_b, pi_s = 1.0, 0.5, 0.3
    rng = np.random.Generator(np.random.Philox(67))
    for r in (0, 1):
        sys_r = zero_system(slip=r, pi=(str(pi_a), str(pi_b), str(pi_s)))
        var = make_variation(sys_r.domain, r, rng)
        out = vr.gateaux_gap_velocity(sys_r, var, 0.0, n=20)
        g = geo.surface_grid(sys_r.chart, 0.0, 20)
        flux = math.fsum((g.w * np.einsum(
            "ik,ik->k", g.n, var.phi["S"].at_points(g.x, 0.0))).tolist())
        oracle = (2.0 * pi_s + pi_a - pi_b) * flux
        assert out.gap <= 1e-8 * max(1.0, abs(out.side_fd))
        assert out.side_force == pytest.approx(oracle, rel=1e-9)
        assert abs(out.side_fd) > 1e-3  # nontrivial check


def test_gateaux_velocity_young_laplace_pressures_give_zero():
    # pressures in static balance exert no net force on any admissible
    # variation: both routes vanish
    sys = zero_system(pi=("1.5", "0.7", "-0.4"))  # 1.5 = 0.7 - 2 (-0.4)
    rng = np.random.Generator(np.random.Philox(76))
    var = make_variation(sys.domain, 0, rng)
    out = vr.gateaux_gap_velocity(sys, var, 0.0, n=20)
    assert abs(out.side_force) <= 1e-10
    assert abs(out.side_fd) <= 1e-8


def test_gateaux_velocity_randomized():
    rng = np.random.Generator(np.random.Philox(68))
    for chart, outer in ((geo.sphere("1"), 3.0),
                         (geo.perturbed_sphere("1", 0.15, "(3*x3^2-1)/2"), 3.0)):
        for r in (0, 1):
            sys = fixtures.random_system(rng, chart=chart, outer_radius=outer,
                                         slip=r)
            var = make_variation(sys.domain, r, rng)
            out = vr.gateaux_gap_velocity(sys, var, 0.0, n=24)
            assert out.rel_gap <= 1e-6, (chart.kind, r, out)


def test_gateaux_velocity_scaling_invariance():
    # scaling the variation by s scales both sides linearly
    rng = np.random.Generator(np.random.Philox(69))
    sys = fixtures.random_system(rng)
    var = make_variation(sys.domain, 0, rng)
    out1 = vr.gateaux_gap_velocity(sys, var, 0.0, n=16)
    scaled = vr.AdmissibleVariation(
        phi={p: var.phi[p] * 3.0 for p in "ABS"},
        psi=var.psi, r=var.r, t=var.t, widths=var.widths)
    out3 = vr.gateaux_gap_velocity(sys, scaled, 0.0, n=16)
    assert out3.side_force == pytest.approx(3.0 * out1.side_force, rel=1e-12)
    assert out3.side_fd == pytest.approx(3.0 * out1.side_fd, rel=1e-10)


def test_gateaux_velocity_eps_plateau():
    # the functional is exactly quadratic in the variation parameter, so the
    # stencil is exact for every step; the gap stays at the quadrature floor
    rng = np.random.Generator(np.random.Philox(70))
    sys = fixtures.random_system(rng)
    var = make_variation(sys.domain, 0, rng)
    gaps = [vr.gateaux_gap_velocity(sys, var, 0.0, n=20, eps=e).rel_gap
            for e in (1e-2, 1e-3, 1e-4)]
    assert max(gaps) <= 1e-6
    assert max(gaps) / max(min(gaps), 1e-16) < 1e3


def test_gateaux_requires_matching_slip():
    rng = np.random.Generator(np.random.Philox(71))
    sys = fixtures.random_system(rng, slip=1)
    var = make_variation(geo.DomainConfig(sys.chart, 3.0, 0), 0, rng)
    with pytest.raises(vr.VariationError, match="slip"):
        vr.gateaux_gap_velocity(sys, var, 0.0, n=8)


# ---------------------------------------------------------------------------
# temperature Gateaux identity

def test_gateaux_temperature_uniform_state_trivial():
    sys = zero_system()
    rng = np.random.Generator(np.random.Philox(72))
    var = make_variation(sys.domain, 0, rng)
    out = vr.gateaux_gap_temperature(sys, var, 0.0, n=12)
    assert abs(out.side_fd) <= 1e-12
    assert abs(out.side_force) <= 1e-12


def test_gateaux_temperature_linear_field_equal_conductivities():
    # theta = x3 in both bulk phases with kappa_A = kappa_B: the bulk sources
    # are zero (harmonic field) and the interface jump cancels, but theta_B
    # violates the outer Neumann condition, so restrict to variations that
    # vanish there: the identity still closes through psi_B's boundary factor
    sys = zero_system()
    for p in "ABS":
        sys.states[p] = con.PhaseState(rho=field("1"), v=vector("0", "0", "0"),
                                       theta=field("x3") + 2.0, pi=field("0"),
                                       e=field("1"))
        sys.materials[p] = con.PhaseMaterial(phase=p, mu=0.0, lam=0.0, kappa=1.3)
    sys._cache.clear()
    rng = np.random.Generator(np.random.Philox(73))
    seeds_phi = {p: fixtures.random_vector(rng) for p in "ABS"}
    seeds_psi = {p: fixtures.random_scalar(rng) for p in "ABS"}
    var = vr.make_admissible(sys.domain, 0, 0.0, seeds_phi, seeds_psi)
    # replace psi_B by a variant that vanishes on the outer boundary, which is
    # admissible and removes the boundary power of the Neumann-violating state
    rho_len = field("sqrt(x1^2+x2^2+x3^2)")
    cut = ((3.0 - rho_len) / 2.0) ** 2
    var = vr.AdmissibleVariation(
        phi=var.phi,
        psi={"A": var.psi["A"], "B": cut * (var.psi["S"]), "S": var.psi["S"]},
        r=0, t=0.0, widths=var.widths)
    # the replacement must still be admissible
    res = vr.admissibility_residuals(var, sys.domain)
    assert max(res.values()) <= 1e-10
    out = vr.gateaux_gap_temperature(sys, var, 0.0, n=24)
    assert out.rel_gap <= 1e-8


def test_gateaux_temperature_conductivity_jump():
    # theta = |x|^2 in all phases (matched at the interface) with a Neumann-
    # compatible rebuild of theta_B; kappa_A != kappa_B drives the jump term
    chart = geo.sphere("1")
    config = geo.DomainConfig(chart, 3.0, 0)
    theta = field("x1^2+x2^2+x3^2") + 1.0
    theta_b = theta.compose(vr.outer_flat_map(config, 0.0))
    mats = {"A": con.PhaseMaterial(phase="A", kappa=1.0),
            "B": con.PhaseMaterial(phase="B", kappa=2.0),
            "S": con.PhaseMaterial(phase="S", kappa=0.5)}
    states = {
        "A": con.PhaseState(rho=field("1"), v=vector("0", "0", "0"),
                            theta=theta, pi=field("0"), e=field("1")),
        "B": con.PhaseState(rho=field("1"), v=vector("0", "0", "0"),
                            theta=theta_b, pi=field("0"), e=field("1")),
        "S": con.PhaseState(rho=field("1"), v=vector("0", "0", "0"),
                            theta=theta, pi=field("0"), e=field("1")),
    }
    sys = SystemState(config, mats, states)
    rng = np.random.Generator(np.random.Philox(74))
    var = make_variation(sys.domain, 0, rng)
    out = vr.gateaux_gap_temperature(sys, var, 0.0, n=24)
    assert out.rel_gap <= 1e-7
    assert abs(out.side_fd) > 1e-3


def test_gateaux_temperature_randomized():
    rng = np.random.Generator(np.random.Philox(75))
    for chart, outer in ((geo.sphere("1"), 3.0),
                         (geo.perturbed_sphere("1", 0.15, "(3*x3^2-1)/2"), 3.0)):
        for r in (0, 1):
            sys = fixtures.random_system(rng, chart=chart, outer_radius=outer,
                                         slip=r, outer_flat_theta_at=0.0)
            var = make_variation(sys.domain, r, rng)
            out = vr.gateaux_gap_temperature(sys, var, 0.0, n=24)
            assert out.rel_gap <= 1e-6, (chart.kind, r, out)
