"""Manufactured states used by the verification campaigns and tests.

Each fixture documents which equations it satisfies exactly. The closed forms
were derived by hand from the governing system and are re-verified by the
residual evaluators in the test suite, so a derivation slip shows up as a
nonzero residual rather than a silently wrong oracle.
"""
from __future__ import annotations

import numpy as np

from . import constitutive as con
from . import geometry as geo
from .expr import ScalarField, VectorField, field, vector
from .residuals import SystemState


def _const_vec(c1=0.0, c2=0.0, c3=0.0):
    return vector(c1, c2, c3)


def _materials(mu=(0.0, 0.0, 0.0), lam=(0.0, 0.0, 0.0), kappa=(0.0, 0.0, 0.0),
               eos=(None, None, None)):
    phases = ("A", "B", "S")
    return {p: con.PhaseMaterial(phase=p, mu=mu[i], lam=lam[i], kappa=kappa[i],
                                 eos=eos[i]) for i, p in enumerate(phases)}


# ---------------------------------------------------------------------------
# static equilibrium

def young_laplace_system(radius=1.0, pi_b=1.0, pi_s=-0.4, outer_radius=3.0,
                         slip=0, rho=(1.0, 1.0, 0.5), theta=2.0,
                         internal_energy=1.5, viscosities=(1.0, 1.0, 1.0)):
    """Static sphere in pressure balance: pi_A = pi_B - 2 pi_S / R.

    Satisfies every governing equation and every boundary condition exactly;
    a negative surface pressure plays the role of cohesive tension.
    """
    pi_a = pi_b - 2.0 * pi_s / radius
    chart = geo.sphere(str(float(radius)))
    domain = geo.DomainConfig(chart, outer_radius, slip)
    mats = _materials(mu=viscosities, lam=viscosities, kappa=(1.0, 1.0, 1.0))
    states = {}
    for phase, dens, pi in (("A", rho[0], pi_a), ("B", rho[1], pi_b),
                            ("S", rho[2], pi_s)):
        states[phase] = con.PhaseState(
            rho=field(dens), v=_const_vec(), theta=field(theta),
            pi=field(pi), e=field(internal_energy))
    return SystemState(domain, mats, states)


# ---------------------------------------------------------------------------
# radially expanding composite state

def radial_expansion_system(r0=1.0, rate=0.25, outer_radius=3.0, slip=0,
                            rho0=(1.0, 0.8, 0.5), pressure_offsets=(1.2, 0.9),
                            mu=(0.4, 0.3, 0.2), lam=(0.2, 0.1, 0.3),
                            theta=2.0, exact_energy_A=True):
    """Linearly expanding sphere R(t) = r0 + rate t with consistent bulk flow.

    Exact by construction:
      * continuity in all three phases,
      * momentum in all three phases (accelerations vanish for the linear
        expansion inside; the shell flow is the harmonic radial profile whose
        viscous force vanishes, balanced by a closed-form pressure),
      * every velocity boundary condition, for either slip flag,
      * the outer-boundary viscous traction integral (by radial symmetry),
      * the internal-energy equation in phase A (closed-form e_A), and in
        B / S only up to known sources (uniform internal energies there).

    Pressures: pi_A is the constant pressure_offsets[0]; pi_B follows from the
    shell momentum balance up to the constant pressure_offsets[1]; pi_S is the
    time function required by the surface momentum balance.
    """
    a = float(rate)
    if a == 0.0:
        raise ValueError("use young_laplace_system for the static case")
    r_omega = float(outer_radius)
    c_a, c_b = pressure_offsets
    mu_a, mu_b, mu_s = mu
    lam_a, lam_b, lam_s = lam

    chart = geo.sphere(f"{r0}+{a}*t")
    domain = geo.DomainConfig(chart, r_omega, slip)

    R = field(f"{r0}+{a}*t")               # radius as a function of t
    rho_len = field("sqrt(x1^2+x2^2+x3^2)")  # |x|
    pos = vector("x1", "x2", "x3")

    # phase A: v = (a / R) x, rho ~ R^-3, constant pressure
    v_a = pos * (a / R)
    rho_a = field(rho0[0] * r0**3) / (R * R * R)
    beta = (3.0 * mu_a + 9.0 * lam_a) * a * a
    if exact_energy_A:
        e_a = field(2.0) + (field(beta / (2.0 * a)) * R * R - c_a * R * R * R) \
            * (1.0 / (rho0[0] * r0**3))
    else:
        e_a = field(2.0)
    state_a = con.PhaseState(rho=rho_a, v=v_a, theta=field(theta),
                             pi=field(c_a), e=e_a)

    # phase B: harmonic radial profile v = W(t) (Rw^3 x/|x|^3 - x); it matches
    # the surface speed at R(t), vanishes on the outer boundary, and has
    # spatially uniform divergence -3 W(t)
    denom = field(r_omega**3) - R * R * R
    W = R * R * (a / denom)
    rho_b = field(rho0[1] * (r_omega**3 - r0**3)) / denom
    v_b = VectorField(*(W * (r_omega**3 * pos[i] / (rho_len ** 3) - pos[i])
                        for i in range(3)))
    # Wdot = a^2 R (2 Rw^3 + R^3) / (Rw^3 - R^3)^2
    W_dot = (a * a) * R * (2.0 * r_omega**3 + R * R * R) / (denom * denom)
    # g(rho) = W (Rw^3 / rho^2 - rho); int dt-part: Wdot (-Rw^3/rho - rho^2/2)
    g_b = W * (r_omega**3 / (rho_len * rho_len) - rho_len)
    accel_potential = W_dot * (-(r_omega**3) / rho_len - rho_len * rho_len * 0.5) \
        + g_b * g_b * 0.5
    pi_b = field(c_b) - rho_b * accel_potential
    state_b = con.PhaseState(rho=rho_b, v=v_b, theta=field(theta),
                             pi=pi_b, e=field(2.0))

    # phase S: v = (a / R) x restricted to the surface, rho ~ R^-2; the surface
    # pressure balances the viscous and transmitted normal tractions
    v_s = pos * (a / R)
    rho_s = field(rho0[2] * r0**2) / (R * R)
    traction_a = field((mu_a + 3.0 * lam_a) * a) / R - c_a
    g_prime_at_R = -W * (2.0 * r_omega**3 / (R * R * R) + 1.0)
    pi_b_at_R = field(c_b) - rho_b * (
        W_dot * (-(r_omega**3) / R - R * R * 0.5) + field(a * a * 0.5))
    traction_b = mu_b * g_prime_at_R - 3.0 * lam_b * W - pi_b_at_R
    pi_s = field((mu_s + 2.0 * lam_s) * a) / R \
        + R * (traction_a - traction_b) * 0.5
    state_s = con.PhaseState(rho=rho_s, v=v_s, theta=field(theta),
                             pi=pi_s, e=field(2.0))

    mats = _materials(mu=mu, lam=lam, kappa=(0.7, 0.5, 0.3))
    return SystemState(domain, mats,
                       {"A": state_a, "B": state_b, "S": state_s})


# ---------------------------------------------------------------------------
# expanding ideal-gas state for the thermodynamic checks

def adiabatic_expansion_system(r0=1.0, rate=0.25, outer_radius=4.0, slip=0,
                               c_v=1.0, r_gas=0.7, rho0=(1.0, 0.8, 0.5),
                               mu=(0.3, 0.0, 0.2), lam=(0.1, 0.0, 0.15),
                               kappa=(0.4, 0.4, 0.4), theta0=(2.0, 2.0, 2.0)):
    """Uniform expansion with spatially uniform ideal-gas temperatures.

    Continuity and the internal-energy equation hold exactly in phases A and S
    (viscous heating balanced by adiabatic cooling in closed form); phase B is
    static and uniform. Interface temperature coupling is *not* imposed; the
    thermodynamic-potential identities are pointwise per phase and do not use
    it. Temperatures:

        theta_A = K R^(-3 g) + k2 R^2,  k2 = (3 mu_A + 9 lam_A) a / ((2 + 3 g) c_v m_A)
        theta_S = K R^(-2 g) + k1 R,    k1 = (2 mu_S + 4 lam_S) a / ((1 + 2 g) c_v m_S)

    with g = r_gas / c_v, m_A = rho_A R^3, m_S = rho_S R^2 (both constant).
    """
    a = float(rate)
    gamma = r_gas / c_v
    chart = geo.sphere(f"{r0}+{a}*t")
    domain = geo.DomainConfig(chart, outer_radius, slip)
    R = field(f"{r0}+{a}*t")
    pos = vector("x1", "x2", "x3")
    eos = con.IdealGas(c_v=c_v, r_gas=r_gas)
    mats = _materials(mu=mu, lam=lam, kappa=kappa, eos=(eos, eos, eos))

    m_a = rho0[0] * r0**3
    v_a = pos * (a / R)
    rho_a = field(m_a) / (R * R * R)
    k2 = (3.0 * mu[0] + 9.0 * lam[0]) * a / ((2.0 + 3.0 * gamma) * c_v * m_a)
    theta_a = theta0[0] * R ** (-3.0 * gamma) + k2 * R * R
    state_a = con.PhaseState(rho=rho_a, v=v_a, theta=theta_a)

    state_b = con.PhaseState(rho=field(rho0[1]), v=_const_vec(),
                             theta=field(theta0[1]))

    m_s = rho0[2] * r0**2
    v_s = pos * (a / R)
    rho_s = field(m_s) / (R * R)
    k1 = (2.0 * mu[2] + 4.0 * lam[2]) * a / ((1.0 + 2.0 * gamma) * c_v * m_s)
    theta_s = theta0[2] * R ** (-2.0 * gamma) + k1 * R
    state_s = con.PhaseState(rho=rho_s, v=v_s, theta=theta_s)

    return SystemState(domain, mats,
                       {"A": state_a, "B": state_b, "S": state_s})


# ---------------------------------------------------------------------------
# random manufactured states

# oscillatory arguments are scaled so that products of two random fields stay
# resolvable by the default quadrature over the full domain
_SCALAR_BASIS = ("x1", "x2", "x3", "sin(0.6*x1)", "cos(0.5*x2)", "sin(0.7*x3)",
                 "x1*x2", "x2*x3", "x1*x3", "sin(0.5*x1)*cos(0.5*x3)",
                 "t*x1", "t*sin(0.5*x2)")


def random_scalar(rng, amp=1.0, floor=None):
    """Random smooth field; with a floor, bounded perturbations keep it positive."""
    n = len(_SCALAR_BASIS)
    coeffs = rng.uniform(-amp, amp, size=n)
    if floor is not None:
        # each basis function is bounded by max(1, |x|, t) factors; on the ball
        # |x| <= 3 with |t| <= 1 a crude bound per term is 3, so rescale
        budget = 0.5 * floor / (3.0 * n)
        coeffs = coeffs * (budget / amp)
    f = ScalarField(0.0)
    for c, b in zip(coeffs, _SCALAR_BASIS):
        f = f + float(c) * ScalarField(b)
    if floor is not None:
        f = f + 2.0 * floor
    return f


def random_vector(rng, amp=1.0):
    return VectorField(*(random_scalar(rng, amp) for _ in range(3)))


def random_system(rng, chart=None, outer_radius=3.0, slip=0, amp=0.7,
                  mu_range=(0.0, 2.0), eos=None, outer_flat_theta_at=None):
    """Smooth random state with positive densities and temperatures.

    Residuals are generically nonzero; this is the workhorse for algebraic
    identity checks, which hold for arbitrary smooth fields. With
    ``outer_flat_theta_at`` set to a time, theta_B is rebuilt through the
    shell-flattening map so its normal derivative vanishes exactly on the
    outer boundary (the state-side hypothesis of the thermal variational
    identity).
    """
    chart = chart or geo.sphere("1")
    domain = geo.DomainConfig(chart, outer_radius, slip)
    mats = {}
    states = {}
    for phase in ("A", "B", "S"):
        mu = float(rng.uniform(*mu_range))
        lam = float(rng.uniform(*mu_range))
        kappa = float(rng.uniform(*mu_range))
        mats[phase] = con.PhaseMaterial(phase=phase, mu=mu, lam=lam,
                                        kappa=kappa, eos=eos)
        explicit = eos is None
        theta = random_scalar(rng, amp, floor=1.0)
        if phase == "B" and outer_flat_theta_at is not None:
            from .variation import outer_flat_map
            theta = theta.freeze_time(outer_flat_theta_at).compose(
                outer_flat_map(domain, outer_flat_theta_at))
        states[phase] = con.PhaseState(
            rho=random_scalar(rng, amp, floor=1.0),
            v=random_vector(rng, amp),
            theta=theta,
            pi=random_scalar(rng, amp) if explicit else None,
            e=random_scalar(rng, amp, floor=1.0) if explicit else None)
    return SystemState(domain, mats, states)
