"""Config-driven entry point: verification campaigns and the bubble run.

Scenarios are INI files; every check writes one CSV row and one summary line.
All randomness flows from a single 64-bit seed through a counter-based
generator (numpy Philox), so reruns with the same configuration and seed are
byte-identical (modulo the optional timestamp header line).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bubble as bubble_mod
from . import calculus as calc
from . import constitutive as con
from . import fixtures
from . import geometry as geo
from . import thermo as thermo_mod
from . import residuals as res
from . import variation as vr
from . import verify_integral as vi
from .expr import ExprError, ScalarField, field, parse, vector
from .reporting import (
    SUMMARY_HEADER,
    CheckRecord,
    summary_rows,
    write_csv,
)

SCENARIO_KINDS = ("verify-geometry", "verify-ibp", "verify-transport",
                  "verify-residuals", "verify-variation", "verify-thermo",
                  "bubble")

_PHASES = ("A", "B", "S")

_KNOWN_KEYS = {
    "scenario": {"kind", "seed", "t", "t1", "t2", "time_samples", "variations",
                 "states", "charts", "cap", "outer_radius", "slip"},
    "surface": {"kind", "radius", "a", "b", "c", "base", "eps", "shape"},
    "fields": {f"{name}_{p}{suffix}" for p in _PHASES
               for name, suffix in (("rho", ""), ("theta", ""), ("pi", ""),
                                    ("e", ""), ("v", "_1"), ("v", "_2"),
                                    ("v", "_3"))},
    "quadrature": {"n"},
    "tolerances": None,  # free-form: check-name -> tolerance
    "bubble": {"r0", "u0", "rho_a0", "rho_s0", "pi_ambient", "dt", "t_end",
               "ledger_samples"},
}
for p in _PHASES:
    _KNOWN_KEYS[f"material.{p}"] = {"mu", "lambda", "kappa", "eos", "c_v",
                                    "r_gas", "p"}


class ConfigError(ValueError):
    pass


_DEFAULT_TOLERANCES = {
    "normal_unit": 1e-12, "projection_idempotent": 1e-12,
    "projection_symmetric": 1e-12, "projection_annihilates_normal": 1e-12,
    "projection_trace": 1e-12, "normal_extension": 1e-10,
    "curvature_sphere": 1e-9, "curvature_integral": 1e-8,
    "surface_area": 1e-9, "volume_inner": 1e-9, "volume_shell": 1e-8,
    "outer_area": 1e-9,
    "ibp_bulk_inner": 1e-8, "ibp_bulk_shell": 1e-8, "ibp_surface": 1e-8,
    "transport_inner": 1e-7, "transport_shell": 1e-7,
    "transport_surface": 1e-7, "transport_inner_cap": 1e-7,
    "transport_surface_cap": 1e-7,
    "first_law_internal": 1e-7, "first_law_barotropic": 1e-7,
    "audit_mass": 1e-8, "audit_total_energy": 1e-7,
    "audit_kinetic_energy": 1e-7, "audit_momentum": 1e-7,
    "fixture_residual": 1e-9, "boundary_conditions": 1e-10,
    "identity_conservative_mass": 1e-9,
    "identity_conservative_energy": 1e-9,
    "identity_conservative_momentum": 1e-9,
    "identity_surface_strain_forms": 1e-10,
    "identity_strain_contraction": 1e-10,
    "identity_projection_divergence": 1e-10,
    "identity_stress_power": 1e-10,
    "identity_material_split": 1e-10,
    "gateaux_velocity": 1e-6, "gateaux_temperature": 1e-6,
    "admissibility": 1e-10,
    "thermo_identity": 1e-9, "potential_equation": 1e-7,
    "entropy_production": 1e-12, "material_identity": 1e-9,
    "bubble_mass_A": 1e-10, "bubble_mass_S": 1e-10,
    "bubble_surface_momentum": 1e-8, "bubble_ledger": 1e-6,
    "bubble_stepwise_ledger": 1e-9, "bubble_stationarity": 1e-10,
}


@dataclasses.dataclass
class Scenario:
    kind: str
    seed: int
    n: int
    t: float
    window: tuple
    time_samples: int
    variations: int
    states: int
    cap: float
    outer_radius: float
    slip: int
    charts: list
    surface: dict
    materials: dict
    fields: dict
    bubble: dict
    tolerances: dict

    def tolerance(self, name, scale=1.0):
        tol = self.tolerances.get(name, _DEFAULT_TOLERANCES.get(name))
        if tol is None:
            tol = self.tolerances.get("default", 1e-8)
        return tol * scale


def _parse_config(path, overrides=()):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="ascii") as fh:
            parser.read_file(fh, source=str(path))
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except (configparser.Error, UnicodeDecodeError) as err:
        raise ConfigError(f"config parse error: {err}") from err

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = _KNOWN_KEYS[section]
        if allowed is None:
            continue
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(
                    f"unknown key '{key}' in section [{section}]")

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key and key.split(".", 1)[0] in ("scenario", "surface",
                                                   "quadrature", "bubble",
                                                   "tolerances", "fields") \
                or key.startswith("material."):
            section, name = key.rsplit(".", 1)
        else:
            hits = [s for s in parser.sections()
                    if key in parser[s]] or ["scenario"]
            if len(hits) > 1:
                raise ConfigError(f"override '{key}' is ambiguous: "
                                  f"sections {hits}")
            section, name = hits[0], key
        if section in _KNOWN_KEYS and _KNOWN_KEYS[section] is not None \
                and name not in _KNOWN_KEYS[section]:
            raise ConfigError(f"unknown key '{name}' in section [{section}]")
        if not parser.has_section(section):
            parser.add_section(section)
        parser[section][name] = value
    return parser


def _get_float(section, key, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key '{key}'")
        return default
    try:
        return float(section[key])
    except ValueError as err:
        raise ConfigError(f"key '{key}': {err}") from err


def _build_materials(parser):
    materials = {}
    for p in _PHASES:
        name = f"material.{p}"
        section = parser[name] if parser.has_section(name) else {}
        eos_kind = section.get("eos", "none")
        if eos_kind == "ideal":
            eos = con.IdealGas(c_v=_get_float(section, "c_v", 1.0),
                               r_gas=_get_float(section, "r_gas", 1.0))
        elif eos_kind == "barotropic":
            if "p" not in section:
                raise ConfigError(f"[{name}]: barotropic EOS needs key 'p'")
            eos = con.Barotropic(section["p"])
        elif eos_kind == "none":
            eos = None
        else:
            raise ConfigError(f"[{name}]: unknown eos '{eos_kind}'")
        materials[p] = con.PhaseMaterial(
            phase=p, mu=_get_float(section, "mu", 0.0),
            lam=_get_float(section, "lambda", 0.0),
            kappa=_get_float(section, "kappa", 0.0), eos=eos)
    return materials


def _build_surface(section):
    kind = section.get("kind", "sphere")
    try:
        if kind == "sphere":
            return geo.sphere(section.get("radius", "1"))
        if kind == "ellipsoid":
            return geo.ellipsoid(_get_float(section, "a", 1.0),
                                 _get_float(section, "b", 1.0),
                                 _get_float(section, "c", 2.0))
        if kind == "perturbed_sphere":
            return geo.perturbed_sphere(section.get("base", "1"),
                                        _get_float(section, "eps", 0.1),
                                        section.get("shape", "(3*x3^2-1)/2"))
    except (geo.GeometryError, ExprError) as err:
        raise ConfigError(f"[surface]: {err}") from err
    raise ConfigError(f"[surface]: unknown kind '{kind}'")


def _parse_fields(section):
    out = {}
    for key, text in section.items():
        try:
            out[key] = parse(text)
        except ExprError as err:
            raise ConfigError(f"[fields] {key}: {err}") from err
    return out


def load_scenario(path, overrides=(), seed_override=None, tol_scale=1.0):
    parser = _parse_config(path, overrides)
    if not parser.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    sc = parser["scenario"]
    kind = sc.get("kind")
    if kind not in SCENARIO_KINDS:
        raise ConfigError(f"unknown scenario kind '{kind}'")
    n = int(_get_float(parser["quadrature"] if parser.has_section("quadrature")
                       else {}, "n", 24))
    if n < 8:
        raise ConfigError("quadrature n must be at least 8")
    tolerances = {}
    if parser.has_section("tolerances"):
        for key, value in parser["tolerances"].items():
            tol = float(value)
            if tol <= 0:
                raise ConfigError(f"tolerance '{key}' must be positive")
            tolerances[key] = tol
    charts = [c.strip() for c in sc.get("charts", "").split(",") if c.strip()]
    for name in charts:
        if name not in ("sphere", "ellipsoid", "perturbed_sphere"):
            raise ConfigError(f"unknown chart '{name}' in scenario.charts")
    seed = int(sc.get("seed", "20240809"))
    if seed_override is not None:
        seed = seed_override
    scenario = Scenario(
        kind=kind, seed=seed, n=n,
        t=_get_float(sc, "t", 0.0),
        window=(_get_float(sc, "t1", 0.1), _get_float(sc, "t2", 0.6)),
        time_samples=int(_get_float(sc, "time_samples", 10)),
        variations=int(_get_float(sc, "variations", 20)),
        states=int(_get_float(sc, "states", 50)),
        cap=_get_float(sc, "cap", 1.1),
        outer_radius=_get_float(sc, "outer_radius", 3.0),
        slip=int(_get_float(sc, "slip", 0)),
        charts=charts,
        surface=dict(parser["surface"]) if parser.has_section("surface") else {},
        materials=_build_materials(parser),
        fields=_parse_fields(parser["fields"]) if parser.has_section("fields")
        else {},
        bubble=dict(parser["bubble"]) if parser.has_section("bubble") else {},
        tolerances=tolerances)
    scenario.tolerances = dict(tolerances)
    scenario._tol_scale = tol_scale
    return scenario


def _standard_charts(names, outer_radius):
    built = []
    for name in names:
        if name == "sphere":
            built.append(("sphere", geo.sphere("1"), outer_radius))
        elif name == "ellipsoid":
            built.append(("ellipsoid", geo.ellipsoid(1, 1, 2),
                          max(outer_radius, 4.0)))
        else:
            built.append(("perturbed_sphere",
                          geo.perturbed_sphere("1", 0.15,
                                               "(3*x3^2-1)/2 + 0.3*x1*x2"),
                          outer_radius))
    return built


def _scenario_charts(scenario, defaults):
    if scenario.surface:
        chart = _build_surface(scenario.surface)
        return [(chart.kind, chart, scenario.outer_radius)]
    names = scenario.charts or list(defaults)
    return _standard_charts(names, scenario.outer_radius)


# ---------------------------------------------------------------------------
# campaigns: each yields (csv_name, header, rows, records)

def _campaign_geometry(scenario, rng):
    tol = lambda name: scenario.tolerance(name, scenario._tol_scale)
    rows = []
    records = []
    n = scenario.n
    t = scenario.t

    def check(chart_name, name, gap):
        tolerance = tol(name)
        rows.append([name, chart_name, n, gap, tolerance, gap <= tolerance])
        records.append(CheckRecord(scenario.kind, name, n, gap, tolerance))

    for chart_name, chart, outer in _scenario_charts(
            scenario, ("sphere", "ellipsoid", "perturbed_sphere")):
        config = geo.DomainConfig(chart, outer, scenario.slip)
        grid = geo.surface_grid(chart, t, n)
        P = chart.projection(grid.u, grid.v, t)
        check(chart_name, "normal_unit",
              float(np.max(np.abs(np.linalg.norm(grid.n, axis=0) - 1.0))))
        PP = np.einsum("ijk,jlk->ilk", P, P)
        check(chart_name, "projection_idempotent", float(np.max(np.abs(PP - P))))
        check(chart_name, "projection_symmetric",
              float(np.max(np.abs(P - np.swapaxes(P, 0, 1)))))
        check(chart_name, "projection_annihilates_normal",
              float(np.max(np.abs(np.einsum("ijk,jk->ik", P, grid.n)))))
        check(chart_name, "projection_trace",
              float(np.max(np.abs(np.einsum("iik->k", P) - 2.0))))
        amb = chart.normal_field.at_points(grid.x, t)
        check(chart_name, "normal_extension", float(np.max(np.abs(amb - grid.n))))
        H = chart.mean_curvature(grid.u, grid.v, t)
        hn = [math.fsum((grid.w * H * grid.n[i]).tolist()) for i in range(3)]
        check(chart_name, "curvature_integral", float(np.max(np.abs(hn))))
        ones = lambda x1, x2, x3, tt: np.ones_like(x1)
        if chart.kind == "sphere":
            radius = chart.radial_at(0.5, 0.5, t)[0]
            check(chart_name, "curvature_sphere",
                  float(np.max(np.abs(H + 2.0 / radius))))
            check(chart_name, "surface_area",
                  abs(geo.integrate_surface(chart, ones, t, n)
                      - 4 * math.pi * radius**2))
            check(chart_name, "volume_inner",
                  abs(geo.integrate_volume(config, "A", ones, t, n)
                      - 4 * math.pi * radius**3 / 3))
            check(chart_name, "volume_shell",
                  abs(geo.integrate_volume(config, "B", ones, t, n)
                      - 4 * math.pi * (outer**3 - radius**3) / 3))
            check(chart_name, "outer_area",
                  abs(geo.integrate_outer_boundary(config, ones, t, n)
                      - 4 * math.pi * outer**2))
        elif chart.kind == "ellipsoid":
            a = chart.params["a"]
            c = chart.params["c"]
            ecc = math.sqrt(1 - a * a / (c * c))
            exact = 2 * math.pi * a * a * (1 + c * math.asin(ecc) / (a * ecc))
            check(chart_name, "surface_area",
                  abs(geo.integrate_surface(chart, ones, t, n) - exact))
            check(chart_name, "volume_inner",
                  abs(geo.integrate_volume(config, "A", ones, t, n)
                      - 4 * math.pi * a * a * c / 3))
    return "geometry.csv", ["check", "chart", "n", "gap", "tol", "pass"], \
        rows, records


_IBP_CORPUS = [
    ("x1", "1", 0), ("x1*x2", "x3", 1), ("x3^2", "x1+x2", 2),
    ("sin(x1)", "x2", 0), ("x2*x3", "cos(x3)", 2), ("x1^2-x3", "x1*x3", 1),
    ("1", "1", 0), ("x3", "x3", 2), ("x1+x2+x3", "x1*x2*x3", 0),
    ("cos(x2)", "sin(x3)", 1), ("x2^2", "x2", 1), ("x1*x3", "x1*x3", 2),
]

_IBP_KINDS = {"bulkA": "ibp_bulk_inner", "bulkB": "ibp_bulk_shell",
              "surface": "ibp_surface"}


def _campaign_ibp(scenario, rng):
    rows = []
    records = []
    t = scenario.t
    for chart_name, chart, outer in _scenario_charts(
            scenario, ("sphere", "ellipsoid", "perturbed_sphere")):
        config = geo.DomainConfig(chart, outer, scenario.slip)
        for kind, check_name in _IBP_KINDS.items():
            tolerance = scenario.tolerance(check_name, scenario._tol_scale)
            for f_src, g_src, j in _IBP_CORPUS:
                out = vi.ibp_check(config, kind, field(f_src), field(g_src),
                                   j, t, scenario.n)
                label = f"{check_name}[{chart_name};{f_src};{g_src};{j}]"
                rows.append([label, t, t, out.lhs, out.rhs, out.gap,
                             tolerance, out.gap <= tolerance])
                records.append(CheckRecord(scenario.kind, check_name,
                                           scenario.n, out.gap, tolerance))
    return "integral_checks.csv", \
        ["law", "t1", "t2", "lhs", "rhs", "gap", "tol", "pass"], rows, records


def _campaign_transport(scenario, rng):
    rows = []
    records = []
    t1, t2 = scenario.window
    tm = 0.5 * (t1 + t2)
    n = scenario.n

    def check(name, label, lhs, rhs, gap):
        tolerance = scenario.tolerance(name, scenario._tol_scale)
        rows.append([label, t1, t2, lhs, rhs, gap, tolerance,
                     gap <= tolerance])
        records.append(CheckRecord(scenario.kind, name, n, gap, tolerance))

    expansion = fixtures.radial_expansion_system(slip=1)
    integrands = (field("1"), field("1+x1^2+x3*t"))
    region_names = {"A": "transport_inner", "B": "transport_shell",
                    "S": "transport_surface"}
    for region, name in region_names.items():
        for k, f in enumerate(integrands):
            out = vi.transport_check(expansion.domain, region, f,
                                     expansion.state(region).v, tm, n)
            check(name, f"{name}[f{k}]", out.lhs, out.rhs, out.gap)
    for region in ("A", "S"):
        out = vi.transport_check(expansion.domain, region, integrands[1],
                                 expansion.state(region).v, tm, n,
                                 cap=scenario.cap)
        name = region_names[region] + "_cap"
        check(name, name, out.lhs, out.rhs, out.gap)

    for result in vi.first_law_check(expansion, "internal", (t1, t2),
                                     n=n).values():
        check("first_law_internal", f"first_law_internal[{result.phase}]",
              0.0, 0.0, result.worst)
    eos = con.Barotropic("0.5*rho^2")
    barotropic = res.SystemState(
        expansion.domain,
        {p: dataclasses.replace(expansion.material(p), eos=eos)
         for p in _PHASES},
        expansion.states)
    for result in vi.first_law_check(barotropic, "barotropic", (t1, t2),
                                     n=n).values():
        check("first_law_barotropic", f"first_law_barotropic[{result.phase}]",
              0.0, 0.0, result.worst)

    static = fixtures.young_laplace_system(slip=1)
    for sys_name, sys in (("expansion", expansion), ("static", static)):
        for law in vi.LAWS:
            out = vi.conservation_audit(sys, law, t1, t2, n=n,
                                        samples=scenario.time_samples)
            check(f"audit_{law}", f"audit_{law}[{sys_name}]",
                  out.lhs, out.rhs, out.gap)
    return "integral_checks.csv", \
        ["law", "t1", "t2", "lhs", "rhs", "gap", "tol", "pass"], rows, records


def _campaign_residuals(scenario, rng):
    rows = []
    records = []
    n = min(scenario.n, 16)
    t = scenario.t if scenario.t else 0.4

    def check(name, equation, phase, norm_inf, norm_l2, node_u, node_v, tt):
        tolerance = scenario.tolerance(name, scenario._tol_scale)
        rows.append([equation, phase, norm_inf, norm_l2, node_u, node_v, tt])
        records.append(CheckRecord(scenario.kind, name, n, norm_inf, tolerance))

    claimed = {
        "young_laplace": (fixtures.young_laplace_system(),
                          {("mass", "A"), ("mass", "B"), ("mass", "S"),
                           ("internal_energy", "A"), ("internal_energy", "B"),
                           ("internal_energy", "S"), ("momentum", "A"),
                           ("momentum", "B"), ("momentum", "S")}),
        "radial_expansion": (fixtures.radial_expansion_system(slip=scenario.slip),
                             {("mass", "A"), ("mass", "B"), ("mass", "S"),
                              ("internal_energy", "A"), ("momentum", "A"),
                              ("momentum", "B"), ("momentum", "S")}),
        "adiabatic_expansion": (fixtures.adiabatic_expansion_system(),
                                {("mass", "A"), ("mass", "B"), ("mass", "S"),
                                 ("internal_energy", "A"),
                                 ("internal_energy", "B"),
                                 ("internal_energy", "S")}),
    }
    for fixture_name, (sys, claims) in claimed.items():
        for rep in res.residual_report(sys, t, n):
            if (rep.equation, rep.phase) in claims:
                check("fixture_residual", f"{fixture_name}:{rep.equation}",
                      rep.phase, rep.norm_inf, rep.norm_l2, rep.node_u,
                      rep.node_v, rep.t)
        if fixture_name != "adiabatic_expansion":  # temperatures uncoupled there
            worst = max(res.boundary_residuals(sys, t, n).values())
            check("boundary_conditions", f"{fixture_name}:boundary", "-",
                  worst, worst, 0.0, 0.0, t)

    # algebraic identities on random states
    charts = _scenario_charts(scenario, ("sphere", "perturbed_sphere"))
    for k in range(scenario.states):
        chart_name, chart, outer = charts[k % len(charts)]
        sys = fixtures.random_system(rng, chart=chart, outer_radius=outer,
                                     slip=k % 2)
        g = geo.surface_grid(chart, t, 8)
        pts = rng.uniform(-0.45, 0.45, size=(3, 25))
        gaps = _identity_gaps(sys, g, pts, t)
        for name, gap in gaps.items():
            check(name, f"{name}[{k}]", chart_name, gap, gap, 0.0, 0.0, t)
    return "residuals.csv", res.CSV_HEADER, rows, records


def _identity_gaps(sys, g, pts, t):
    """Max-node gaps of the pointwise algebraic identities on one state."""
    out = {}
    chart = sys.chart

    # conservative vs material forms (with the exact correction terms)
    for phase, x in (("A", pts), ("S", g.x)):
        st = sys.state(phase)
        vvals = st.v.at_points(x, t)
        cont = res.continuity_residual(sys, phase).at_points(x, t)
        mom = res.momentum_residual(sys, phase).at_points(x, t)
        en = res.energy_residual(sys, phase).at_points(x, t)
        cons = res.conservative_residuals(sys, phase)
        scale = 1.0 + float(np.max(np.abs(cons["momentum"].at_points(x, t))))
        out.setdefault("identity_conservative_mass", 0.0)
        out["identity_conservative_mass"] = max(
            out["identity_conservative_mass"],
            float(np.max(np.abs(cons["mass"].at_points(x, t) - cont))))
        gap_m = cons["momentum"].at_points(x, t) - mom - vvals * cont
        out.setdefault("identity_conservative_momentum", 0.0)
        out["identity_conservative_momentum"] = max(
            out["identity_conservative_momentum"],
            float(np.max(np.abs(gap_m))) / scale)
        phi = con.internal_energy_field(sys.material(phase), st).at_points(x, t) \
            + 0.5 * np.einsum("ik,ik->k", vvals, vvals)
        gap_e = cons["energy"].at_points(x, t) - en \
            - np.einsum("ik,ik->k", vvals, mom) - phi * cont
        out.setdefault("identity_conservative_energy", 0.0)
        out["identity_conservative_energy"] = max(
            out["identity_conservative_energy"],
            float(np.max(np.abs(gap_e))) / scale)

    # surface strain forms and contractions
    st = sys.state("S")
    D1 = calc.strain_surface(st.v, chart, g.u, g.v, t)
    JG = calc.surface_gradient_matrix(st.v, chart, g.u, g.v, t)
    P = chart.projection(g.u, g.v, t)
    S = 0.5 * (JG + np.swapaxes(JG, 0, 1))
    D2 = np.einsum("ilk,lmk,mjk->ijk", P, S, P)
    out["identity_surface_strain_forms"] = float(np.max(np.abs(D1 - D2)))
    dv = calc.surface_divergence(st.v, chart, g.u, g.v, t)
    out["identity_strain_contraction"] = float(np.max(np.abs(
        np.einsum("ijk,ijk->k", P, D1) - dv)))

    # div_G (pi P) = grad_G pi + pi H n
    pi = con.pressure_field(sys.material("S"), st)
    Pf = calc.projection_field(chart)
    T = calc.TensorField([[pi * Pf.entry(i, j) for j in range(3)]
                          for i in range(3)])
    lhs = calc.surface_div_tensor(T, chart, g.u, g.v, t)
    H = chart.mean_curvature(g.u, g.v, t)
    rhs = calc.tangential_grad(pi, chart, g.u, g.v, t) \
        + pi.at_points(g.x, t) * H * g.n
    out["identity_projection_divergence"] = float(np.max(np.abs(lhs - rhs)))

    # stress power: T : D = e_D - e_W, bulk and surface
    gap = 0.0
    for phase, x in (("A", pts), ("S", g.x)):
        stp = sys.state(phase)
        mat = sys.material(phase)
        if phase == "S":
            Tn = con.stress(mat, stp, chart)
            Dn = calc.strain_surface_field(stp.v, chart)
            e_d = con.dissipation_density(mat, stp, chart)
            e_w = con.work_density(mat, stp, chart)
        else:
            Tn = con.stress(mat, stp)
            Dn = calc.strain_bulk(stp.v)
            e_d = con.dissipation_density(mat, stp)
            e_w = con.work_density(mat, stp)
        lhs = Tn.frobenius(Dn).at_points(x, t)
        rhs = (e_d - e_w).at_points(x, t)
        gap = max(gap, float(np.max(np.abs(lhs - rhs)))
                  / (1.0 + float(np.max(np.abs(rhs)))))
    out["identity_stress_power"] = gap

    # D_t^S f = D_t^N f + (v . grad_G) f
    f = fixtures.random_scalar(np.random.Generator(np.random.Philox(1)), 0.5)
    full = calc.material_derivative(f, st.v).at_points(g.x, t)
    nt = calc.normal_time_derivative(f, st.v, chart, g.u, g.v, t)
    tg = calc.tangential_grad(f, chart, g.u, g.v, t)
    split = nt + np.einsum("ik,ik->k", st.v.at_points(g.x, t), tg)
    out["identity_material_split"] = float(np.max(np.abs(full - split)))
    return out


def _campaign_variation(scenario, rng):
    rows = []
    records = []
    n = scenario.n
    t = scenario.t

    charts = _scenario_charts(scenario, ("sphere", "perturbed_sphere"))
    tol_v = scenario.tolerance("gateaux_velocity", scenario._tol_scale)
    tol_t = scenario.tolerance("gateaux_temperature", scenario._tol_scale)
    tol_a = scenario.tolerance("admissibility", scenario._tol_scale)
    for chart_name, chart, outer in charts:
        for r in (0, 1):
            sys = fixtures.random_system(rng, chart=chart, outer_radius=outer,
                                         slip=r, outer_flat_theta_at=t)
            for k in range(scenario.variations):
                seeds_phi = {p: fixtures.random_vector(rng) for p in _PHASES}
                seeds_psi = {p: fixtures.random_scalar(rng) for p in _PHASES}
                var = vr.make_admissible(sys.domain, r, t, seeds_phi, seeds_psi)
                var_id = f"{chart_name}:r{r}:{k}"
                adm = max(vr.admissibility_residuals(var, sys.domain).values())
                rows.append(["admissibility", r, var_id, adm, 0.0, adm,
                             adm <= tol_a])
                records.append(CheckRecord(scenario.kind, "admissibility", n,
                                           adm, tol_a))
                out = vr.gateaux_gap_velocity(sys, var, t, n=n)
                rows.append(["velocity_forces", r, var_id, out.side_fd,
                             out.side_force, out.rel_gap,
                             out.rel_gap <= tol_v])
                records.append(CheckRecord(scenario.kind, "gateaux_velocity",
                                           n, out.rel_gap, tol_v))
                out = vr.gateaux_gap_temperature(sys, var, t, n=n)
                rows.append(["thermal_forces", r, var_id, out.side_fd,
                             out.side_force, out.rel_gap,
                             out.rel_gap <= tol_t])
                records.append(CheckRecord(scenario.kind,
                                           "gateaux_temperature", n,
                                           out.rel_gap, tol_t))
    return "variation.csv", \
        ["theorem", "r", "variation_id", "side_a", "side_b", "gap", "pass"], \
        rows, records


def _campaign_thermo(scenario, rng):
    rows = []
    records = []
    n = min(scenario.n, 16)
    t = scenario.t if scenario.t else 0.4

    def check(name, identity, phase, gap, tt):
        tolerance = scenario.tolerance(name, scenario._tol_scale)
        rows.append([identity, phase, 0.0, 0.0, tt, gap, gap <= tolerance])
        records.append(CheckRecord(scenario.kind, name, n, gap, tolerance))

    sys = fixtures.adiabatic_expansion_system()
    g = geo.surface_grid(sys.chart, t, n)
    pts = {"A": rng.uniform(-0.4, 0.4, size=(3, 30)),
           "B": 2.0 + rng.uniform(-0.3, 0.3, size=(3, 30)),
           "S": g.x}
    for phase in _PHASES:
        gap = float(np.max(thermo_mod.thermodynamic_identity_gap(
            sys, phase, pts[phase], t)))
        check("thermo_identity", "gibbs_relation", phase, gap, t)
        for which in thermo_mod.POTENTIAL_EQUATIONS:
            out = thermo_mod.potential_equation_gap(sys, which, phase,
                                                    pts[phase], t)
            check("potential_equation", which, phase, out.gap, t)
        gaps = thermo_mod.material_potential_identities(sys, phase,
                                                        pts[phase], t)
        check("material_identity", "material_forms", phase,
              max(gaps.values()), t)

    ideal = con.IdealGas(c_v=1.0, r_gas=0.7)
    worst = 0.0
    for k in range(scenario.states * 20):
        rsys = fixtures.random_system(rng, eos=ideal, mu_range=(0.0, 2.0))
        xpts = rng.uniform(-0.5, 0.5, size=(3, 10))
        for phase, x in (("A", xpts), ("S", geo.surface_grid(rsys.chart, t, 6).x)):
            production = thermo_mod.entropy_production(rsys, phase, x, t)
            worst = max(worst, float(-np.min(production)))
    check("entropy_production", "entropy_production_min", "-", max(worst, 0.0), t)
    return "thermo.csv", \
        ["identity", "phase", "node_u", "node_v", "t", "gap", "pass"], \
        rows, records


def _campaign_bubble(scenario, rng):
    params = bubble_mod.BubbleParams(
        material_A=scenario.materials["A"],
        material_S=scenario.materials["S"],
        pi_ambient=float(scenario.bubble.get("pi_ambient", 1.0)))
    state0 = bubble_mod.BubbleState(
        R=float(scenario.bubble.get("r0", 1.0)),
        U=float(scenario.bubble.get("u0", 0.0)),
        rho_A=float(scenario.bubble.get("rho_a0", 1.0)),
        rho_S=float(scenario.bubble.get("rho_s0", 0.5)))
    dt = float(scenario.bubble.get("dt", 1e-3))
    t_end = float(scenario.bubble.get("t_end", 5.0))
    traj = bubble_mod.integrate(params, state0, t_end, dt)
    report = bubble_mod.consistency_check(
        params, traj, n=max(8, min(scenario.n, 16)),
        ledger_samples=int(scenario.bubble.get("ledger_samples", 1000)))

    records = []

    def check(name, gap):
        tolerance = scenario.tolerance(name, scenario._tol_scale)
        records.append(CheckRecord(scenario.kind, name, scenario.n, gap,
                                   tolerance))

    check("bubble_mass_A", report["mass_A_drift"])
    check("bubble_mass_S", report["mass_S_drift"])
    check("bubble_surface_momentum", report["surface_momentum_residual"])
    check("bubble_ledger", report["ledger_gap_relative"])
    check("bubble_stepwise_ledger", report["stepwise_gap_relative"])
    if traj.halted:
        records.append(CheckRecord(scenario.kind, "bubble_completed",
                                   scenario.n, 1.0, 0.5))
    return "trajectory.csv", bubble_mod.Trajectory.CSV_HEADER, \
        list(traj.rows()), records


_CAMPAIGNS = {
    "verify-geometry": _campaign_geometry,
    "verify-ibp": _campaign_ibp,
    "verify-transport": _campaign_transport,
    "verify-residuals": _campaign_residuals,
    "verify-variation": _campaign_variation,
    "verify-thermo": _campaign_thermo,
    "bubble": _campaign_bubble,
}


def run_scenario(scenario, out_dir, timestamp=True, jobs=1):
    rng = np.random.Generator(np.random.Philox(scenario.seed))
    csv_name, header, rows, records = _CAMPAIGNS[scenario.kind](scenario, rng)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / csv_name, header, rows, seed=scenario.seed,
              timestamp=timestamp)
    return records


# ---------------------------------------------------------------------------
# command line

def _add_common(sub):
    sub.add_argument("configs", nargs="+", help="scenario configuration files")
    sub.add_argument("--out", default="reports", help="output directory")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--tol-scale", type=float, default=1.0)
    sub.add_argument("--no-timestamp", action="store_true")
    sub.add_argument("--override", action="append", default=[],
                     metavar="KEY=VALUE")


def _finish(records, out_dir, timestamp):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "summary.csv", SUMMARY_HEADER, summary_rows(records),
              timestamp=timestamp)
    failures = [r for r in records if not r.passed]
    for rec in failures:
        print(f"FAIL {rec.scenario}:{rec.check} gap={rec.gap:.3e} "
              f"tol={rec.tolerance:.1e}", file=sys.stderr)
    print(f"{len(records) - len(failures)} checks passed, "
          f"{len(failures)} failed")
    return 0 if not failures else 1


def _load_all(args, kinds):
    scenarios = []
    for path in args.configs:
        scenario = load_scenario(path, overrides=args.override,
                                 seed_override=args.seed,
                                 tol_scale=args.tol_scale)
        if scenario.kind not in kinds:
            raise ConfigError(
                f"{path}: scenario kind '{scenario.kind}' is not valid here")
        scenarios.append((path, scenario))
    return scenarios


def _cmd_verify(args):
    scenarios = _load_all(args, [k for k in SCENARIO_KINDS if k != "bubble"])
    records = []
    if args.jobs > 1 and len(scenarios) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = [(i, pool.submit(run_scenario, sc, args.out,
                                       not args.no_timestamp))
                       for i, (_, sc) in enumerate(scenarios)]
            collected = {i: f.result() for i, f in futures}
        for i in sorted(collected):
            records.extend(collected[i])
    else:
        for _, sc in scenarios:
            records.extend(run_scenario(sc, args.out, not args.no_timestamp))
    return _finish(records, args.out, not args.no_timestamp)


def _cmd_bubble(args):
    scenarios = _load_all(args, ["bubble"])
    records = []
    for _, sc in scenarios:
        records.extend(run_scenario(sc, args.out, not args.no_timestamp))
    return _finish(records, args.out, not args.no_timestamp)


def _cmd_ladder(args):
    resolutions = [int(x) for x in args.N.split(",")]
    scenarios = _load_all(args, [k for k in SCENARIO_KINDS if k != "bubble"])
    rows = []
    records = []
    for _, sc in scenarios:
        per_n = []
        for n in resolutions:
            run = dataclasses.replace(sc, n=n)
            run._tol_scale = sc._tol_scale
            recs = run_scenario(run, args.out, not args.no_timestamp)
            worst = {}
            for rec in recs:
                worst[rec.check] = max(worst.get(rec.check, 0.0), rec.gap)
            per_n.append((n, worst))
            records.extend(recs if n == max(resolutions) else [])
        checks = sorted(per_n[0][1])
        for check in checks:
            for n, worst in per_n:
                rows.append([sc.kind, check, n, worst[check]])
        print(f"convergence ladder for {sc.kind}:")
        for check in checks:
            gaps = [worst[check] for _, worst in per_n]
            orders = []
            for (n1, g1), (n2, g2) in zip(zip(resolutions, gaps),
                                          zip(resolutions[1:], gaps[1:])):
                if g1 > 0 and g2 > 0:
                    orders.append(math.log(g1 / g2) / math.log(n2 / n1))
            order_txt = ", ".join(f"{o:.1f}" for o in orders) or "exact"
            gap_txt = " ".join(f"{g:.2e}" for g in gaps)
            print(f"  {check:36s} gaps: {gap_txt}  empirical orders: {order_txt}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "ladder.csv", ["scenario", "check", "N", "gap"], rows,
              timestamp=not args.no_timestamp)
    return _finish(records, args.out, not args.no_timestamp)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="filmflow",
        description="verification campaigns for multiphase bulk/surface flow")
    sub = parser.add_subparsers(dest="command", required=True)
    p_verify = sub.add_parser("verify", help="run verification scenarios")
    _add_common(p_verify)
    p_bubble = sub.add_parser("bubble", help="run the bubble simulation")
    _add_common(p_bubble)
    p_ladder = sub.add_parser("ladder", help="convergence ladder over N")
    _add_common(p_ladder)
    p_ladder.add_argument("--N", default="8,12,16,24",
                          help="comma-separated resolutions")
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "bubble":
            return _cmd_bubble(args)
        return _cmd_ladder(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
