"""Named verification suites and the default configurations they run on."""
from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable

import numpy as np

from .analysis import benchmarks
from .analysis.constants import moser_constants
from .analysis.experiments import (
    ExperimentReport,
    aggregate,
    calibrate_max_principle,
    comparison_experiment,
    max_principle_experiment,
    run_ensemble,
    skorokhod_experiment,
)
from .analysis.ito import ito_energy_residual, positive_part_ito_residual
from .config import RunConfig, build_comparison_pair, build_problem, loads
from .grid import Domain, assemble_operator, estimate_sobolev_constant
from .model import DominatingData, build_shifted, contraction_check
from .noise import BrownianPath, coarsen
from .norms import (
    SpaceTimeField,
    check_interpolation_bound,
    inner,
    mixed_norm,
    theta_norm,
    theta_star_norm_upper,
)
from .solver import SolverConfig, noise_for, solve_paths

SUITES = ("constants", "norms", "skorokhod", "ito", "comparison", "max-principle")
PEN_EPS = (1e-1, 1e-2, 1e-3, 1e-4)
CALIBRATION_SEED0 = 10_000

DEFAULT_TEXT = {
    "benchmark": """
grid.n = 129
init.sin = 1.0
obstacle.amp = 0.5
solver.dt = 1e-4
solver.T = 0.2
experiment.kind = benchmark
experiment.seeds = 1
""",
    "ito_benchmark": f"""
grid.n = 65
init.sin = 1.0
obstacle.amp = 0.5
obstacle.dominator = sine
obstacle.dom_s0_amp = 0.5
obstacle.dom_f_amp = {0.5 * math.pi**2!r}
solver.dt = 2e-3
solver.T = 0.2
experiment.seeds = 1
experiment.halvings = 3
""",
    "linear_stochastic": """
grid.n = 33
coeffs.f_sin = 1.0
coeffs.f_y = -0.5
coeffs.g_sin = 0.2
coeffs.h_sin = 0.5
init.sin = 0.5
obstacle.amp = -0.2
obstacle.dominator = zero
solver.dt = 1e-3
solver.T = 0.2
solver.J = 4
experiment.seeds = 64
experiment.halvings = 3
""",
    "comparison": """
grid.n = 33
coeffs.f_sin = 1.0
coeffs.g_sin = 0.2
coeffs.h_sin = 0.5
init.sin = 0.5
obstacle.amp = -0.2
solver.dt = 1e-3
solver.T = 0.2
solver.J = 4
experiment.seeds = 100
comparison.xi_shift = 0.02
comparison.f_shift = 0.1
comparison.obstacle_shift = 0.01
""",
    "comparison_nonlinear": """
grid.n = 33
coeffs.f_sin = 1.0
coeffs.f_y = -0.3
coeffs.f_nl = 0.2
coeffs.g_sin = 0.2
coeffs.h_sin = 0.5
init.sin = 0.5
obstacle.amp = -0.2
solver.dt = 1e-3
solver.T = 0.2
solver.J = 4
experiment.seeds = 100
comparison.xi_shift = 0.02
comparison.f_shift = 0.1
comparison.obstacle_shift = 0.01
""",
    "max_principle": """
grid.n = 33
coeffs.f_const = 0.5
coeffs.f_sin = 2.0
coeffs.f_y = -0.5
coeffs.g_sin = 0.3
coeffs.h_sin = 0.4
init.const = 0.2
init.sin = 0.5
obstacle.kind = inactive
boundary.enabled = true
boundary.m = 0.2
boundary.b = 0.1
boundary.sigma = 0.1
solver.dt = 1e-3
solver.T = 0.2
solver.J = 4
experiment.seeds = 100
experiment.p = 2.0
experiment.theta = 0.5
experiment.factor = 3.542685019302396
experiment.scale = 4.0
""",
    "max_principle_dominated": """
grid.n = 33
coeffs.f_const = 0.2
coeffs.f_sin = 0.2
coeffs.h_const = 0.3
init.const = 0.75
init.sin = 0.1
obstacle.amp = 0.2
obstacle.offset = -1.0
obstacle.dominator = zero
boundary.enabled = true
boundary.m = 1.0
boundary.b = 0.5
boundary.sigma = 0.3
solver.dt = 1e-3
solver.T = 0.2
solver.J = 4
experiment.seeds = 100
experiment.exact_zero = true
""",
}

# suite -> default configs used when no config is given
SUITE_DEFAULTS = {
    "constants": (),
    "norms": (),
    "skorokhod": ("benchmark", "linear_stochastic"),
    "ito": ("ito_benchmark", "linear_stochastic"),
    "comparison": ("comparison", "comparison_nonlinear"),
    "max-principle": ("max_principle", "max_principle_dominated"),
}


def default_config(name: str) -> RunConfig:
    return loads(DEFAULT_TEXT[name])


# constants

def _gamma_direct(lam, alpha, beta, eps, l):
    return lam - alpha - eps * l / (l - 1) - (1 + eps) * beta * beta / 2


def _tau_direct(g, beta, eps, l):
    return 1 - 6 * eps - 6 * math.sqrt((1 + eps) * l / (l - 1) * beta * beta / g)


def constants_suite(cfg: RunConfig | None = None, **_) -> list[ExperimentReport]:
    rep = ExperimentReport("constants")
    tol = 1e-12
    cases = [
        ("gamma_case_a", moser_constants(1.0, 0.1, 0.2, 1.0, 0.05).gamma, 0.779),
        ("gamma_case_b", moser_constants(1.0, 0.1, 0.01, 1.0, 0.01).gamma, 0.8799495),
        ("tau_case_b", moser_constants(1.0, 0.1, 0.01, 1.0, 0.01).tau,
         _tau_direct(_gamma_direct(1.0, 0.1, 0.01, 0.01, 2.0), 0.01, 0.01, 2.0)),
        ("sigma_d3", moser_constants(1.0, 0.0, 0.0, 1.0, 0.1, theta=0.5, d=3).sigma, 4 / 3),
    ]
    for name, got, want in cases:
        err = abs(got - want)
        rep.rows.append({"seed": len(rep.rows), "case": name, "value": got, "expected": want, "abs_error": err})
        rep.add_check(name, err, tol, err <= tol)
    tau_b = moser_constants(1.0, 0.1, 0.01, 1.0, 0.01).tau
    rep.add_check("tau_case_b_rounded", abs(tau_b - 0.8491), 5e-5, abs(tau_b - 0.8491) <= 5e-5)

    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(20):
        C, a, b, lam = rng.uniform(0, 1, 3).tolist() + [float(rng.uniform(0.05, 2))]
        weak = 2 * a + b * b < 2 * lam
        strong = a + b * b / 2 + 72 * b * b < lam
        mismatches += contraction_check(C, a, b, lam) != (weak, strong)
    rep.add_check("contraction_random_tuples", mismatches, 0, mismatches == 0)
    if cfg is not None:
        p = build_problem(cfg)
        c = p.coeffs
        weak, strong = contraction_check(c.C, c.alpha, c.beta, p.diffusion.lam)
        rep.config.update(C=c.C, alpha=c.alpha, beta=c.beta, lam=p.diffusion.lam, weak=weak, strong=strong)
    return [rep]


# norms

def norms_suite(cfg: RunConfig | None = None, **_) -> list[ExperimentReport]:
    rep = ExperimentReport("norms")
    rng = np.random.default_rng(7)
    cases = [(1, 17, 0.0), (1, 17, 0.4), (2, 7, 0.2), (1, 33, 0.8)]
    bad = 0
    worst = -math.inf
    for i in range(100):
        dim, n, theta = cases[i % len(cases)]
        d = Domain.unit(dim, n)
        scale = rng.lognormal(size=(1, d.n_nodes))
        u = SpaceTimeField(rng.standard_t(3, size=(9, d.n_nodes)) * scale, 0.125, d)
        v = SpaceTimeField(rng.standard_t(2, size=(9, d.n_nodes)), 0.125, d)
        lhs = inner(u, v)
        rhs = theta_norm(u, theta) * theta_star_norm_upper(v, theta)
        worst = max(worst, lhs / rhs)
        bad += lhs > rhs + 1e-10 * max(1.0, abs(rhs))
    rep.add_check("duality_violations", bad, 0, bad == 0)
    rep.aggregates["duality_worst_ratio"] = {"mean": worst, "stderr": 0.0, "n": 100}

    d = Domain.unit(1, 33)
    c1 = max(estimate_sobolev_constant(d), 1.0)
    bad = 0
    worst = -math.inf
    for i in range(50):
        theta = float(rng.uniform(0, 0.95))
        vals = rng.standard_normal((11, d.n_nodes)) * rng.lognormal(size=(11, 1))
        vals[:, d.boundary] = 0.0
        lhs, rhs, ok = check_interpolation_bound(SpaceTimeField(vals, 0.1, d), None, theta, 1.0, c1)
        worst = max(worst, lhs / rhs)
        bad += not ok
    rep.add_check("interpolation_violations", bad, 0, bad == 0)
    rep.aggregates["interpolation_worst_ratio"] = {"mean": worst, "stderr": 0.0, "n": 50}
    rep.config["sobolev_c1"] = c1

    d = Domain.unit(1, 129)
    const = SpaceTimeField(np.full((11, d.n_nodes), 2.5), 0.1, d)
    errs = {
        "const_2_2": abs(mixed_norm(const, 2, 2) - 2.5),
        "const_inf_inf": abs(mixed_norm(const, math.inf, math.inf) - 2.5),
        "x_2_2": abs(mixed_norm(SpaceTimeField(np.tile(d.axes[0], (11, 1)), 0.1, d), 2, 2) - 1 / math.sqrt(3)),
    }
    for name, err in errs.items():
        tol = d.h[0] if name.startswith("x") else 1e-12
        rep.add_check(f"mixed_norm_{name}", err, tol, err <= tol)
    return [rep]


# skorokhod, benchmark, penalization

def benchmark_rows(sol) -> list[dict]:
    d = sol.problem.domain
    dt = sol.config.dt
    times = dt * np.arange(sol.u.shape[0])
    exact = benchmarks.obstacle_heat_exact(times, d.axes[0])
    rows = []
    for i, seed in enumerate(sol.seeds):
        hit = np.nonzero(sol.nu[:, i].sum(axis=1) > 0)[0]
        contact = float((hit[0] + 1) * dt) if hit.size else math.inf
        rows.append({"seed": seed, "sup_error": float(np.abs(sol.u[:, i] - exact).max()),
                     "contact_time": contact, "nu_mass": float(sol.nu[:, i].sum())})
    return rows


def benchmark_report(cfg: RunConfig, threads=None) -> ExperimentReport:
    prob = build_problem(cfg, name="obstacle-heat")
    sc = cfg.solver_config()
    rep = run_ensemble(lambda b: benchmark_rows(solve_paths(prob, sc, b)), cfg.seeds()[:1], "benchmark",
                       {"dt": sc.dt, "T": sc.T, "n": cfg.grid.n}, threads)
    if rep.rows:
        r = rep.rows[0]
        t_star = benchmarks.CONTACT_TIME
        mass = benchmarks.obstacle_heat_mass(sc.T)
        rep.add_check("sup_error", r["sup_error"], 1e-2, r["sup_error"] < 1e-2)
        rep.add_check("contact_time_error", abs(r["contact_time"] - t_star), 20 * sc.dt,
                      abs(r["contact_time"] - t_star) <= 20 * sc.dt)
        rel = abs(r["nu_mass"] - mass) / mass
        rep.add_check("mass_relative_error", rel, 0.05, rel < 0.05)
    return rep


def penalization_report(cfg: RunConfig, eps_values=PEN_EPS) -> ExperimentReport:
    prob = build_problem(cfg)
    sc = replace(cfg.solver_config(), scheme="projection")
    seeds = cfg.seeds()[:1]
    inc = noise_for(seeds, sc)
    op = assemble_operator(prob.domain, prob.diffusion)
    ref = solve_paths(prob, sc, seeds, increments=inc, op=op).u
    rep = ExperimentReport("penalization", {"eps": list(eps_values), "dt": sc.dt, "seeds": seeds})
    dist = []
    for e in eps_values:
        u = solve_paths(prob, replace(sc, scheme="penalization", eps_pen=e), seeds, increments=inc, op=op).u
        dist.append(float(np.abs(u - ref).max()))
        rep.rows.append({"seed": len(rep.rows), "eps": e, "sup_distance": dist[-1]})
    mono = all(b < a for a, b in zip(dist, dist[1:]))
    rep.add_check("monotone_decrease", dist, "strictly decreasing", mono)
    return rep


def skorokhod_suite(cfg: RunConfig, threads=None, **_) -> list[ExperimentReport]:
    prob = build_problem(cfg)
    sc = replace(cfg.solver_config(), scheme="projection")
    out = [skorokhod_experiment(prob, sc, cfg.seeds(), threads)]
    if cfg.experiment.kind == "benchmark":
        out.append(benchmark_report(cfg, threads))
        out.append(penalization_report(cfg))
    return out


# Itô identities

def _deterministic(cfg: RunConfig) -> bool:
    c = cfg.coeffs
    return not any((c.h_const, c.h_sin, c.h_y, c.h_z, cfg.obstacle.dom_h_amp,
                    cfg.boundary.enabled and cfg.boundary.sigma))


def _shifted_for(sol):
    prob = sol.problem
    obstacle = prob.obstacle
    s_prime = sol.s_prime
    if obstacle.dominator is None:
        obstacle = replace(obstacle, dominator=DominatingData.zero(prob.domain))
        s_prime = np.zeros_like(sol.u)
    return build_shifted(prob.coeffs, obstacle, s_prime, prob.domain, sol.config.dt)


def ito_refinement(cfg: RunConfig, seeds=None, halvings: int | None = None) -> ExperimentReport:
    """Residuals of the lattice Itô identities over Δt halvings with coarsened common noise."""
    halvings = cfg.experiment.halvings if halvings is None else halvings
    det = _deterministic(cfg)
    seeds = (cfg.seeds()[:1] if det else cfg.seeds()) if seeds is None else list(seeds)
    dt0 = cfg.solver.dt
    fine = replace(cfg.solver_config(), dt=dt0 / 2**halvings)
    fine_inc = noise_for(seeds, fine)
    rep = ExperimentReport("ito", {"dt0": dt0, "halvings": halvings, "seeds": seeds, "deterministic": det,
                                   "l": cfg.experiment.l})
    if cfg.boundary.enabled:
        rep.add_check("zero_boundary", "boundary process set", "null Dirichlet data", False, "inapplicable")
        return rep
    energy, positive = [], []
    for j in range(halvings + 1):
        dt = dt0 / 2**j
        c = cfg.with_value("solver.dt", dt)
        factor = 2 ** (halvings - j)
        inc = np.stack([coarsen(BrownianPath(fine_inc[i], fine.dt, s), factor).increments
                        for i, s in enumerate(seeds)])
        sol = solve_paths(build_problem(c), c.solver_config(), seeds, increments=inc)
        e = float(np.mean(ito_energy_residual(sol, _shifted_for(sol), cfg.experiment.l)))
        energy.append(e)
        row = {"seed": j, "dt": dt, "energy_residual": e}
        if float(sol.u.min()) >= 0:
            positive.append(float(np.mean(positive_part_ito_residual(sol))))
            row["positive_part_residual"] = positive[-1]
        rep.rows.append(row)
    if det:
        f = [a / b if b > 0 else math.inf for a, b in zip(energy, energy[1:])]
        rep.add_check("energy_refinement_factor", min(f), 1.3, min(f) >= 1.3)
        if len(positive) == len(energy):
            g = [a / b if b > 0 else math.inf for a, b in zip(positive, positive[1:])]
            rep.add_check("positive_part_refinement_factor", min(g), 1.3, min(g) >= 1.3)
    else:
        dec = all(b < a for a, b in zip(energy, energy[1:]))
        rep.add_check("energy_residual_decreasing", energy, "strictly decreasing", dec)
    return rep


def ito_suite(cfg: RunConfig, threads=None, **_) -> list[ExperimentReport]:
    return [ito_refinement(cfg)]


# comparison

def comparison_suite(cfg: RunConfig, threads=None, **_) -> list[ExperimentReport]:
    sc = cfg.solver_config()
    p1, p2 = build_comparison_pair(cfg)
    tol = None if cfg.experiment.tol < 0 else cfg.experiment.tol
    same = comparison_experiment(p1, p1, sc, cfg.seeds(), tol, threads)
    same.name = "comparison-identical"
    if same.rows:
        ident = all(r["bit_identical"] for r in same.rows)
        same.add_check("bit_identical", ident, True, ident)
    ordered = comparison_experiment(p1, p2, sc, cfg.seeds(), tol, threads)
    return [same, ordered]


# maximum principle

def calibration_family(cfg: RunConfig) -> list[RunConfig]:
    c = cfg.coeffs
    return [
        cfg,
        cfg.with_value("coeffs.f_sin", 0.5 * c.f_sin),
        cfg.with_value("coeffs.f_y", 0.0),
        cfg.with_value("coeffs.h_sin", 2.0 * c.h_sin),
        cfg.with_value("init.sin", 2.0 * cfg.init.sin),
        cfg.with_value("boundary.b", 2.0 * cfg.boundary.b),
    ]


def calibrate_factor(cfg: RunConfig, n_seeds: int = 32, threads=None) -> tuple[float, list]:
    seeds = list(range(CALIBRATION_SEED0, CALIBRATION_SEED0 + n_seeds))
    probs = [build_problem(c, name=f"calibration-{i}") for i, c in enumerate(calibration_family(cfg))]
    e = cfg.experiment
    return calibrate_max_principle(probs, cfg.solver_config(), seeds, e.p, e.theta, e.safety, threads)


def max_principle_suite(cfg: RunConfig, threads=None, **_) -> list[ExperimentReport]:
    e = cfg.experiment
    sc = cfg.solver_config()
    if not cfg.boundary.enabled:
        rep = ExperimentReport("max-principle")
        rep.add_check("boundary_process", "disabled", "enabled", False, "inapplicable")
        return [rep]
    prob = build_problem(cfg, name="max-principle")
    if e.exact_zero:
        rep = max_principle_experiment(prob, sc, cfg.seeds(), e.p, e.theta, None, e.budget, threads, True)
        rep.name = "max-principle-dominated"
        return [rep]
    factor = e.factor
    ratios = None
    if factor <= 0:
        factor, ratios = calibrate_factor(cfg, threads=threads)
    base = max_principle_experiment(prob, sc, cfg.seeds(), e.p, e.theta, factor, e.budget, threads)
    base.config["calibration_ratios"] = ratios
    scaled = max_principle_experiment(build_problem(cfg, scale=e.scale, name="max-principle-scaled"), sc,
                                      cfg.seeds(), e.p, e.theta, factor, e.budget, threads)
    scaled.name = "max-principle-scaled"
    if base.rows and scaled.rows:
        sp = e.scale**e.p
        r_rhs = scaled.aggregates["data_sum"]["mean"] / base.aggregates["data_sum"]["mean"]
        lhs0 = base.aggregates["lhs"]["mean"]
        r_lhs = scaled.aggregates["lhs"]["mean"] / lhs0 if lhs0 > 0 else 0.0
        scaled.add_check("rhs_scaling", r_rhs, sp, abs(r_rhs - sp) <= 1e-9 * sp)
        scaled.add_check("lhs_scaling", r_lhs, 1.05 * sp, r_lhs <= 1.05 * sp)
    return [base, scaled]


RUNNERS: dict[str, Callable] = {
    "constants": constants_suite, "norms": norms_suite, "skorokhod": skorokhod_suite, "ito": ito_suite,
    "comparison": comparison_suite, "max-principle": max_principle_suite,
}


def run_suite(name: str, cfg: RunConfig | None = None, threads: int | None = None) -> list[ExperimentReport]:
    """Run one suite (or ``all``); without a config each suite uses its bundled defaults."""
    names = SUITES if name == "all" else (name,)
    out = []
    for s in names:
        if s not in RUNNERS:
            raise KeyError(f"unknown suite {s!r}; expected one of {SUITES + ('all',)}")
        if cfg is not None or not SUITE_DEFAULTS[s]:
            out.extend(RUNNERS[s](cfg, threads=threads))
        else:
            for dname in SUITE_DEFAULTS[s]:
                reps = RUNNERS[s](default_config(dname), threads=threads)
                for r in reps:
                    r.config["config_name"] = dname
                out.extend(reps)
    return out


def metrics_report(cfg: RunConfig, threads=None) -> ExperimentReport:
    """Per-seed solution statistics used by ``solve`` summaries and parameter sweeps."""
    prob = build_problem(cfg)
    sc = cfg.solver_config()
    op = assemble_operator(prob.domain, prob.diffusion)
    l = cfg.experiment.l
    bench = cfg.experiment.kind == "benchmark"

    def task(batch):
        sol = solve_paths(prob, sc, batch, op=op)
        sp = sol.s_prime if sol.s_prime is not None else np.zeros_like(sol.u)
        w = prob.domain.interior_weights
        rows = []
        extra = benchmark_rows(sol) if bench else None
        for i, seed in enumerate(sol.seeds):
            row = {"seed": seed, "moment_T": float((np.abs(sol.u[-1, i] - sp[-1, i]) ** l) @ w),
                   "sup_u": float(np.abs(sol.u[:, i]).max()), "nu_mass": float(sol.nu[:, i].sum())}
            if extra:
                row.update({k: v for k, v in extra[i].items() if k != "seed"})
            rows.append(row)
        return rows

    return run_ensemble(task, cfg.seeds(), "metrics", {"dt": sc.dt, "T": sc.T, "n": cfg.grid.n, "J": sc.J},
                        threads)
