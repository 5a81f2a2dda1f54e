import math
from dataclasses import replace

import numpy as np
import pytest

from ospde.analysis.benchmarks import CONTACT_TIME, linear_stochastic, obstacle_heat, obstacle_heat_exact
from ospde.grid import DiffusionField, Domain, assemble_operator
from ospde.model import AffineFamily, AuditError, CoefficientSet, DominatingData, Obstacle, Problem
from ospde.noise import generate_path
from ospde.solver import (
    TEST_FUNCTIONS,
    SolverConfig,
    StabilityError,
    TestFunction,
    solve_dominating_obstacle,
    solve_path,
    solve_paths,
    step_penalized,
    step_projection,
    weak_form_residual,
)

D = Domain.unit(1, 33)


def zero_problem(J=2):
    return Problem(D, DiffusionField.constant(D), CoefficientSet.zero(1, J), Obstacle.inactive(),
                   np.zeros(D.n_nodes))


def test_solver_config_validation():
    assert SolverConfig(0.01, 0.2).steps == 20
    for kw in ({"dt": 0.0, "T": 1.0}, {"dt": 0.03, "T": 0.1}, {"dt": 0.1, "T": 1.0, "scheme": "bogus"},
               {"dt": 0.1, "T": 1.0, "J": 0}, {"dt": 0.1, "T": 1.0, "scheme": "penalization", "eps_pen": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_zero_data_inactive_obstacle():
    u, nu = solve_path(zero_problem(), SolverConfig(0.01, 0.1, J=2))
    assert not u.values.any() and nu.total_mass == 0


def test_step_functions_match_batch_solver():
    prob = linear_stochastic(n=17, J=2)
    cfg = SolverConfig(0.01, 0.05, J=2)
    sol = solve_paths(prob, cfg, [4])
    op = assemble_operator(prob.domain, prob.diffusion)
    u = sol.u[0, 0]
    for k in range(cfg.steps):
        u, dnu = step_projection(u, sol.S[k + 1], prob.coeffs, op, sol.dB[0, k], cfg.dt, k * cfg.dt)
        assert np.array_equal(u, sol.u[k + 1, 0]) and np.array_equal(dnu, sol.nu[k, 0])


def test_penalized_step_inactive_obstacle_is_unconstrained():
    prob = linear_stochastic(n=17, J=2)
    op = assemble_operator(prob.domain, prob.diffusion)
    dB = np.array([0.1, -0.2])
    low = np.full(prob.domain.n_nodes, -1e9)
    a, na = step_projection(prob.xi, low, prob.coeffs, op, dB, 0.01)
    b, nb = step_penalized(prob.xi, low, prob.coeffs, op, dB, 0.01, 1e-3)
    assert np.array_equal(a, b) and not na.any() and not nb.any()


def test_benchmark_accuracy_and_contact():
    prob = obstacle_heat(n=65)
    cfg = SolverConfig(2.5e-4, 0.2, J=1)
    sol = solve_paths(prob, cfg)
    times = cfg.dt * np.arange(cfg.steps + 1)
    err = np.abs(sol.u[:, 0] - obstacle_heat_exact(times, prob.domain.axes[0])).max()
    assert err < 1e-2
    first = np.nonzero(sol.nu[:, 0].sum(axis=1) > 0)[0][0]
    assert abs((first + 1) * cfg.dt - CONTACT_TIME) < 20 * cfg.dt


def test_benchmark_refinement_reduces_error():
    errs = []
    for n, dt in ((17, 1e-3), (33, 5e-4)):
        prob = obstacle_heat(n=n)
        cfg = SolverConfig(dt, 0.2, J=1)
        sol = solve_paths(prob, cfg)
        times = dt * np.arange(cfg.steps + 1)
        errs.append(np.abs(sol.u[:, 0] - obstacle_heat_exact(times, prob.domain.axes[0])).max())
    assert errs[0] / errs[1] >= 1.5


def test_reflection_density_after_contact():
    prob = obstacle_heat(n=65)
    cfg = SolverConfig(2.5e-4, 0.2, J=1)
    _, nu = solve_path(prob, cfg)
    dens = nu.density()[-1]
    x = prob.domain.axes[0]
    I = prob.domain.interior
    assert np.allclose(dens[I], 0.5 * math.pi**2 * np.sin(math.pi * x[I]), rtol=0.03, atol=0.02)


def test_skorokhod_support_and_obstacle_exact():
    prob = linear_stochastic(n=33, J=4)
    sol = solve_paths(prob, SolverConfig(1e-3, 0.1, J=4), range(8))
    I = prob.domain.interior
    u = sol.u[1:][..., I]
    S = np.broadcast_to(sol.S[1:, None, I], u.shape)
    nu = sol.nu[..., I]
    assert np.all(u >= S)
    assert np.all(nu >= 0)
    assert np.all(u[nu > 0] == S[nu > 0])


def test_penalization_undershoot_and_consistency():
    prob = obstacle_heat(n=33)
    base = SolverConfig(5e-4, 0.2, J=1)
    ref = solve_paths(prob, base).u
    d_prev = math.inf
    for eps in (1e-1, 1e-2, 1e-3):
        sol = solve_paths(prob, replace(base, scheme="penalization", eps_pen=eps))
        dist = np.abs(sol.u - ref).max()
        assert dist < d_prev
        d_prev = dist
        under = np.max(sol.S[:, None] - sol.u)
        assert under <= 10 * eps
        assert np.all(sol.nu >= 0)


def test_batch_equals_single_paths_bitwise():
    prob = linear_stochastic(n=17, J=3)
    cfg = SolverConfig(1e-3, 0.05, J=3)
    batch = solve_paths(prob, cfg, [3, 9, 11])
    for i, s in enumerate([3, 9, 11]):
        single = solve_paths(prob, cfg, [s])
        assert np.array_equal(batch.u[:, i], single.u[:, 0])
        assert np.array_equal(batch.nu[:, i], single.nu[:, 0])


def test_path_determinism_and_deterministic_reduction():
    prob = linear_stochastic(n=17, J=2)
    cfg = SolverConfig(1e-3, 0.05, J=2)
    a = solve_path(prob, cfg, generate_path(2, 1e-3, 50, 5))[0].values
    b = solve_path(prob, cfg, generate_path(2, 1e-3, 50, 5))[0].values
    assert np.array_equal(a, b)
    det = obstacle_heat(n=17, J=2)
    x = solve_paths(det, cfg, [1]).u
    y = solve_paths(det, cfg, [2]).u
    assert np.array_equal(x, y)


def test_linear_monotone_in_initial_data():
    prob = linear_stochastic(n=17, J=2)
    fam = AffineFamily(f_sin=1.0, h_sin=0.5, g_sin=0.2)
    p1 = replace(prob, coeffs=fam.build(1, 2))
    p2 = replace(p1, xi=p1.xi + 0.01 * p1.domain.profile())
    cfg = SolverConfig(1e-3, 0.1, J=2)
    inc = solve_paths(p1, cfg, range(5)).dB
    u1 = solve_paths(p1, cfg, range(5), increments=inc).u
    u2 = solve_paths(p2, cfg, range(5), increments=inc).u
    assert np.all(u1 <= u2)


def test_dominating_solution_examples():
    d = Domain.unit(1, 33)
    op = assemble_operator(d)
    inc = np.random.default_rng(0).standard_normal((200, 2)) * 0.05
    zero = solve_dominating_obstacle(DominatingData.zero(d), op, 0.01, inc)
    assert not zero.any()
    data = DominatingData.sine(d, 0.0, math.pi**2)
    S = solve_dominating_obstacle(data, op, 0.01, inc)
    assert np.abs(S[-1] - np.sin(math.pi * d.axes[0])).max() < 5e-3
    noisy = DominatingData.sine(d, 0.2, 1.0, 0.5, J=2)
    S1 = solve_dominating_obstacle(noisy, op, 0.01, inc)
    S2 = solve_dominating_obstacle(noisy.scaled(2.0), op, 0.01, inc)
    assert np.allclose(S2, 2 * S1, rtol=1e-12, atol=1e-14)


def test_audits():
    cfg = SolverConfig(1e-3, 0.01, J=1)
    base = obstacle_heat(n=17)
    with pytest.raises(AuditError, match="below obstacle"):
        solve_paths(replace(base, xi=0.1 * base.xi), cfg)
    with pytest.raises(AuditError, match="J="):
        solve_paths(base, replace(cfg, J=2))
    bad = AffineFamily(g_z=1.5).build(1, 1)
    with pytest.raises(AuditError, match="contraction"):
        solve_paths(replace(base, coeffs=bad), cfg)
    strong_fail = AffineFamily(h_z=0.2).build(1, 1)
    solve_paths(replace(base, coeffs=strong_fail), cfg)
    with pytest.raises(AuditError, match="strong"):
        solve_paths(replace(base, coeffs=strong_fail), cfg, require_strong=True)
    dominated = obstacle_heat(n=17, dominator_amp=0.1)
    with pytest.raises(AuditError, match="dominator"):
        solve_paths(dominated, SolverConfig(1e-3, 0.2, J=1))
    with pytest.raises(StabilityError):
        solve_paths(replace(base, coeffs=AffineFamily(f_y=-100.0).build(1, 1)), SolverConfig(0.01, 0.1, J=1))


def test_weak_form_residual_zero_and_errors():
    prob = zero_problem(1)
    cfg = SolverConfig(0.01, 0.1, J=1)
    sol = solve_paths(prob, cfg)
    assert weak_form_residual(sol.u[:, 0], sol.nu[:, 0], prob, "sine", sol.dB[0], cfg.dt) == 0.0
    bad = TestFunction("bad", lambda d: np.ones(d.n_nodes), lambda t, T: 1.0)
    with pytest.raises(ValueError):
        weak_form_residual(sol.u[:, 0], sol.nu[:, 0], prob, bad, sol.dB[0], cfg.dt)


def test_weak_form_refinement_deterministic():
    prob = obstacle_heat(n=65)
    res = []
    for dt in (2e-3, 1e-3, 5e-4, 2.5e-4):
        cfg = SolverConfig(dt, 0.2, J=1)
        sol = solve_paths(prob, cfg)
        res.append(weak_form_residual(sol.u[:, 0], sol.nu[:, 0], prob, "sine_cutoff", sol.dB[0], dt))
    assert all(a / b >= 1.3 for a, b in zip(res, res[1:]))


def test_weak_form_stochastic_decreases():
    from ospde.noise import BrownianPath, coarsen

    prob = linear_stochastic(n=33, J=4)
    prob = replace(prob, obstacle=Obstacle.sine(prob.domain, 0.45))  # contact on most paths
    fine = SolverConfig(2.5e-4, 0.2, J=4)
    inc = solve_paths(prob, fine, range(64), audit=False).dB
    means = []
    for f in (4, 2, 1):
        cfg = SolverConfig(2.5e-4 * f, 0.2, J=4)
        ci = np.stack([coarsen(BrownianPath(inc[i], fine.dt, i), f).increments for i in range(64)])
        sol = solve_paths(prob, cfg, range(64), increments=ci)
        means.append(np.mean([weak_form_residual(sol.u[:, i], sol.nu[:, i], prob, "bump_decay", ci[i], cfg.dt)
                              for i in range(64)]))
    assert means[0] > means[1] > means[2]


def test_test_function_dictionary_vanishes_on_boundary():
    d = Domain.unit(2, 9)
    for tf in TEST_FUNCTIONS.values():
        vals = tf.values(d, np.array([0.0, 0.5]), 1.0)
        assert not vals[:, d.boundary].any()
