import numpy as np
import pytest

from ospde.analysis.benchmarks import obstacle_heat
from ospde.analysis.ito import (
    SQUARE,
    C2Function,
    ito_energy_residual,
    ito_energy_terms,
    positive_part_ito_residual,
    positive_part_terms,
)
from ospde.grid import DiffusionField, Domain
from ospde.model import CoefficientSet, DominatingData, Obstacle, Problem, build_shifted
from ospde.solver import SolverConfig, solve_paths
from ospde.suites import _shifted_for


def _solve(prob, dt, T=0.2):
    return solve_paths(prob, SolverConfig(dt, T, J=prob.coeffs.J))


def test_zero_solution_zero_residual():
    d = Domain.unit(1, 17)
    dom = DominatingData.zero(d)
    prob = Problem(d, DiffusionField.constant(d), CoefficientSet.zero(), Obstacle.sine(d, 0.0, -1.0, dominator=dom),
                   np.zeros(d.n_nodes))
    sol = _solve(prob, 0.01)
    sh = build_shifted(prob.coeffs, prob.obstacle, sol.s_prime, d, 0.01)
    assert ito_energy_residual(sol, sh)[0] == 0.0
    assert positive_part_ito_residual(sol)[0] == 0.0


def test_energy_residual_refinement_and_reflection_sign():
    prob = obstacle_heat(n=65, dominator_amp=0.5)
    res, pos = [], []
    for dt in (2e-3, 1e-3, 5e-4, 2.5e-4):
        sol = _solve(prob, dt)
        sh = build_shifted(prob.coeffs, prob.obstacle, sol.s_prime, prob.domain, dt)
        terms = ito_energy_terms(sol, sh)
        assert terms["reflection"][-1, 0] <= 0
        res.append(ito_energy_residual(sol, sh)[0])
        pos.append(positive_part_ito_residual(sol)[0])
    assert all(a / b >= 1.3 for a, b in zip(res, res[1:]))
    assert all(a / b >= 1.3 for a, b in zip(pos, pos[1:]))


def test_positive_part_vanishes_for_nonpositive_solution():
    prob = obstacle_heat(n=33)
    neg = Problem(prob.domain, prob.diffusion, prob.coeffs, Obstacle.sine(prob.domain, -1.0), -prob.xi)
    sol = _solve(neg, 1e-3)
    assert sol.u.max() <= 0
    terms = positive_part_terms(sol)
    assert all(not np.any(v) for v in terms.values())


def test_square_matches_l2_identity_when_dominator_is_zero():
    prob = obstacle_heat(n=33)
    sol = _solve(prob, 1e-3)
    assert sol.u.min() >= 0
    a = ito_energy_residual(sol, _shifted_for(sol), 2.0)
    b = positive_part_ito_residual(sol, SQUARE)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_argument_errors():
    prob = obstacle_heat(n=17)
    sol = _solve(prob, 1e-2)
    with pytest.raises(ValueError):
        ito_energy_terms(sol, _shifted_for(sol), 1.5)
    shifted = C2Function(lambda x: (x + 1) ** 2, lambda x: 2 * (x + 1), lambda x: 2 + 0 * x)
    with pytest.raises(ValueError):
        positive_part_terms(sol, shifted)


def test_higher_moment_identity_converges():
    prob = obstacle_heat(n=65, dominator_amp=0.5)
    res = []
    for dt in (2e-3, 1e-3):
        sol = _solve(prob, dt)
        sh = build_shifted(prob.coeffs, prob.obstacle, sol.s_prime, prob.domain, dt)
        res.append(ito_energy_residual(sol, sh, 3.0)[0])
    assert res[0] / res[1] >= 1.3
