import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ospde.grid import Domain, estimate_sobolev_constant
from ospde.norms import (
    INF,
    NormError,
    NormSpec,
    SpaceTimeField,
    check_interpolation_bound,
    exponent_scale,
    gamma_extremes,
    gamma_star_extremes,
    inner,
    interpolation_membership,
    mixed_norm,
    nested_levels,
    segment_point,
    theta_norm,
    theta_star_norm_upper,
    write_norm_table,
)

D1 = Domain.unit(1, 17)
EXPONENTS = [1.0, 1.5, 2.0, 3.0, 7.0, INF]


def field(values, dt=0.1, domain=D1):
    return SpaceTimeField(np.asarray(values, float), dt, domain)


def test_constant_field_all_exponents():
    u = field(np.full((11, 17), 2.5))
    for p in EXPONENTS:
        for q in EXPONENTS:
            assert mixed_norm(u, p, q, 1.0) == pytest.approx(2.5, rel=1e-13)


def test_linear_profile_l2():
    # trapezoid rule on x^2 gives 1/3 + h^2/6
    for n in (17, 65, 257):
        d = Domain.unit(1, n)
        u = field(np.tile(d.coords[:, 0], (11, 1)), domain=d)
        h = 1 / (n - 1)
        assert mixed_norm(u, 2, 2, 1.0) == pytest.approx(math.sqrt(1 / 3 + h * h / 6), rel=1e-12)
        assert abs(mixed_norm(u, 2, 2, 1.0) - 1 / math.sqrt(3)) < h


def test_sup_sup_of_constant():
    assert mixed_norm(field(np.full((4, 17), -3.0)), INF, INF) == 3.0


def test_time_quadrature_conventions():
    vals = np.zeros((5, 17))
    vals[4] = 1.0  # only at the final time
    u = field(vals, dt=0.25)
    assert mixed_norm(u, 2, 1, 1.0) == 0.0
    assert mixed_norm(u, 2, INF, 1.0) == 1.0
    assert mixed_norm(u, 2, 2, 0.0) == 0.0


def test_exponent_below_one_rejected():
    with pytest.raises(NormError):
        mixed_norm(field(np.ones((2, 17))), 0.5, 2)
    with pytest.raises(NormError):
        mixed_norm(field(np.ones((2, 17))), 2, 0.9)


def test_horizon_must_be_on_lattice():
    with pytest.raises(NormError):
        mixed_norm(field(np.ones((3, 17))), 2, 2, 0.5)


def test_no_overflow_for_large_exponent():
    u = field(np.full((3, 17), 1e200))
    assert mixed_norm(u, 50, 50, 0.2) == pytest.approx(1e200 * 0.2 ** (1 / 50), rel=1e-12)


def test_membership_examples():
    assert interpolation_membership(3, 4, 2, 7, 3, 4) == (True, 1.0)
    assert interpolation_membership(3, 4, 2, 7, 2, 7) == (True, 0.0)
    ok, rho = interpolation_membership(INF, 1, 1, INF, 2, 2)
    assert ok and rho == pytest.approx(0.5, abs=1e-15)
    assert interpolation_membership(INF, 1, 1, INF, 2, 3)[0] is False
    assert interpolation_membership(INF, 1, 1, INF, 1.5, 3)[0] is True
    assert interpolation_membership(2, 2, 2, 2, 2, 2) == (True, 1.0)


@pytest.mark.parametrize("theta,d,expected", [(0.0, 4, ((INF, 1.0), (2.0, INF))),
                                              (0.5, 3, ((INF, 2.0), (3.0, INF)))])
def test_gamma_star_examples(theta, d, expected):
    got = gamma_star_extremes(theta, d)
    for g, e in zip(got, expected):
        assert g == pytest.approx(e, rel=1e-15)


@settings(max_examples=60)
@given(st.floats(0, 0.999), st.integers(1, 6), st.floats(2.1, 50))
def test_extremes_on_their_lines(theta, d, two_star):
    ts = two_star if d == 2 else None
    for pair in gamma_star_extremes(theta, d, ts):
        assert NormSpec(*pair, 1.0, d, theta, ts).in_gamma_star()
    for pair in gamma_extremes(theta, d, ts):
        assert NormSpec(*pair, 1.0, d, theta, ts).in_gamma(1e-9)
        assert all(x >= 1 for x in pair)


def test_exponent_scale_conventions():
    assert exponent_scale(1) == 1.0
    assert exponent_scale(2) == 2.0
    assert exponent_scale(2, 6.0) == 1.5
    assert exponent_scale(5) == 2.5
    with pytest.raises(NormError):
        gamma_star_extremes(1.0, 3)


def test_theta_norm_trivial_cases():
    assert theta_norm(field(np.zeros((11, 17))), 0.3, 1.0) == 0.0
    assert theta_norm(field(np.ones((11, 17))), 0.3, 1.0) == pytest.approx(1.0, rel=1e-13)
    assert theta_star_norm_upper(field(np.zeros((11, 17))), 0.3, 1.0) == 0.0


def test_nested_levels_prefix():
    assert nested_levels(5) == [1.0, 0.0, 0.5, 0.25, 0.75]
    assert nested_levels(12)[:7] == nested_levels(7)


finite_fields = arrays(np.float64, (6, 17), elements=st.floats(-1e3, 1e3, allow_subnormal=False))


@settings(max_examples=40, deadline=None)
@given(finite_fields, finite_fields, st.floats(-50, 50), st.sampled_from(EXPONENTS),
       st.sampled_from(EXPONENTS))
def test_homogeneity_and_triangle(a, b, c, p, q):
    u, v = field(a), field(b)
    nu, nv = mixed_norm(u, p, q), mixed_norm(v, p, q)
    assert mixed_norm(c * u, p, q) == pytest.approx(abs(c) * nu, rel=1e-10, abs=1e-300)
    assert mixed_norm(u + v, p, q) <= nu + nv + 1e-10 * (nu + nv + 1)


@settings(max_examples=40, deadline=None)
@given(finite_fields, st.sampled_from(EXPONENTS), st.sampled_from(EXPONENTS))
def test_monotone_in_horizon(a, p, q):
    u = field(a)
    vals = [mixed_norm(u, p, q, k * 0.1) for k in range(6)]
    assert all(x <= y + 1e-12 * (abs(y) + 1) for x, y in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(finite_fields, st.floats(0, 0.95))
def test_budget_monotone(a, theta):
    u = field(a)
    vals = [theta_star_norm_upper(u, theta, budget=b) for b in (1, 2, 3, 5, 8, 13)]
    assert all(y <= x for x, y in zip(vals, vals[1:]))
    single = mixed_norm(u, INF, 1 / (1 - theta))
    assert vals[-1] <= single


def test_budget_rejected():
    with pytest.raises(NormError):
        theta_star_norm_upper(field(np.ones((2, 17))), 0.1, budget=0)


def test_split_beats_single_pieces_on_spiky_field():
    # a space-concentrated column plus a time-concentrated slab
    vals = np.zeros((11, 17))
    vals[:, 8] = 100.0
    vals[3, :8] = 10.0
    u = field(vals)
    ends = gamma_star_extremes(0.0, 1)
    singles = min(mixed_norm(u, *segment_point(ends, r)) for r in nested_levels(8))
    assert theta_star_norm_upper(u, 0.0, budget=8) < singles


@pytest.mark.parametrize("dim,n,theta", [(1, 17, 0.0), (1, 17, 0.4), (2, 7, 0.2)])
def test_duality_random_pairs(dim, n, theta):
    d = Domain.unit(dim, n)
    rng = np.random.default_rng(11)
    for _ in range(30):
        scale = rng.lognormal(size=(1, d.n_nodes))
        u = SpaceTimeField(rng.standard_t(3, size=(9, d.n_nodes)) * scale, 0.125, d)
        v = SpaceTimeField(rng.standard_t(2, size=(9, d.n_nodes)), 0.125, d)
        lhs = inner(u, v)
        rhs = theta_norm(u, theta) * theta_star_norm_upper(v, theta)
        assert lhs <= rhs + 1e-10 * max(1.0, abs(rhs))


def test_interpolation_hat_constant_in_time():
    d = Domain.unit(1, 5)
    e = np.zeros(5)
    e[2] = 1.0
    u = field(np.tile(e, (11, 1)), domain=d)
    c1 = max(estimate_sobolev_constant(d), 1.0)
    lhs, rhs, ok = check_interpolation_bound(u, None, 0.0, 1.0, c1)
    # ||u||_{1,inf} = h, ||u||_{inf,1} = 1; rhs = sqrt(h + 2/h)
    assert lhs == pytest.approx(1.0)
    assert rhs == pytest.approx(math.sqrt(0.25 + 8.0))
    assert ok
    lhs2, rhs2, ok2 = check_interpolation_bound(2 * u, None, 0.0, 1.0, c1)
    assert lhs2 == pytest.approx(2 * lhs) and rhs2 == pytest.approx(2 * rhs) and ok2 == ok


def test_interpolation_zero_and_boundary_error():
    u = field(np.zeros((3, 17)))
    assert check_interpolation_bound(u, None, 0.2, 0.2, 1.0) == (0.0, 0.0, True)
    with pytest.raises(NormError):
        check_interpolation_bound(field(np.ones((3, 17))), None, 0.2, 0.2, 1.0)


def test_interpolation_with_supplied_gradient():
    d = Domain.unit(1, 33)
    u = field(np.tile(d.profile(), (11, 1)), domain=d)
    grad = d.grad(u.values)
    lhs, rhs, ok = check_interpolation_bound(u, grad, 0.3, 1.0, 1.0)
    assert ok and lhs > 0


def test_norm_table(tmp_path):
    path = write_norm_table([("sup", INF, INF, 0.0, 1.5), ("l2", 2, 2, 0.25, 0.5)], tmp_path / "n.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "name,p,q,theta,value"
    assert lines[1] == "sup,inf,inf,0.0,1.5"
