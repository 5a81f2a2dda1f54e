import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ospde.grid import Domain
from ospde.model import (
    AffineFamily,
    CoefficientSet,
    DominatingData,
    ItoBoundaryProcess,
    Obstacle,
    Problem,
    boundary_process_path,
    build_shifted,
    contraction_check,
    lipschitz_audit,
)
from ospde.grid import DiffusionField

D = Domain.unit(1, 17)


def test_contraction_examples():
    assert contraction_check(1.0, 0.1, 0.5, 0.5) == (True, False)
    assert contraction_check(0.0, 0.0, 0.0, 1.0) == (True, True)
    for a in (0.2, 0.9, 1.1):
        assert contraction_check(1.0, a, 0.0, 1.0) == (a < 1.0, a < 1.0)
    with pytest.raises(ValueError):
        contraction_check(-1.0, 0.0, 0.0, 1.0)


@settings(max_examples=100)
@given(st.floats(0, 2), st.floats(0, 2), st.floats(0, 2), st.floats(0.01, 3))
def test_contraction_strong_implies_weak(C, a, b, lam):
    weak, strong = contraction_check(C, a, b, lam)
    assert weak or not strong


def test_affine_family_constants_and_flags():
    fam = AffineFamily(f_y=-0.5, f_nl=0.2, g_z=0.1, h_z=0.3, h_sin=1.0)
    c = fam.build(1, 4)
    w = np.arange(1, 5) ** -1.0
    assert c.C == pytest.approx(0.7)
    assert c.alpha == pytest.approx(0.1)
    assert c.beta == pytest.approx(0.3 * np.linalg.norm(w))
    assert not c.yz_independent
    assert AffineFamily(f_sin=1.0, h_sin=2.0).build(1, 3).yz_independent


@pytest.mark.parametrize("dim", [1, 2])
def test_lipschitz_audit_passes_declared_constants(dim):
    d = Domain.unit(dim, 9)
    fam = AffineFamily(f_y=0.4, f_z=0.3, f_nl=0.2, g_y=0.1, g_z=0.2, h_y=0.3, h_z=0.1, f_sin=1.0)
    rep = lipschitz_audit(fam.build(dim, 5), d)
    assert rep.ok and bool(rep)


def test_lipschitz_audit_catches_understated_constant():
    c = AffineFamily(f_y=1.0).build(1, 2)
    liar = CoefficientSet(c.f, c.g, c.h, 0.5, 0.0, 0.0, 2)
    rep = lipschitz_audit(liar, D)
    assert not rep.ok and rep.worst_excess["f"] > 0


def test_zero_point_fields():
    c = AffineFamily(f_const=1.0, f_y=2.0, g_sin=0.5, h_const=0.3).build(1, 2)
    f0, g0, h0 = c.zero_point(0.0, D.coords)
    assert np.allclose(f0, 1.0)
    assert g0.shape == (D.n_nodes, 1) and h0.shape == (D.n_nodes, 2)
    assert np.allclose(h0[:, 1], 0.15)
    z = CoefficientSet.zero(2, 3)
    f0, g0, h0 = z.zero_point(0.0, Domain.unit(2, 5).coords)
    assert not f0.any() and not g0.any() and not h0.any()


def test_boundary_process_examples():
    dB = np.random.default_rng(0).standard_normal((3, 50, 2)) * 0.1
    M = ItoBoundaryProcess.constant(0.7, 0.0, [0.0, 0.0], 50)
    assert np.all(boundary_process_path(M, dB, 0.02) == 0.7)
    M = ItoBoundaryProcess.constant(0.7, 1.0, [0.0], 50)
    path = M.path(dB, 0.02)
    assert path.shape == (3, 51)
    assert path[0, 0] == 0.7
    assert path[0, -1] == pytest.approx(1.7, abs=1e-12)
    with pytest.raises(ValueError):
        M.path(dB[:, :10], 0.02)


def test_boundary_integrability_functionals():
    M = ItoBoundaryProcess.constant(0.0, 2.0, [3.0, 4.0], 10)
    # (int |b|^2)^(p/2) with theta = 1/2, p = 2 over t = 1: (4)^(1) = 4
    assert M.drift_functional(2.0, 0.5, 0.1) == pytest.approx(4.0)
    # (int |sigma|^4)^(1/2) = (625)^(1/2) = 25
    assert M.volatility_functional(2.0, 0.5, 0.1) == pytest.approx(25.0)
    s = M.scaled(2.0)
    assert s.drift_functional(2.0, 0.5, 0.1) == pytest.approx(4 * M.drift_functional(2.0, 0.5, 0.1))


def test_obstacle_scaling_and_inactive():
    dom = DominatingData.sine(D, 0.5, 1.0)
    ob = Obstacle.sine(D, 0.5, offset=0.1, dominator=dom)
    s = ob.scaled(2.0)
    t = np.array([0.0, 0.3])
    assert np.allclose(s.field(t, D.coords), 2 * ob.field(t, D.coords))
    assert np.allclose(s.dominator.s0, 2 * dom.s0)
    ina = Obstacle.inactive()
    assert not ina.active and ina.scaled(3.0) is ina
    assert np.all(ina.field(t, D.coords) < -1e8)


def test_problem_shape_check():
    with pytest.raises(ValueError):
        Problem(D, DiffusionField.constant(D), CoefficientSet.zero(), Obstacle.inactive(), np.zeros(5))


def _shifted(fam, dom, J=2, K=3):
    c = fam.build(1, J)
    ob = Obstacle.sine(D, 0.1, dominator=dom)
    rng = np.random.default_rng(1)
    sp = rng.standard_normal((K + 1, 2, D.n_nodes))
    sp[..., D.boundary] = 0
    return c, build_shifted(c, ob, sp, D, 0.1), sp


def test_shifted_identities_random_probes():
    fam = AffineFamily(f_const=0.3, f_y=0.5, f_z=0.2, f_nl=0.1, g_y=0.2, g_z=0.1, h_y=0.3, h_z=0.2)
    dom = DominatingData.sine(D, 0.2, 1.5, 0.4, J=2)
    c, sh, sp = _shifted(fam, dom)
    rng = np.random.default_rng(5)
    gs = D.grad(sp)
    for _ in range(100):
        k = int(rng.integers(0, 4))
        y = rng.standard_normal((2, D.n_nodes))
        z = rng.standard_normal((2, D.n_nodes, 1))
        fp, gp, hp = dom.parts(k * 0.1, D.coords, 2)
        want = c.f(k * 0.1, D.coords, y + sp[k], z + gs[k]) - fp
        assert np.allclose(sh.fbar(k, y, z), want)
        assert np.allclose(sh.gbar(k, y, z), c.g(k * 0.1, D.coords, y + sp[k], z + gs[k]) - gp)
        assert np.allclose(sh.hbar(k, y, z), c.h(k * 0.1, D.coords, y + sp[k], z + gs[k]) - hp)
    assert (sh.C, sh.alpha, sh.beta) == (c.C, c.alpha, c.beta)


def test_shifted_zero_fields_examples():
    # f = y, f' = 0  ->  fbar0 = S'
    c, sh, sp = _shifted(AffineFamily(f_y=1.0), DominatingData.zero(D))
    f0, g0, h0 = sh.zero_fields()
    assert np.allclose(f0, sp)
    # f = f' constant in (y, z)  ->  fbar0 = 0
    dom = DominatingData(np.zeros(D.n_nodes), lambda t, x: 0.7 * np.ones(x.shape[0]))
    c, sh, sp = _shifted(AffineFamily(f_const=0.7), dom)
    assert np.allclose(sh.zero_fields()[0], 0.0)


def test_build_shifted_errors():
    c = AffineFamily().build(1, 1)
    with pytest.raises(ValueError):
        build_shifted(c, Obstacle.sine(D, 0.1), np.zeros((2, D.n_nodes)), D, 0.1)
    with pytest.raises(ValueError):
        build_shifted(c, Obstacle.sine(D, 0.1, dominator=DominatingData.zero(D)), np.zeros((2, 5)), D, 0.1)
