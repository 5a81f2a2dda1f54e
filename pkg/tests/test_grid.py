import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ospde.grid import (
    DiffusionField,
    Domain,
    EllipticityError,
    GridError,
    assemble_operator,
    dump_operator_csv,
    energy,
    estimate_sobolev_constant,
)


def hat(domain, node):
    e = np.zeros(domain.n_nodes)
    e[node] = 1.0
    return e


def test_1d_laplacian_stencil():
    op = assemble_operator(Domain.unit(1, 5))
    expected = 16 * np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]], float)
    np.testing.assert_allclose(op.matrix.toarray(), expected, rtol=1e-14)


def test_2d_five_point_stencil():
    d = Domain.unit(2, 4)
    A = assemble_operator(d).matrix.toarray()
    h2 = d.h[0] ** 2
    assert A.shape == (4, 4)
    np.testing.assert_allclose(np.diag(A), 4 / h2, rtol=1e-13)
    # interior nodes in C-order: (1,1),(1,2),(2,1),(2,2); axis neighbours differ in one index
    nb = np.array([[0, 1, 1, 0], [1, 0, 0, 1], [1, 0, 0, 1], [0, 1, 1, 0]], bool)
    np.testing.assert_allclose(A[nb], -1 / h2, rtol=1e-13)
    assert np.all(A[~nb & ~np.eye(4, dtype=bool)] == 0)


@pytest.mark.parametrize("dim,n", [(1, 9), (2, 6)])
def test_linear_in_coefficient(dim, n):
    d = Domain.unit(dim, n)
    a1 = assemble_operator(d).matrix.toarray()
    a3 = assemble_operator(d, DiffusionField.constant(d, 3.0)).matrix.toarray()
    np.testing.assert_allclose(a3, 3 * a1, rtol=1e-13)


def test_hat_energy():
    d = Domain.unit(1, 5)
    e = hat(d, 2)
    assert energy(assemble_operator(d), e, e) == pytest.approx(8.0, rel=1e-14)
    assert energy(assemble_operator(d), np.zeros(5), np.zeros(5)) == 0.0


def test_energy_interior_slice_matches_full():
    d = Domain.unit(2, 7)
    op = assemble_operator(d)
    rng = np.random.default_rng(0)
    w, v = rng.normal(size=(2, d.n_nodes))
    w[d.boundary] = v[d.boundary] = 0
    assert energy(op, w, v) == pytest.approx(energy(op, w[d.interior], v[d.interior]), rel=1e-12)


def test_energy_shape_mismatch():
    d = Domain.unit(1, 5)
    with pytest.raises(GridError):
        energy(assemble_operator(d), np.zeros(4), np.zeros(4))


def variable_field(d, rng):
    # random SPD tensors with eigenvalues in [0.5, 2]
    q = np.linalg.qr(rng.normal(size=(d.n_nodes, d.dim, d.dim)))[0]
    ev = rng.uniform(0.5, 2.0, size=(d.n_nodes, d.dim))
    vals = np.einsum("nij,nj,nkj->nik", q, ev, q)
    return DiffusionField(vals, 0.5, 2.0)


@pytest.mark.parametrize("dim,n", [(1, 17), (2, 8)])
def test_symmetric_positive_definite(dim, n):
    d = Domain.unit(dim, n)
    A = assemble_operator(d, variable_field(d, np.random.default_rng(1))).matrix.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12 * np.abs(A).max())
    np.linalg.cholesky(A)
    assert np.linalg.eigvalsh(A).min() > 0


@pytest.mark.parametrize("dim,n", [(1, 17), (2, 8)])
def test_discrete_ellipticity(dim, n):
    d = Domain.unit(dim, n)
    rng = np.random.default_rng(2)
    a = variable_field(d, rng)
    op = assemble_operator(d, a)
    for _ in range(100):
        v = rng.normal(size=d.n_nodes)
        v[d.boundary] = 0
        g2 = d.grad_sq_norm(v)
        e = energy(op, v, v)
        assert a.lam * g2 * (1 - 1e-12) <= e <= a.Lam * g2 * (1 + 1e-12)


@pytest.mark.parametrize("dim,n", [(1, 12), (2, 7)])
def test_m_matrix_for_scalar_field(dim, n):
    d = Domain.unit(dim, n)
    rng = np.random.default_rng(3)
    a = DiffusionField.from_function(d, lambda x: rng.uniform(0.3, 3.0, size=len(x)))
    assert a.is_scalar
    A = assemble_operator(d, a).matrix.toarray()
    off = A - np.diag(np.diag(A))
    assert off.max() <= 0
    assert np.all(A.sum(axis=1) >= -1e-9 * np.abs(A).max())


def test_ellipticity_violation_reports_node():
    d = Domain.unit(1, 6)
    vals = np.ones((6, 1, 1))
    vals[3] = 0.01
    with pytest.raises(EllipticityError) as exc:
        assemble_operator(d, DiffusionField(vals, 0.5, 2.0))
    assert exc.value.node == 3


def test_asymmetric_tensor_rejected():
    d = Domain.unit(2, 4)
    vals = np.broadcast_to(np.eye(2), (16, 2, 2)).copy()
    vals[5, 0, 1] = 0.3
    with pytest.raises(EllipticityError) as exc:
        assemble_operator(d, DiffusionField(vals, 0.5, 2.0))
    assert exc.value.node == 5


def test_invalid_grid():
    with pytest.raises(GridError):
        Domain.unit(1, 2)
    with pytest.raises(GridError):
        Domain(3, (1.0, 1.0, 1.0), 5)


def test_summation_by_parts():
    d = Domain(2, (1.0, 2.0), 9)
    rng = np.random.default_rng(4)
    phi = rng.normal(size=d.n_nodes)
    phi[d.boundary] = 0
    g = rng.normal(size=(d.n_nodes, 2))
    lhs = np.sum(d.weights * d.div(g) * phi)
    rhs = -np.sum(d.weights[:, None] * g * d.grad(phi))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_weights_exact_for_constants():
    d = Domain(2, (1.5, 0.5), 11)
    assert d.weights.sum() == pytest.approx(0.75, rel=1e-14)


def test_sobolev_single_hat_quadrature():
    # ||e||_4 = h^(1/4) under lumped quadrature, ||grad e||_2 = sqrt(2/h)
    d = Domain.unit(1, 5)
    e = hat(d, 2)
    h = 0.25
    expected = h**0.25 / np.sqrt(2 / h)
    assert estimate_sobolev_constant(d, 4.0, [e]) == pytest.approx(expected, rel=1e-14)


def test_sobolev_1d_sup_constant():
    # sup|u| <= sqrt(x(1-x)) ||u'||_2 <= ||u'||_2 / 2 with equality for the centred tent
    assert estimate_sobolev_constant(Domain.unit(1, 33)) == pytest.approx(0.5, rel=1e-12)


def test_sobolev_exponent_rejected():
    with pytest.raises(GridError):
        estimate_sobolev_constant(Domain.unit(1, 5), 2.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 7), min_size=1, max_size=7, unique=True),
       st.floats(0.1, 100.0))
def test_sobolev_monotone_and_homogeneous(nodes, scale):
    d = Domain.unit(1, 9)
    probes = [hat(d, k) + 0.5 * hat(d, max(k - 1, 1)) for k in nodes]
    small = estimate_sobolev_constant(d, 4.0, probes[:1])
    big = estimate_sobolev_constant(d, 4.0, probes)
    assert big >= small
    scaled = estimate_sobolev_constant(d, 4.0, [scale * p for p in probes])
    assert scaled == pytest.approx(big, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_symmetry(seed):
    d = Domain.unit(2, 6)
    rng = np.random.default_rng(seed)
    op = assemble_operator(d, variable_field(d, rng))
    w, v = rng.normal(size=(2, d.n_nodes))
    w[d.boundary] = v[d.boundary] = 0
    assert energy(op, w, v) == pytest.approx(energy(op, v, w), rel=1e-12, abs=1e-12)


def test_implicit_solve_matches_dense():
    d = Domain.unit(2, 7)
    op = assemble_operator(d)
    rhs = np.random.default_rng(5).normal(size=(d.interior.size, 3))
    dense = np.eye(d.interior.size) + 0.01 * op.matrix.toarray()
    np.testing.assert_allclose(op.solve_implicit(0.01, rhs), np.linalg.solve(dense, rhs), rtol=1e-12)


def test_csv_dump(tmp_path):
    d = Domain.unit(1, 5)
    nodes, mat = dump_operator_csv(assemble_operator(d), tmp_path)
    rows = nodes.read_text().splitlines()
    assert rows[0] == "node,x0,boundary" and len(rows) == 6
    trip = [r.split(",") for r in mat.read_text().splitlines()[1:]]
    assert len(trip) == 7
    assert {(int(r), int(c)) for r, c, _ in trip} >= {(1, 1), (1, 2), (2, 1)}
    assert float(trip[0][2]) == 32.0
