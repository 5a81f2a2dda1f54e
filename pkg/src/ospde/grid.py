"""Uniform rectangular grids and the divergence-form operator on them.

The operator is assembled as a lowest-order (P1) stiffness matrix over all
grid nodes; restricting it to interior rows/columns and dividing by the
lumped nodal mass gives the Dirichlet operator ``A``.  On a uniform grid with
a scalar coefficient this is exactly the (2d+1)-point Laplacian stencil and
an M-matrix.  In 2D each square is split along its lower-left/upper-right
diagonal.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class GridError(ValueError):
    pass


class EllipticityError(ValueError):
    def __init__(self, node: int, message: str):
        super().__init__(f"node {node}: {message}")
        self.node = node


@dataclass(frozen=True)
class Domain:
    """Rectangle ``prod_i (0, extents[i])`` with ``n`` nodes per axis (boundary included)."""

    dim: int
    extents: tuple[float, ...]
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.dim}")
        if len(self.extents) != self.dim:
            raise GridError("one extent per axis required")
        if any(not (e > 0 and math.isfinite(e)) for e in self.extents):
            raise GridError("extents must be positive and finite")
        if self.n < 3:
            raise GridError(f"need at least 3 nodes per axis, got {self.n}")

    @classmethod
    def unit(cls, dim: int = 1, n: int = 65) -> "Domain":
        return cls(dim, (1.0,) * dim, n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(e / (self.n - 1) for e in self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(0.0, e, self.n) for e in self.extents)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim), C-order flattening (axis 0 slowest)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dim, -1)
        return np.any((idx == 0) | (idx == self.n - 1), axis=0)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def weights(self) -> np.ndarray:
        """Lumped (trapezoidal) nodal quadrature weights; they sum to the domain volume."""
        w1 = [np.full(self.n, hi) for hi in self.h]
        for w in w1:
            w[0] *= 0.5
            w[-1] *= 0.5
        out = w1[0]
        for w in w1[1:]:
            out = np.multiply.outer(out, w)
        return out.ravel()

    @cached_property
    def interior_weights(self) -> np.ndarray:
        w = self.weights.copy()
        w[self.boundary] = 0.0
        return w

    def profile(self) -> np.ndarray:
        """``prod_i sin(pi x_i / L_i)``: the first Dirichlet eigenfunction, sampled at nodes."""
        return np.where(self.boundary_mask, 0.0, sine_profile(self.coords, self.extents))

    @cached_property
    def gradient(self) -> tuple[sp.csr_matrix, ...]:
        """Nodal gradient: centered differences inside, one-sided at boundary nodes."""
        mats = []
        for axis in range(self.dim):
            d1 = _diff_1d(self.n, self.h[axis])
            factors = [sp.identity(self.n, format="csr")] * self.dim
            factors[axis] = d1
            m = factors[0]
            for f in factors[1:]:
                m = sp.kron(m, f, format="csr")
            mats.append(m.tocsr())
        return tuple(mats)

    @cached_property
    def divergence(self) -> tuple[sp.csr_matrix, ...]:
        """Per-axis ``div_h`` = minus the weighted adjoint of :attr:`gradient`.

        ``<div_h g, phi> = -<g, grad_h phi>`` holds exactly in the lumped inner
        product for every ``phi`` vanishing on the boundary.
        """
        w = self.weights
        winv = sp.diags(1.0 / w)
        wd = sp.diags(w)
        return tuple((-(winv @ g.T @ wd)).tocsr() for g in self.gradient)

    def grad(self, u: np.ndarray) -> np.ndarray:
        """Nodal gradient of ``u`` (..., n_nodes) -> (..., n_nodes, dim)."""
        flat = u.reshape(-1, self.n_nodes)
        comps = [(g @ flat.T).T for g in self.gradient]
        return np.stack(comps, axis=-1).reshape(u.shape + (self.dim,))

    def div(self, g: np.ndarray) -> np.ndarray:
        """``div_h`` of a vector field (..., n_nodes, dim) -> (..., n_nodes)."""
        lead = g.shape[:-2]
        flat = g.reshape(-1, self.n_nodes, self.dim)
        out = np.zeros((flat.shape[0], self.n_nodes))
        for i, dv in enumerate(self.divergence):
            out += (dv @ flat[:, :, i].T).T
        return out.reshape(lead + (self.n_nodes,))

    @cached_property
    def identity_stiffness(self) -> sp.csr_matrix:
        return _stiffness(self, np.broadcast_to(np.eye(self.dim), (self.n_nodes, self.dim, self.dim)))

    def grad_sq_norm(self, u: np.ndarray) -> np.ndarray:
        """``||grad u||_2^2`` for the piecewise-linear interpolant of ``u`` (..., n_nodes)."""
        flat = u.reshape(-1, self.n_nodes)
        ku = (self.identity_stiffness @ flat.T).T
        return np.einsum("pn,pn->p", flat, ku).reshape(u.shape[:-1])


def sine_profile(x: np.ndarray, extents: Sequence[float]) -> np.ndarray:
    out = np.ones(x.shape[0])
    for i, e in enumerate(extents):
        out = out * np.sin(np.pi * x[:, i] / e)
    return out


def _diff_1d(n: int, h: float) -> sp.csr_matrix:
    rows, cols, vals = [0, 0], [0, 1], [-1.0 / h, 1.0 / h]
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [n - 1, n - 1]
    cols += [n - 2, n - 1]
    vals += [-1.0 / h, 1.0 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class DiffusionField:
    """Symmetric coefficient matrix ``a(x)`` at every node with declared bounds ``lam <= a <= Lam``."""

    values: np.ndarray  # (n_nodes, d, d)
    lam: float
    Lam: float

    @classmethod
    def constant(cls, domain: Domain, c: float = 1.0) -> "DiffusionField":
        vals = np.broadcast_to(c * np.eye(domain.dim), (domain.n_nodes, domain.dim, domain.dim)).copy()
        return cls(vals, c, c)

    @classmethod
    def from_function(cls, domain: Domain, fn: Callable[[np.ndarray], np.ndarray],
                      lam: float | None = None, Lam: float | None = None) -> "DiffusionField":
        """``fn(coords)`` returns (n_nodes,) scalars or (n_nodes, d, d) tensors."""
        raw = np.asarray(fn(domain.coords), dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None, None] * np.eye(domain.dim)
        eig = np.linalg.eigvalsh(0.5 * (raw + np.swapaxes(raw, 1, 2)))
        lam = float(eig.min()) if lam is None else lam
        Lam = float(eig.max()) if Lam is None else Lam
        return cls(raw, lam, Lam)

    def validate(self, tol: float = 1e-12) -> None:
        a = self.values
        if not (self.lam > 0 and self.Lam >= self.lam):
            raise EllipticityError(-1, f"bounds must satisfy 0 < lam <= Lam, got {self.lam}, {self.Lam}")
        asym = np.abs(a - np.swapaxes(a, 1, 2)).max(axis=(1, 2))
        bad = np.flatnonzero(asym > tol * np.maximum(1.0, np.abs(a).max(axis=(1, 2))))
        if bad.size:
            raise EllipticityError(int(bad[0]), "coefficient matrix is not symmetric")
        eig = np.linalg.eigvalsh(a)
        bad = np.flatnonzero((eig[:, 0] < self.lam * (1 - tol)) | (eig[:, -1] > self.Lam * (1 + tol)))
        if bad.size:
            k = int(bad[0])
            raise EllipticityError(k, f"eigenvalues {eig[k]} outside [{self.lam}, {self.Lam}]")

    @property
    def is_scalar(self) -> bool:
        d = self.values.shape[-1]
        off = self.values * (1 - np.eye(d))
        diag = np.diagonal(self.values, axis1=1, axis2=2)
        return bool(np.all(off == 0) and np.all(diag == diag[:, :1]))


def _harmonic(tensors: np.ndarray) -> np.ndarray:
    """Matrix harmonic mean over axis 1: (m, k, d, d) -> (m, d, d)."""
    inv = np.linalg.inv(tensors)
    return np.linalg.inv(inv.mean(axis=1))


def _stiffness(domain: Domain, a: np.ndarray) -> sp.csr_matrix:
    n = domain.n
    if domain.dim == 1:
        (h,) = domain.h
        left = np.arange(n - 1)
        ae = _harmonic(a[np.stack([left, left + 1], axis=1)])[:, 0, 0]
        rows = np.concatenate([left, left, left + 1, left + 1])
        cols = np.concatenate([left, left + 1, left, left + 1])
        vals = np.concatenate([ae, -ae, -ae, ae]) / h
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    hx, hy = domain.h
    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00, v10 = i * n + j, (i + 1) * n + j
    v11, v01 = (i + 1) * n + j + 1, i * n + j + 1
    # barycentric gradients, rows = local vertices
    g1 = np.array([[-1 / hx, 0.0], [1 / hx, -1 / hy], [0.0, 1 / hy]])
    g2 = np.array([[0.0, -1 / hy], [1 / hx, 0.0], [-1 / hx, 1 / hy]])
    area = 0.5 * hx * hy
    rows, cols, vals = [], [], []
    for verts, grads in (((v00, v10, v11), g1), ((v00, v11, v01), g2)):
        tri = np.stack(verts, axis=1)
        at = _harmonic(a[tri])
        local = area * np.einsum("ak,mkl,bl->mab", grads, at, grads)
        rows.append(np.repeat(tri, 3, axis=1).ravel())
        cols.append(np.tile(tri, (1, 3)).ravel())
        vals.append(local.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(domain.n_nodes, domain.n_nodes),
    )


@dataclass
class DiscreteOperator:
    """Stiffness over all nodes plus the Dirichlet operator ``A`` on interior nodes."""

    domain: Domain
    diffusion: DiffusionField
    stiffness: sp.csr_matrix
    _factors: dict = field(default_factory=dict, repr=False)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """``A`` restricted to interior nodes, units 1/length^2."""
        idx = self.domain.interior
        return (self.stiffness[idx][:, idx] / self.domain.cell_volume).tocsr()

    @cached_property
    def coupling(self) -> sp.csr_matrix:
        """Interior-to-boundary block of ``A`` (lifts Dirichlet data)."""
        d = self.domain
        return (self.stiffness[d.interior][:, d.boundary] / d.cell_volume).tocsr()

    @property
    def lam(self) -> float:
        return self.diffusion.lam

    def implicit_factor(self, dt: float):
        """Banded Cholesky factor of ``I + dt*A`` (cached per time step)."""
        key = float(dt)
        if key not in self._factors:
            m = sp.identity(self.matrix.shape[0], format="csr") + dt * self.matrix
            self._factors[key] = sla.cholesky_banded(_to_upper_banded(m))
        return self._factors[key]

    def solve_implicit(self, dt: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I + dt*A) x = rhs`` for rhs of shape (n_interior,) or (n_interior, P)."""
        return sla.cho_solve_banded((self.implicit_factor(dt), False), rhs)

    def energy(self, w: np.ndarray, v: np.ndarray) -> np.ndarray:
        return energy(self, w, v)


def _to_upper_banded(m: sp.spmatrix) -> np.ndarray:
    m = m.tocoo()
    upper = m.col >= m.row
    r, c, v = m.row[upper], m.col[upper], m.data[upper]
    bw = int((c - r).max()) if r.size else 0
    ab = np.zeros((bw + 1, m.shape[0]))
    np.add.at(ab, (bw + r - c, c), v)
    return ab


def assemble_operator(domain: Domain, a: DiffusionField | None = None) -> DiscreteOperator:
    a = DiffusionField.constant(domain) if a is None else a
    if a.values.shape != (domain.n_nodes, domain.dim, domain.dim):
        raise GridError(f"diffusion field shape {a.values.shape} does not match grid")
    a.validate()
    return DiscreteOperator(domain, a, _stiffness(domain, a.values))


def energy(op: DiscreteOperator, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Discrete energy form ``sum a^{ij} d_i w d_j v`` for full-grid or interior slices.

    Leading axes broadcast; the last axis indexes nodes.
    """
    d = op.domain
    w, v = np.asarray(w, float), np.asarray(v, float)
    if w.shape[-1] != v.shape[-1]:
        raise GridError("shape mismatch between arguments")
    if w.shape[-1] == d.n_nodes:
        k = op.stiffness
    elif w.shape[-1] == d.interior.size:
        k = op.stiffness[d.interior][:, d.interior]
    else:
        raise GridError(f"last axis {w.shape[-1]} matches neither the grid nor its interior")
    wf = w.reshape(-1, w.shape[-1])
    vf = np.broadcast_to(v, w.shape).reshape(-1, w.shape[-1])
    kv = (k @ vf.T).T
    out = np.einsum("pn,pn->p", wf, kv)
    return out.reshape(w.shape[:-1]) if w.ndim > 1 else float(out[0])


def lp_norm(u: np.ndarray, weights: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.abs(u).max())
    return float(np.sum(weights * np.abs(u) ** p) ** (1.0 / p))


def default_two_star(dim: int) -> float:
    """Sobolev exponent: infinite in 1D, 4 in 2D (any value in (2, inf) is admissible there)."""
    return math.inf if dim == 1 else 4.0


def default_probes(domain: Domain) -> np.ndarray:
    """Hat functions at every interior node, low sine modes and the distance-to-boundary tent."""
    probes = []
    for k in domain.interior:
        e = np.zeros(domain.n_nodes)
        e[k] = 1.0
        probes.append(e)
    x = domain.coords
    for modes in np.ndindex(*(4,) * domain.dim):
        m = np.ones(domain.n_nodes)
        for i, k in enumerate(modes):
            m = m * np.sin((k + 1) * np.pi * x[:, i] / domain.extents[i])
        probes.append(m)
    tent = np.min(np.concatenate([x, np.asarray(domain.extents) - x], axis=1), axis=1)
    probes.append(tent)
    return np.array(probes)


def estimate_sobolev_constant(domain: Domain, two_star: float | None = None,
                              probes: Iterable[np.ndarray] | None = None) -> float:
    """Largest ratio ``||u||_{2*} / ||grad u||_2`` over a probe family of grid functions."""
    two_star = default_two_star(domain.dim) if two_star is None else two_star
    if not two_star > 2:
        raise GridError(f"Sobolev exponent must exceed 2, got {two_star}")
    probes = default_probes(domain) if probes is None else np.atleast_2d(np.asarray(list(probes), float))
    best = 0.0
    for u in probes:
        u = np.where(domain.boundary_mask, 0.0, u)
        g2 = float(domain.grad_sq_norm(u))
        if g2 <= 0:
            continue
        best = max(best, lp_norm(u, domain.weights, two_star) / math.sqrt(g2))
    return best


def dump_operator_csv(op: DiscreteOperator, directory: str | Path) -> tuple[Path, Path]:
    """Write ``nodes.csv`` (index, coordinates, boundary flag) and ``matrix.csv`` (interior triplets)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    d = op.domain
    nodes = directory / "nodes.csv"
    with nodes.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node"] + [f"x{i}" for i in range(d.dim)] + ["boundary"])
        for k, (xk, b) in enumerate(zip(d.coords, d.boundary_mask)):
            wr.writerow([k, *map(repr, xk.tolist()), int(b)])
    mat = directory / "matrix.csv"
    coo = op.matrix.tocoo()
    with mat.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["row", "col", "value"])
        for r, c, v in zip(d.interior[coo.row], d.interior[coo.col], coo.data):
            wr.writerow([int(r), int(c), repr(float(v))])
    return nodes, mat
