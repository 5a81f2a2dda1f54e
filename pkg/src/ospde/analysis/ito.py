"""Lattice versions of the L^l Itô formula for ``u - S'`` and of the positive-part formula.

Every integral is replaced by its lattice quadrature: lumped weights on
interior nodes in space, left-point (Itô) sums in time, the discrete energy
for the Dirichlet form, and ``<div_h g, phi'(w)>`` for the divergence term.
The reflection measure is paired with the post-step value ``w_{k+1}``, which
is where it is supported.  ``sgn(0) = 0`` and ``|w|^0 = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..grid import DiscreteOperator, assemble_operator
from ..model import ShiftedCoefficients
from ..solver import BatchSolution

TERMS = ("mass", "energy", "initial", "drift", "divergence", "martingale", "quadratic", "reflection")


@dataclass(frozen=True)
class C2Function:
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    ddphi: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


SQUARE = C2Function(lambda x: x * x, lambda x: 2 * x, lambda x: np.full_like(x, 2.0), "square")


def _pow(w: np.ndarray, e: float) -> np.ndarray:
    return np.ones_like(w) if e == 0 else np.abs(w) ** e


def _energy(op: DiscreteOperator, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``a^T K b`` for (P, N) arrays."""
    return np.einsum("pn,pn->p", a, (op.stiffness @ b.T).T)


def _accumulate(inc: dict, K: int, P: int) -> dict:
    out = {}
    for name, rows in inc.items():
        arr = np.zeros((K + 1, P))
        arr[1:] = np.cumsum(np.asarray(rows), axis=0)
        out[name] = arr
    return out


def _residual(terms: dict) -> np.ndarray:
    lhs = terms["mass"] + terms["energy"]
    rhs = (terms["initial"] + terms["drift"] + terms["divergence"] + terms["martingale"]
           + terms["quadratic"] + terms["reflection"])
    return np.max(np.abs(lhs - rhs), axis=0)


def ito_energy_terms(sol: BatchSolution, shifted: ShiftedCoefficients, l: float = 2.0) -> dict:
    """Cumulative terms (K+1, P) of the L^l identity for ``w = u - S'``."""
    if l < 2:
        raise ValueError("l must be >= 2")
    d = sol.problem.domain
    op = sol.operator or assemble_operator(d, sol.problem.diffusion)
    dt = sol.config.dt
    wts = d.interior_weights
    w = sol.u - shifted.s_prime
    K, P = sol.nu.shape[:2]
    Z = d.grad(w)

    def dphi(v):
        return l * np.sign(v) * _pow(v, l - 1)

    inc = {k: [] for k in ("energy", "drift", "divergence", "martingale", "quadratic", "reflection")}
    for k in range(K):
        wk = w[k]
        pk = dphi(wk)
        F = shifted.fbar(k, wk, Z[k])
        G = shifted.gbar(k, wk, Z[k])
        H = shifted.hbar(k, wk, Z[k])
        inc["energy"].append(dt * _energy(op, pk, wk))
        inc["drift"].append(dt * (F * pk) @ wts)
        inc["divergence"].append(dt * (d.div(G) * pk) @ wts)
        inc["martingale"].append((np.einsum("pnj,pj->pn", H, sol.dB[:, k, : H.shape[-1]]) * pk) @ wts)
        inc["quadratic"].append(dt * 0.5 * l * (l - 1) * (_pow(wk, l - 2) * np.sum(H * H, axis=-1)) @ wts)
        inc["reflection"].append(np.sum(dphi(w[k + 1]) * sol.nu[k], axis=-1))
    terms = _accumulate(inc, K, P)
    mass = (np.abs(w) ** l) @ wts
    terms["mass"] = mass
    terms["initial"] = np.broadcast_to(mass[0], mass.shape).copy()
    return terms


def ito_energy_residual(sol: BatchSolution, shifted: ShiftedCoefficients, l: float = 2.0) -> np.ndarray:
    """Per-path ``max_t |LHS - RHS|`` of the L^l identity."""
    return _residual(ito_energy_terms(sol, shifted, l))


def positive_part_terms(sol: BatchSolution, phi: C2Function = SQUARE) -> dict:
    """Cumulative terms (K+1, P) of the positive-part formula for ``u``."""
    if abs(float(phi.dphi(np.zeros(1))[0])) > 0:
        raise ValueError("phi'(0) must vanish")
    d = sol.problem.domain
    op = sol.operator or assemble_operator(d, sol.problem.diffusion)
    c = sol.problem.coeffs
    dt = sol.config.dt
    wts = d.interior_weights
    x = d.coords
    u = sol.u
    up = np.maximum(u, 0.0)
    K, P = sol.nu.shape[:2]
    Z = d.grad(u)
    inc = {k: [] for k in ("energy", "drift", "divergence", "martingale", "quadratic", "reflection")}
    for k in range(K):
        t = k * dt
        pk = phi.dphi(up[k])
        F = c.f(t, x, u[k], Z[k])
        G = c.g(t, x, u[k], Z[k])
        H = c.h(t, x, u[k], Z[k])
        inc["energy"].append(dt * _energy(op, pk, up[k]))
        inc["drift"].append(dt * (F * pk) @ wts)
        inc["divergence"].append(dt * (d.div(G) * pk) @ wts)
        inc["martingale"].append((np.einsum("pnj,pj->pn", H, sol.dB[:, k, : H.shape[-1]]) * pk) @ wts)
        ind = (u[k] > 0).astype(float)
        inc["quadratic"].append(dt * 0.5 * (phi.ddphi(up[k]) * ind * np.sum(H * H, axis=-1)) @ wts)
        inc["reflection"].append(np.sum(phi.dphi(up[k + 1]) * sol.nu[k], axis=-1))
    terms = _accumulate(inc, K, P)
    mass = phi.phi(up) @ wts
    terms["mass"] = mass
    terms["initial"] = np.broadcast_to(mass[0], mass.shape).copy()
    return terms


def positive_part_ito_residual(sol: BatchSolution, phi: C2Function = SQUARE) -> np.ndarray:
    return _residual(positive_part_terms(sol, phi))
