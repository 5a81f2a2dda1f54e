"""Semi-implicit Euler-Maruyama stepping for the reflected SPDE.

Each step solves ``(I + dt A) u~ = u_k + dt f + dt div_h g + sum_j h_j dB_j``
(coefficients frozen at ``u_k``) and then reflects on the obstacle, either by
projection ``u = max(u~, S)`` or by a penalty.  Paths are batched as columns
of the right-hand side; each column is solved exactly as it would be alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import DiscreteOperator, Domain, assemble_operator
from .model import (
    AuditError,
    DominatingData,
    Problem,
    contraction_check,
    lipschitz_audit,
)
from .noise import BrownianPath, generate_path, stack_increments
from .norms import SpaceTimeField

SCHEMES = ("projection", "penalization")
DOMINATOR_TOL = 1e-8


class NumericalError(RuntimeError):
    pass


class StabilityError(NumericalError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    scheme: str = "projection"
    eps_pen: float = 1e-3
    J: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.scheme == "penalization" and not self.eps_pen > 0:
            raise ValueError("penalty parameter must be positive")
        if self.J < 1:
            raise ValueError("J must be >= 1")
        k = self.T / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError(f"T/dt = {k} is not an integer")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class ReflectionMeasure:
    """Mass increments ``dnu[k, node]`` (field units x volume) for steps ``k < K``."""

    increments: np.ndarray
    dt: float
    domain: Domain

    @property
    def total_mass(self) -> float:
        return float(self.increments.sum())

    def density(self) -> np.ndarray:
        """Space-time density (per unit time and volume) on interior nodes, zero elsewhere."""
        w = self.domain.interior_weights
        safe = np.where(w > 0, w, 1.0)
        return np.where(w > 0, self.increments / (self.dt * safe), 0.0)


@dataclass
class BatchSolution:
    problem: Problem
    config: SolverConfig
    seeds: list
    u: np.ndarray          # (K+1, P, N)
    nu: np.ndarray         # (K, P, N)
    S: np.ndarray          # (K+1, N)
    dB: np.ndarray         # (P, K, J)
    boundary: np.ndarray | None = None   # (P, K+1)
    s_prime: np.ndarray | None = None    # (K+1, P, N)
    operator: DiscreteOperator | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.u.shape[1]

    def path(self, i: int) -> tuple[SpaceTimeField, ReflectionMeasure]:
        d = self.problem.domain
        return (SpaceTimeField(self.u[:, i], self.config.dt, d),
                ReflectionMeasure(self.nu[:, i], self.config.dt, d))


def check_stability(dt: float, C: float, limit: float = 0.5) -> None:
    """Explicit reaction part must satisfy ``dt * C <= limit``."""
    if dt * C > limit:
        raise StabilityError(f"dt*C = {dt * C:.3g} exceeds {limit}; reduce the time step")


def _predictor(op: DiscreteOperator, coeffs, t: float, U: np.ndarray, dB_k: np.ndarray, dt: float,
               ub_next: np.ndarray | None) -> np.ndarray:
    d = op.domain
    x = d.coords
    Z = d.grad(U)
    F = coeffs.f(t, x, U, Z)
    G = coeffs.g(t, x, U, Z)
    H = coeffs.h(t, x, U, Z)
    rhs = U + dt * F + dt * d.div(G) + np.einsum("...nj,...j->...n", H, dB_k)
    rI = rhs[..., d.interior]
    out = np.zeros_like(U)
    if ub_next is not None:
        ub = np.broadcast_to(np.asarray(ub_next, float)[..., None], U.shape[:-1] + (d.boundary.size,))
        rI = rI - dt * (op.coupling @ ub.reshape(-1, d.boundary.size).T).T.reshape(rI.shape)
        out[..., d.boundary] = ub
    try:
        sol = op.solve_implicit(dt, rI.reshape(-1, rI.shape[-1]).T).T
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
        raise NumericalError(f"implicit solve failed: {exc}") from exc
    out[..., d.interior] = sol.reshape(rI.shape)
    return out


def step_projection(u_k: np.ndarray, S_next: np.ndarray, coeffs, op: DiscreteOperator, dB_k: np.ndarray,
                    dt: float, t: float = 0.0, ub_next=None) -> tuple[np.ndarray, np.ndarray]:
    """One step with reflection by projection; returns ``(u_{k+1}, dnu_k)``."""
    ut = _predictor(op, coeffs, t, u_k, dB_k, dt, ub_next)
    return _reflect_projection(op.domain, ut, S_next)


def _reflect_projection(d: Domain, ut: np.ndarray, S_next: np.ndarray):
    u = ut.copy()
    I = d.interior
    u[..., I] = np.maximum(ut[..., I], np.broadcast_to(S_next, ut.shape)[..., I])
    return u, (u - ut) * d.cell_volume


def step_penalized(u_k: np.ndarray, S_next: np.ndarray, coeffs, op: DiscreteOperator, dB_k: np.ndarray,
                   dt: float, eps_pen: float, t: float = 0.0, ub_next=None) -> tuple[np.ndarray, np.ndarray]:
    """One step with the penalty ``(1/eps) (S - u)^+`` taken implicitly node-wise."""
    ut = _predictor(op, coeffs, t, u_k, dB_k, dt, ub_next)
    return _reflect_penalty(op.domain, ut, S_next, dt / eps_pen)


def _reflect_penalty(d: Domain, ut: np.ndarray, S_next: np.ndarray, r: float):
    u = ut.copy()
    I = d.interior
    s = np.broadcast_to(S_next, ut.shape)[..., I]
    ui = ut[..., I]
    u[..., I] = np.where(ui < s, (ui + r * s) / (1 + r), ui)
    return u, (u - ut) * d.cell_volume


def solve_dominating_obstacle(data: DominatingData, op: DiscreteOperator, dt: float,
                              increments: np.ndarray) -> np.ndarray:
    """Linear SPDE with null Dirichlet data driven by ``increments`` (K, J) or (P, K, J).

    Returns the lattice field (K+1, N) or (K+1, P, N).
    """
    inc = np.asarray(increments, float)
    single = inc.ndim == 2
    if single:
        inc = inc[None]
    P, K, J = inc.shape
    d = op.domain
    x = d.coords
    S = np.empty((K + 1, P, d.n_nodes))
    cur = np.broadcast_to(np.where(d.boundary_mask, 0.0, data.s0), (P, d.n_nodes)).copy()
    S[0] = cur
    for k in range(K):
        fp, gp, hp = data.parts(k * dt, x, J)
        rhs = cur + dt * fp + dt * d.div(gp) + inc[:, k] @ hp.T
        nxt = np.zeros_like(cur)
        nxt[:, d.interior] = op.solve_implicit(dt, rhs[:, d.interior].T).T
        cur = nxt
        S[k + 1] = cur
    if not np.all(np.isfinite(S)):
        raise NumericalError("dominating solution is not finite")
    return S[:, 0] if single else S


def audit_problem(problem: Problem, config: SolverConfig, require_strong: bool = False,
                  lipschitz_probes: int = 1000) -> None:
    c = problem.coeffs
    weak, strong = contraction_check(c.C, c.alpha, c.beta, problem.diffusion.lam)
    if not weak:
        raise AuditError(f"contraction 2a+b^2 < 2lam fails (a={c.alpha}, b={c.beta}, lam={problem.diffusion.lam})")
    if require_strong and not strong:
        raise AuditError(f"strong contraction a+b^2/2+72b^2 < lam fails (a={c.alpha}, b={c.beta})")
    rep = lipschitz_audit(c, problem.domain, lipschitz_probes)
    if not rep.ok:
        raise AuditError(f"Lipschitz audit failed: {rep.worst_excess}")
    if c.J != config.J:
        raise AuditError(f"coefficients built for J={c.J} but solver uses J={config.J}")
    d = problem.domain
    S0 = problem.obstacle.S(0.0, d.coords)
    I = d.interior
    bad = np.flatnonzero(problem.xi[I] < S0[I])
    if bad.size:
        raise AuditError(f"initial condition below obstacle at node {int(I[bad[0]])}")
    check_stability(config.dt, c.C)


def noise_for(seeds: Sequence[int], config: SolverConfig) -> np.ndarray:
    return stack_increments([generate_path(config.J, config.dt, config.steps, s) for s in seeds])


def solve_paths(problem: Problem, config: SolverConfig, seeds: Sequence[int] | None = None,
                increments: np.ndarray | None = None, op: DiscreteOperator | None = None,
                audit: bool = True, require_strong: bool = False) -> BatchSolution:
    """Solve a batch of paths sharing the problem data; noise from ``seeds`` or explicit ``increments``."""
    d = problem.domain
    op = op or assemble_operator(d, problem.diffusion)
    if audit:
        audit_problem(problem, config, require_strong)
    if increments is None:
        seeds = [config.seed] if seeds is None else list(seeds)
        increments = noise_for(seeds, config)
    else:
        increments = np.asarray(increments, float)
        if increments.ndim == 2:
            increments = increments[None]
        seeds = list(seeds) if seeds is not None else list(range(increments.shape[0]))
    P, K, J = increments.shape
    if K != config.steps or J != config.J:
        raise ValueError(f"increments {increments.shape} do not match {config.steps} steps x J={config.J}")
    dt = config.dt
    times = dt * np.arange(K + 1)
    S = problem.obstacle.field(times, d.coords)

    s_prime = None
    dom = problem.obstacle.dominator
    if dom is not None:
        s_prime = solve_dominating_obstacle(dom, op, dt, increments)
        I = d.interior
        excess = S[:, None, I] - s_prime[:, :, I]
        if audit and excess.max() > DOMINATOR_TOL:
            k, p, n = np.unravel_index(int(np.argmax(excess)), excess.shape)
            raise AuditError(f"obstacle exceeds its dominator by {excess.max():.3g} at step {k}, node {int(I[n])}")

    bpath = None
    if problem.boundary is not None:
        bpath = problem.boundary.path(increments, dt)

    u = np.empty((K + 1, P, d.n_nodes))
    nu = np.empty((K, P, d.n_nodes))
    cur = np.broadcast_to(problem.xi, (P, d.n_nodes)).copy()
    cur[:, d.boundary] = 0.0 if bpath is None else bpath[:, :1]
    u[0] = cur
    r = dt / config.eps_pen
    for k in range(K):
        ub = None if bpath is None else bpath[:, k + 1]
        ut = _predictor(op, problem.coeffs, k * dt, cur, increments[:, k], dt, ub)
        if config.scheme == "projection":
            cur, dnu = _reflect_projection(d, ut, S[k + 1])
        else:
            cur, dnu = _reflect_penalty(d, ut, S[k + 1], r)
        if not np.all(np.isfinite(cur)):
            raise NumericalError(f"non-finite values at step {k + 1}")
        u[k + 1] = cur
        nu[k] = dnu
    return BatchSolution(problem, config, seeds, u, nu, S, increments, bpath, s_prime, op)


def solve_path(problem: Problem, config: SolverConfig, path: BrownianPath | None = None,
               **kw) -> tuple[SpaceTimeField, ReflectionMeasure]:
    """Single trajectory ``(u, nu)``; the path defaults to the one generated from ``config.seed``."""
    inc = None if path is None else path.increments
    seeds = None if path is None else [path.seed]
    sol = solve_paths(problem, config, seeds=seeds, increments=inc, **kw)
    return sol.path(0)


@dataclass(frozen=True)
class TestFunction:
    """Separable test function ``phi(t, x) = spatial(x) * temporal(t, T)``."""

    __test__ = False  # keep pytest from collecting it

    name: str
    spatial: Callable[[Domain], np.ndarray]
    temporal: Callable[[float, float], float]

    def values(self, domain: Domain, times: np.ndarray, T: float) -> np.ndarray:
        s = self.spatial(domain)
        if np.any(s[domain.boundary] != 0):
            raise ValueError(f"test function {self.name!r} does not vanish on the boundary")
        return np.array([self.temporal(float(t), T) for t in times])[:, None] * s[None, :]


def _bump(domain: Domain) -> np.ndarray:
    out = np.ones(domain.n_nodes)
    for i, e in enumerate(domain.extents):
        s = domain.coords[:, i] / e
        out = out * 16 * s**2 * (1 - s) ** 2
    return np.where(domain.boundary_mask, 0.0, out)


TEST_FUNCTIONS = {
    "sine": TestFunction("sine", lambda d: d.profile(), lambda t, T: 1.0),
    "sine_cutoff": TestFunction("sine_cutoff", lambda d: d.profile(),
                                lambda t, T: math.cos(0.5 * math.pi * t / T)),
    "bump_decay": TestFunction("bump_decay", _bump, lambda t, T: math.exp(-t)),
}


def weak_form_residual(u: np.ndarray, nu: np.ndarray, problem: Problem, phi: TestFunction | str,
                       dB: np.ndarray, dt: float, op: DiscreteOperator | None = None) -> float:
    """Largest ``|LHS - RHS|`` over lattice times of the weak formulation for one path.

    ``u`` is (K+1, N), ``nu`` (K, N), ``dB`` (K, J).  Quadrature: the energy
    uses ``u_{k+1}``, drift and noise terms are frozen at ``(t_k, u_k)`` and
    paired with ``phi_k`` (Itô sums), as is the reflection measure.
    """
    phi = TEST_FUNCTIONS[phi] if isinstance(phi, str) else phi
    d = problem.domain
    op = op or assemble_operator(d, problem.diffusion)
    K = nu.shape[0]
    times = dt * np.arange(K + 1)
    ph = phi.values(d, times, times[-1] if K else 1.0)
    w = d.interior_weights
    x = d.coords
    c = problem.coeffs
    Z = d.grad(u[:K])
    res = 0.0
    worst = 0.0
    for k in range(K):
        F = c.f(times[k], x, u[k], Z[k])
        G = c.g(times[k], x, u[k], Z[k])
        H = c.h(times[k], x, u[k], Z[k])
        lhs = (np.dot(w, u[k + 1] * ph[k + 1]) - np.dot(w, u[k] * ph[k])
               - np.dot(w, u[k + 1] * (ph[k + 1] - ph[k]))
               + dt * np.dot(ph[k], op.stiffness @ u[k + 1])
               + dt * np.sum(w[:, None] * G * d.grad(ph[k])))
        rhs = (dt * np.dot(w, F * ph[k]) + np.dot(w, (H @ dB[k, : H.shape[1]]) * ph[k])
               + np.dot(ph[k], nu[k]))
        res += lhs - rhs
        worst = max(worst, abs(res))
    return float(worst)
