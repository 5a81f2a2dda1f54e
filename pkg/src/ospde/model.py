"""Problem data: coefficients, obstacle and its dominator, boundary Itô process.

Evaluators are pure functions of ``(t, x, y, z)`` with ``x`` of shape
(N, d), ``y`` of shape (..., N) and ``z`` of shape (..., N, d).  They return
(..., N) for ``f``, (..., N, d) for ``g`` and (..., N, J) for ``h``, so a
batch of paths is evaluated in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import DiffusionField, Domain, sine_profile

Evaluator = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
INACTIVE_LEVEL = -1e9


class AuditError(RuntimeError):
    """A structural hypothesis of the model is violated by the supplied data."""


def contraction_check(C: float, alpha: float, beta: float, lam: float) -> tuple[bool, bool]:
    """(weak, strong) contraction flags: ``2a + b^2 < 2 lam`` and ``a + b^2/2 + 72 b^2 < lam``."""
    if min(C, alpha, beta) < 0 or not lam > 0:
        raise ValueError("constants must be nonnegative and lam positive")
    weak = 2 * alpha + beta**2 < 2 * lam
    strong = alpha + beta**2 / 2 + 72 * beta**2 < lam
    return weak, strong


@dataclass(frozen=True)
class CoefficientSet:
    f: Evaluator
    g: Evaluator
    h: Evaluator
    C: float
    alpha: float
    beta: float
    J: int
    yz_independent: bool = False
    name: str = "custom"

    def zero_point(self, t: float, x: np.ndarray):
        """``(f0, g0, h0)`` at time ``t``: the coefficients evaluated at ``y = 0, z = 0``."""
        n, d = x.shape
        y, z = np.zeros(n), np.zeros((n, d))
        return self.f(t, x, y, z), self.g(t, x, y, z), self.h(t, x, y, z)

    @classmethod
    def zero(cls, d: int = 1, J: int = 1) -> "CoefficientSet":
        return AffineFamily().build(d, J)


@dataclass(frozen=True)
class AffineFamily:
    """Built-in family, affine in ``(y, z)`` up to a bounded ``sin(y)`` term.

    ``f = f_const + f_sin*P(x) + f_y*y + f_nl*sin(y) + f_z*sum_i z_i``,
    ``g_i = g_sin*P(x) + g_y*y + g_z*z_i``,
    ``h_j = w_j*(h_const + h_sin*P(x) + h_y*y + h_z*e.z)`` with ``w_j = j^-decay``,
    ``e = (1,..,1)/sqrt(d)`` and ``P`` the first Dirichlet sine mode.
    """

    f_const: float = 0.0
    f_sin: float = 0.0
    f_y: float = 0.0
    f_z: float = 0.0
    f_nl: float = 0.0
    g_sin: float = 0.0
    g_y: float = 0.0
    g_z: float = 0.0
    h_const: float = 0.0
    h_sin: float = 0.0
    h_y: float = 0.0
    h_z: float = 0.0
    noise_decay: float = 1.0

    def weights(self, J: int) -> np.ndarray:
        return np.arange(1, J + 1, dtype=float) ** -self.noise_decay

    def scaled(self, s: float) -> "AffineFamily":
        """Multiply the additive (data) part by ``s``; the Lipschitz part is unchanged."""
        return replace(self, f_const=s * self.f_const, f_sin=s * self.f_sin, g_sin=s * self.g_sin,
                       h_const=s * self.h_const, h_sin=s * self.h_sin)

    def lipschitz(self, d: int, J: int) -> tuple[float, float, float]:
        wn = float(np.linalg.norm(self.weights(J)))
        c_f = max(abs(self.f_y) + abs(self.f_nl), math.sqrt(d) * abs(self.f_z))
        c_g = math.sqrt(d) * abs(self.g_y)
        c_h = wn * abs(self.h_y)
        return max(c_f, c_g, c_h), abs(self.g_z), wn * abs(self.h_z)

    def build(self, d: int, J: int, extents: tuple[float, ...] | None = None) -> CoefficientSet:
        p = self
        ext = extents or (1.0,) * d
        w = self.weights(J)
        e = np.full(d, 1 / math.sqrt(d))

        def f(t, x, y, z):
            out = p.f_const + p.f_sin * sine_profile(x, ext) + p.f_y * y + p.f_z * z.sum(axis=-1)
            if p.f_nl:
                out = out + p.f_nl * np.sin(y)
            return out

        def g(t, x, y, z):
            base = p.g_sin * sine_profile(x, ext) + p.g_y * y
            return base[..., None] + p.g_z * z

        def h(t, x, y, z):
            base = p.h_const + p.h_sin * sine_profile(x, ext) + p.h_y * y + p.h_z * (z @ e)
            return base[..., None] * w

        C, alpha, beta = self.lipschitz(d, J)
        indep = not any((p.f_y, p.f_z, p.f_nl, p.g_y, p.g_z, p.h_y, p.h_z))
        return CoefficientSet(f, g, h, C, alpha, beta, J, indep, "affine")


@dataclass(frozen=True)
class LipschitzReport:
    ok: bool
    worst_excess: dict

    def __bool__(self):
        return self.ok


def lipschitz_audit(coeffs: CoefficientSet, domain: Domain, n_probes: int = 1000, seed: int = 0,
                    tol: float = 1e-9, scale: float = 10.0) -> LipschitzReport:
    """Sampled check of the three Lipschitz inequalities with the declared constants."""
    rng = np.random.default_rng(seed)
    d = domain.dim
    x = rng.uniform(0, 1, size=(n_probes, d)) * np.asarray(domain.extents)
    t = float(rng.uniform())
    y1, y2 = rng.uniform(-scale, scale, size=(2, n_probes))
    z1, z2 = rng.uniform(-scale, scale, size=(2, n_probes, d))
    dy = np.abs(y1 - y2)
    dz = np.linalg.norm(z1 - z2, axis=-1)
    C, a, b = coeffs.C, coeffs.alpha, coeffs.beta
    df = np.abs(coeffs.f(t, x, y1, z1) - coeffs.f(t, x, y2, z2))
    dg = np.linalg.norm(coeffs.g(t, x, y1, z1) - coeffs.g(t, x, y2, z2), axis=-1)
    dh = np.linalg.norm(coeffs.h(t, x, y1, z1) - coeffs.h(t, x, y2, z2), axis=-1)
    excess = {
        "f": float(np.max(df - C * (dy + dz))),
        "g": float(np.max(dg - (C * dy + a * dz))),
        "h": float(np.max(dh - (C * dy + b * dz))),
    }
    bound = tol * (1 + scale * (C + a + b))
    return LipschitzReport(all(v <= bound for v in excess.values()), excess)


@dataclass(frozen=True)
class DominatingData:
    """Data ``(S'_0, f', g', h')`` of the linear SPDE whose solution dominates the obstacle."""

    s0: np.ndarray
    f_prime: Callable[[float, np.ndarray], np.ndarray]
    g_prime: Callable[[float, np.ndarray], np.ndarray] | None = None
    h_prime: Callable[[float, np.ndarray], np.ndarray] | None = None

    @classmethod
    def sine(cls, domain: Domain, s0_amp: float, f_amp: float, h_amp: float = 0.0,
             J: int = 1, noise_decay: float = 1.0) -> "DominatingData":
        ext = domain.extents
        w = np.arange(1, J + 1, dtype=float) ** -noise_decay
        s0 = s0_amp * domain.profile()

        def f_prime(t, x):
            return f_amp * sine_profile(x, ext)

        h_prime = None
        if h_amp:
            def h_prime(t, x):
                return h_amp * sine_profile(x, ext)[:, None] * w
        return cls(s0, f_prime, None, h_prime)

    @classmethod
    def zero(cls, domain: Domain) -> "DominatingData":
        return cls(np.zeros(domain.n_nodes), lambda t, x: np.zeros(x.shape[0]))

    def scaled(self, s: float) -> "DominatingData":
        def mul(fn):
            return None if fn is None else (lambda t, x: s * fn(t, x))
        return DominatingData(s * self.s0, mul(self.f_prime), mul(self.g_prime), mul(self.h_prime))

    def parts(self, t: float, x: np.ndarray, J: int):
        n, d = x.shape
        g = self.g_prime(t, x) if self.g_prime else np.zeros((n, d))
        h = self.h_prime(t, x) if self.h_prime else np.zeros((n, J))
        return self.f_prime(t, x), g, h


@dataclass(frozen=True)
class Obstacle:
    """Deterministic obstacle ``S(t, x)`` with optional dominating data."""

    S: Callable[[float, np.ndarray], np.ndarray]
    dominator: DominatingData | None = None
    name: str = "custom"
    active: bool = True

    def field(self, times: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.stack([self.S(float(t), x) for t in times])

    @classmethod
    def inactive(cls) -> "Obstacle":
        return cls(lambda t, x: np.full(x.shape[0], INACTIVE_LEVEL), None, "inactive", False)

    @classmethod
    def sine(cls, domain: Domain, amp: float, offset: float = 0.0, decay: float = 0.0,
             dominator: DominatingData | None = None) -> "Obstacle":
        ext = domain.extents

        def S(t, x):
            return amp * math.exp(-decay * t) * sine_profile(x, ext) + offset
        return cls(S, dominator, "sine")

    def scaled(self, s: float) -> "Obstacle":
        if not self.active:
            return self
        dom = None if self.dominator is None else self.dominator.scaled(s)
        fn = self.S
        return Obstacle(lambda t, x: s * fn(t, x), dom, self.name)


@dataclass(frozen=True)
class ItoBoundaryProcess:
    """``M_t = m + sum b dt + sum_j sigma_j dB_j`` with per-step drift (K,) and volatility (K, J)."""

    m: float
    b: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, float).ravel()
        s = np.asarray(self.sigma, float)
        if s.ndim == 1:
            s = s[:, None]
        if s.shape[0] != b.shape[0]:
            raise ValueError("drift and volatility must cover the same steps")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def constant(cls, m: float, b: float, sigma, steps: int) -> "ItoBoundaryProcess":
        sig = np.atleast_1d(np.asarray(sigma, float))
        return cls(m, np.full(steps, b), np.tile(sig, (steps, 1)))

    @property
    def steps(self) -> int:
        return self.b.shape[0]

    @property
    def J(self) -> int:
        return self.sigma.shape[1]

    def path(self, dB: np.ndarray, dt: float) -> np.ndarray:
        """Cumulative path (..., K+1) from increments (..., K', J') with K' >= K."""
        dB = np.asarray(dB, float)
        if dB.shape[-2] < self.steps or dB.shape[-1] < self.J:
            raise ValueError(f"increments {dB.shape} do not cover {self.steps} steps x {self.J} components")
        inc = self.b * dt + np.einsum("...kj,kj->...k", dB[..., : self.steps, : self.J], self.sigma)
        zero = np.zeros(inc.shape[:-1] + (1,))
        return self.m + np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1)

    def drift_functional(self, p: float, theta: float, dt: float, steps: int | None = None) -> float:
        k = self.steps if steps is None else steps
        e = 1 / (1 - theta)
        return float((dt * np.sum(np.abs(self.b[:k]) ** e)) ** (p * (1 - theta)))

    def volatility_functional(self, p: float, theta: float, dt: float, steps: int | None = None) -> float:
        k = self.steps if steps is None else steps
        e = 2 / (1 - theta)
        nrm = np.linalg.norm(self.sigma[:k], axis=1)
        return float((dt * np.sum(nrm**e)) ** (p * (1 - theta) / 2))

    def scaled(self, s: float) -> "ItoBoundaryProcess":
        return ItoBoundaryProcess(s * self.m, s * self.b, s * self.sigma)


def boundary_process_path(M: ItoBoundaryProcess, dB: np.ndarray, dt: float) -> np.ndarray:
    return M.path(dB, dt)


@dataclass
class Problem:
    domain: Domain
    diffusion: DiffusionField
    coeffs: CoefficientSet
    obstacle: Obstacle
    xi: np.ndarray
    boundary: ItoBoundaryProcess | None = None
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, float)
        if self.xi.shape != (self.domain.n_nodes,):
            raise ValueError(f"initial condition shape {self.xi.shape} does not match grid")


@dataclass
class ShiftedCoefficients:
    """Coefficients recentred at the dominator: ``fbar(y, z) = f(y + S', z + grad S') - f'``."""

    coeffs: CoefficientSet
    dominator: DominatingData
    s_prime: np.ndarray       # (K+1, P, N)
    grad_s_prime: np.ndarray  # (K+1, P, N, d)
    x: np.ndarray
    dt: float

    @property
    def C(self) -> float:
        return self.coeffs.C

    @property
    def alpha(self) -> float:
        return self.coeffs.alpha

    @property
    def beta(self) -> float:
        return self.coeffs.beta

    def _dom(self, k: int):
        return self.dominator.parts(k * self.dt, self.x, self.coeffs.J)

    def fbar(self, k: int, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        fp = self._dom(k)[0]
        return self.coeffs.f(k * self.dt, self.x, y + self.s_prime[k], z + self.grad_s_prime[k]) - fp

    def gbar(self, k: int, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        gp = self._dom(k)[1]
        return self.coeffs.g(k * self.dt, self.x, y + self.s_prime[k], z + self.grad_s_prime[k]) - gp

    def hbar(self, k: int, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        hp = self._dom(k)[2]
        return self.coeffs.h(k * self.dt, self.x, y + self.s_prime[k], z + self.grad_s_prime[k]) - hp

    def zero_fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(fbar0, gbar0, hbar0)`` over the lattice, shapes (K+1,P,N), (K+1,P,N,d), (K+1,P,N,J)."""
        K1 = self.s_prime.shape[0]
        y = np.zeros_like(self.s_prime[0])
        z = np.zeros_like(self.grad_s_prime[0])
        out = [np.stack([fn(k, y, z) for k in range(K1)]) for fn in (self.fbar, self.gbar, self.hbar)]
        return out[0], out[1], out[2]


def build_shifted(coeffs: CoefficientSet, obstacle: Obstacle, s_prime: np.ndarray, domain: Domain,
                  dt: float) -> ShiftedCoefficients:
    """Wire the shifted evaluators around a computed dominator ``s_prime`` (K+1, P, N)."""
    if obstacle.dominator is None:
        raise ValueError("obstacle has no dominating data")
    s_prime = np.asarray(s_prime, float)
    if s_prime.ndim == 2:
        s_prime = s_prime[:, None, :]
    if s_prime.shape[-1] != domain.n_nodes:
        raise ValueError(f"dominator lattice {s_prime.shape} does not match grid of {domain.n_nodes} nodes")
    grad = domain.grad(s_prime)
    return ShiftedCoefficients(coeffs, obstacle.dominator, s_prime, grad, domain.coords, dt)


def solve_dominating_obstacle(*args, **kwargs):
    """See :func:`ospde.solver.solve_dominating_obstacle`."""
    from .solver import solve_dominating_obstacle as impl
    return impl(*args, **kwargs)
