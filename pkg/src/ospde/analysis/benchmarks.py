"""Reference problems with known answers or known structure."""
from __future__ import annotations

import math

import numpy as np

from ..grid import DiffusionField, Domain
from ..model import AffineFamily, DominatingData, ItoBoundaryProcess, Obstacle, Problem

CONTACT_TIME = math.log(2) / math.pi**2


def obstacle_heat_exact(t: float | np.ndarray, x: np.ndarray) -> np.ndarray:
    """``max(exp(-pi^2 t), 1/2) sin(pi x)``: heat flow from ``sin`` caught by ``sin/2``."""
    amp = np.maximum(np.exp(-math.pi**2 * np.asarray(t, float)), 0.5)
    return np.multiply.outer(amp, np.sin(math.pi * x))


def obstacle_heat_mass(T: float) -> float:
    """Total reflection mass on ``[0, T]``: density ``pi^2/2 sin(pi x)`` after contact."""
    return max(T - CONTACT_TIME, 0.0) * 0.5 * math.pi**2 * (2 / math.pi)


def obstacle_heat(n: int = 129, J: int = 1, dominator_amp: float | None = None) -> Problem:
    """``xi = sin(pi x)``, ``S = sin(pi x)/2``, no forcing and no noise.

    With ``dominator_amp`` set, the obstacle carries a dominator with
    ``S'_0 = S`` and stationary forcing ``f' = amp * pi^2 sin(pi x)``; any
    ``amp >= 1/2`` keeps ``S' >= S`` because the discrete sine is an exact
    eigenvector of the operator with eigenvalue below ``pi^2``.
    """
    d = Domain.unit(1, n)
    dom = None
    if dominator_amp is not None:
        dom = DominatingData.sine(d, 0.5, dominator_amp * math.pi**2)
    obstacle = Obstacle.sine(d, 0.5, dominator=dom)
    return Problem(d, DiffusionField.constant(d), AffineFamily().build(1, J), obstacle, d.profile(),
                   name="obstacle-heat")


def linear_stochastic(n: int = 33, J: int = 4, amp: float = 1.0, beta_part: float = 0.0) -> Problem:
    """Additive sine forcing and noise, linear damping, a static sine obstacle below zero."""
    d = Domain.unit(1, n)
    fam = AffineFamily(f_sin=1.0 * amp, f_y=-0.5, h_sin=0.5 * amp, h_z=beta_part, g_sin=0.2 * amp)
    obstacle = Obstacle.sine(d, -0.2 * amp, dominator=DominatingData.zero(d))
    return Problem(d, DiffusionField.constant(d), fam.build(1, J), obstacle, 0.5 * amp * d.profile(),
                   name="linear-stochastic", meta={"family": fam})


def dominated_max_principle(n: int = 33, J: int = 4, steps: int = 100, m: float = 1.0, b: float = 0.5,
                            sigma: float = 0.3) -> tuple[Problem, ItoBoundaryProcess]:
    """Data strictly dominated by the boundary process, so ``u <= M`` must hold exactly.

    ``xi < m``, ``S < M``, ``g = 0``, ``f < b`` and ``h_j = sigma_j`` spatially constant.
    """
    d = Domain.unit(1, n)
    w = np.arange(1, J + 1, dtype=float) ** -1.0
    fam = AffineFamily(f_const=b - 0.3, f_sin=0.2, h_const=sigma)
    M = ItoBoundaryProcess.constant(m, b, sigma * w, steps)
    obstacle = Obstacle.sine(d, 0.2, offset=m - 2.0, dominator=DominatingData.zero(d))  # far below M
    xi = np.full(d.n_nodes, m - 0.25) + 0.1 * d.profile()
    return Problem(d, DiffusionField.constant(d), fam.build(1, J), obstacle, xi, M,
                   name="dominated-max-principle"), M


def linear_max_principle(n: int = 33, J: int = 4, steps: int = 100, amp: float = 1.0,
                         f_y: float = -0.5, shape: float = 1.0) -> tuple[Problem, ItoBoundaryProcess]:
    """Linear problem whose solution may exceed the boundary process inside the domain."""
    d = Domain.unit(1, n)
    w = np.arange(1, J + 1, dtype=float) ** -1.0
    fam = AffineFamily(f_const=0.5 * amp, f_sin=2.0 * amp * shape, f_y=f_y, g_sin=0.3 * amp,
                       h_sin=0.4 * amp)
    M = ItoBoundaryProcess.constant(0.2 * amp, 0.1 * amp, 0.1 * amp * w, steps)
    obstacle = Obstacle.inactive()
    xi = amp * (0.2 + 0.5 * shape * d.profile())
    return Problem(d, DiffusionField.constant(d), fam.build(1, J), obstacle, xi, M,
                   name="linear-max-principle", meta={"family": fam}), M
