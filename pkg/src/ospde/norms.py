"""Mixed space-time norms, interpolation segments and the theta-scale norms.

Exponents are floats in [1, inf] with ``math.inf`` handled by explicit
branches (never raised to a power).  Quadrature is the lumped nodal rule in
space and the left-point rectangle rule in time, so ``t`` covers steps
``k < t/dt`` for finite ``q`` and ``k <= t/dt`` for ``q = inf``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Domain, default_two_star

INF = math.inf
Pair = tuple[float, float]


class NormError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceTimeField:
    """Values on the (time step x node) lattice; ``values`` has shape (steps + 1, n_nodes)."""

    values: np.ndarray
    dt: float
    domain: Domain

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] != self.domain.n_nodes:
            raise NormError(f"field shape {v.shape} does not match {self.domain.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise NormError("field contains non-finite values")
        if not self.dt > 0:
            raise NormError("dt must be positive")
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    def steps_to(self, t: float | None) -> int:
        if t is None:
            return self.steps
        k = int(round(t / self.dt))
        if t < 0 or k > self.steps or abs(k * self.dt - t) > 1e-9 * max(1.0, t):
            raise NormError(f"horizon {t} is not a lattice time within [0, {self.horizon}]")
        return k

    def map(self, fn) -> "SpaceTimeField":
        return SpaceTimeField(fn(self.values), self.dt, self.domain)

    def __mul__(self, c: float) -> "SpaceTimeField":
        return SpaceTimeField(self.values * c, self.dt, self.domain)

    __rmul__ = __mul__

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        return SpaceTimeField(self.values + other.values, self.dt, self.domain)


def _check_exponent(p: float) -> None:
    if not (p >= 1):
        raise NormError(f"exponent must lie in [1, inf], got {p}")


def _scaled_power_sum(a: np.ndarray, weights: np.ndarray, p: float, axis: int) -> np.ndarray:
    """``(sum w |a|^p)^(1/p)`` along ``axis`` with the maximum factored out."""
    m = a.max(axis=axis, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    s = np.sum(weights * (a / safe) ** p, axis=axis) ** (1.0 / p)
    return np.squeeze(m, axis=axis) * s


def spatial_norms(u: SpaceTimeField, p: float, kmax: int) -> np.ndarray:
    a = np.abs(u.values[: kmax + 1])
    if math.isinf(p):
        return a.max(axis=1)
    return _scaled_power_sum(a, u.domain.weights[None, :], p, axis=1)


def mixed_norm(u: SpaceTimeField, p: float, q: float, t: float | None = None) -> float:
    """``||u||_{p,q;t}``: L^q in time of the spatial L^p norm."""
    _check_exponent(p)
    _check_exponent(q)
    kt = u.steps_to(t)
    sp = spatial_norms(u, p, kt)
    if math.isinf(q):
        return float(sp.max())
    if kt == 0:
        return 0.0
    s = sp[:kt]
    return float(_scaled_power_sum(s, np.full(kt, u.dt), q, axis=0))


def inner(u: SpaceTimeField, v: SpaceTimeField, t: float | None = None) -> float:
    """Space-time pairing with the same quadrature as :func:`mixed_norm`."""
    kt = u.steps_to(t)
    return float(u.dt * np.sum(u.values[:kt] * v.values[:kt] * u.domain.weights))


def interpolation_membership(p1: float, q1: float, p2: float, q2: float, p: float, q: float,
                             tol: float = 1e-12) -> tuple[bool, float | None]:
    """Whether ``(p, q)`` lies on the segment I(p1,q1,p2,q2); returns the weight rho of the first end."""
    r1, s1, r2, s2, r, s = (1.0 / x for x in (p1, q1, p2, q2, p, q))
    rhos = []
    for a1, a2, a in ((r1, r2, r), (s1, s2, s)):
        if abs(a1 - a2) <= tol:
            if abs(a - a1) > tol:
                return False, None
        else:
            rhos.append((a - a2) / (a1 - a2))
    if not rhos:
        return True, 1.0
    rho = rhos[0]
    if len(rhos) == 2 and abs(rhos[1] - rho) > tol * max(1.0, abs(rho)) * 10:
        return False, None
    if rho < -tol or rho > 1 + tol:
        return False, None
    return True, min(1.0, max(0.0, rho))


def segment_point(ends: tuple[Pair, Pair], rho: float) -> Pair:
    """Pair with reciprocals ``rho/e1 + (1-rho)/e2``."""
    (p1, q1), (p2, q2) = ends
    rp = rho / p1 + (1 - rho) / p2
    rq = rho / q1 + (1 - rho) / q2
    return (INF if rp == 0 else 1.0 / rp, INF if rq == 0 else 1.0 / rq)


def conjugate(p: float) -> float:
    if math.isinf(p):
        return 1.0
    if p == 1:
        return INF
    return p / (p - 1)


def exponent_scale(d: int, two_star: float | None = None) -> float:
    """``d/2`` for d >= 3, ``2*/(2*-2)`` for d = 2 and 1 for d = 1."""
    if d >= 3:
        return d / 2
    if d == 1:
        return 1.0
    two_star = default_two_star(d) if two_star is None else two_star
    if not (2 < two_star < INF):
        raise NormError(f"2* must lie in (2, inf) for d = 2, got {two_star}")
    return two_star / (two_star - 2)


def _check_theta(theta: float) -> None:
    if not (0 <= theta < 1):
        raise NormError(f"theta must lie in [0, 1), got {theta}")


def gamma_star_extremes(theta: float, d: int, two_star: float | None = None) -> tuple[Pair, Pair]:
    """End points of the dual line ``kappa/p + 1/q = 1 - theta``."""
    _check_theta(theta)
    kappa = exponent_scale(d, two_star)
    return (INF, 1.0 / (1 - theta)), (kappa / (1 - theta), INF)


def gamma_extremes(theta: float, d: int, two_star: float | None = None) -> tuple[Pair, Pair]:
    """End points of ``kappa/p + 1/q = kappa + theta``: the conjugates of the dual end points."""
    (a, b), (c, e) = gamma_star_extremes(theta, d, two_star)
    return (conjugate(a), conjugate(b)), (conjugate(c), conjugate(e))


@dataclass(frozen=True)
class NormSpec:
    p: float
    q: float
    t: float
    d: int
    theta: float = 0.0
    two_star: float | None = None

    def line_value(self) -> float:
        return exponent_scale(self.d, self.two_star) / self.p + 1.0 / self.q

    def in_gamma_star(self, tol: float = 1e-12) -> bool:
        return abs(self.line_value() - (1 - self.theta)) <= tol

    def in_gamma(self, tol: float = 1e-12) -> bool:
        return abs(self.line_value() - (exponent_scale(self.d, self.two_star) + self.theta)) <= tol


def intersection_norm(u: SpaceTimeField, ends: tuple[Pair, Pair], t: float | None = None) -> float:
    return max(mixed_norm(u, *ends[0], t), mixed_norm(u, *ends[1], t))


def theta_norm(u: SpaceTimeField, theta: float, t: float | None = None,
               two_star: float | None = None) -> float:
    """``||u||_{theta;t}``: the larger of the two extreme mixed norms of Gamma_theta."""
    return intersection_norm(u, gamma_extremes(theta, u.domain.dim, two_star), t)


def nested_levels(n: int) -> list[float]:
    """``1, 0, 1/2, 1/4, 3/4, 1/8, ...``: every prefix extends the previous one."""
    out = [1.0, 0.0]
    i = 1
    while len(out) < n:
        x, denom, k = 0.0, 1.0, i
        while k:
            denom *= 2
            x += (k & 1) / denom
            k >>= 1
        out.append(x)
        i += 1
    return out[:n]


def sum_norm_upper(u: SpaceTimeField, ends: tuple[Pair, Pair], t: float | None = None,
                   budget: int = 8) -> float:
    """Upper bound on the sum norm over segment ``ends``.

    Minimum over single-piece representations at ``budget`` points of the
    segment and two-piece splits ``u = u 1{|u| > tau} + u 1{|u| <= tau}`` at
    ``budget`` quantiles of the nonzero magnitudes (each piece placed at either end point).
    The candidate sets are nested, so the bound never increases with budget.
    """
    if budget < 1:
        raise NormError(f"budget must be >= 1, got {budget}")
    levels = nested_levels(budget)
    best = INF
    for rho in levels:
        best = min(best, mixed_norm(u, *segment_point(ends, rho), t))
    kt = u.steps_to(t)
    mag = np.abs(u.values[: kt + 1])
    mag = mag[mag > 0]
    if mag.size == 0:
        return 0.0
    for lev in levels:
        tau = float(np.quantile(mag, lev))
        big = np.abs(u.values) > tau
        hi = SpaceTimeField(np.where(big, u.values, 0.0), u.dt, u.domain)
        lo = SpaceTimeField(np.where(big, 0.0, u.values), u.dt, u.domain)
        n = [[mixed_norm(piece, *e, t) for e in ends] for piece in (hi, lo)]
        best = min(best, n[0][0] + n[1][1], n[0][1] + n[1][0])
    return float(best)


def theta_star_norm_upper(u: SpaceTimeField, theta: float, t: float | None = None,
                          budget: int = 8, two_star: float | None = None) -> float:
    """Certified upper bound on ``||u||*_{theta;t}``."""
    return sum_norm_upper(u, gamma_star_extremes(theta, u.domain.dim, two_star), t, budget)


def check_interpolation_bound(u: SpaceTimeField, grad_u: np.ndarray | None, theta: float,
                              t: float | None, c1: float, two_star: float | None = None,
                              tol: float = 1e-12) -> tuple[float, float, bool]:
    """Compare ``||u||_{theta;t}`` with ``c1 (||u||_{2,inf;t}^2 + ||grad u||_{2,2;t}^2)^{1/2}``.

    ``grad_u`` (steps + 1, n_nodes, d) is used if given; otherwise the exact
    gradient of the piecewise-linear interpolant is used, which is the one the
    grid Sobolev estimate refers to.
    """
    d = u.domain
    if np.any(u.values[:, d.boundary] != 0):
        raise NormError("field must vanish on boundary nodes")
    kt = u.steps_to(t)
    lhs = theta_norm(u, theta, t, two_star)
    if grad_u is None:
        g2 = d.grad_sq_norm(u.values[:kt])
    else:
        g2 = np.sum(d.weights * np.sum(np.asarray(grad_u)[:kt] ** 2, axis=-1), axis=-1)
    grad_term = float(u.dt * np.sum(g2))
    rhs = c1 * math.sqrt(mixed_norm(u, 2, INF, t) ** 2 + grad_term)
    return lhs, rhs, bool(lhs <= rhs * (1 + tol))


def write_norm_table(rows: Iterable[Sequence], path: str | Path) -> Path:
    """CSV with columns name, p, q, theta, value (``inf`` spelled out)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["name", "p", "q", "theta", "value"])
        for name, p, q, theta, value in rows:
            wr.writerow([name, _fmt(p), _fmt(q), repr(float(theta)), repr(float(value))])
    return path


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))
