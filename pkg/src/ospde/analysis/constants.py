"""Explicit constants of the Moser iteration and the resulting sup-norm bound."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class MoserConstants:
    lam: float
    alpha: float
    beta: float
    C: float
    eps: float
    l: float
    c_S: float
    theta: float
    d: int
    gamma: float
    c1: float
    c2: float
    c3: float
    tau: float
    delta: float
    sigma: float

    @property
    def gamma_ok(self) -> bool:
        return self.gamma > 0

    @property
    def tau_ok(self) -> bool:
        return self.tau > 0

    @property
    def usable(self) -> bool:
        return self.gamma_ok and self.tau_ok

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(gamma_ok=self.gamma_ok, tau_ok=self.tau_ok, usable=self.usable)
        return out


def gamma_value(lam, alpha, beta, eps, l) -> float:
    return lam - alpha - eps * l / (l - 1) - (1 + eps) * beta**2 / 2


def tau_value(gamma, beta, eps, l) -> float:
    if gamma <= 0:
        return -math.inf
    return 1 - 6 * eps - 6 * math.sqrt(1 + eps) * math.sqrt(l / (l - 1)) * beta / math.sqrt(gamma)


def moser_constants(lam: float, alpha: float, beta: float, C: float, eps: float, l: float = 2.0,
                    c_S: float = 1.0, theta: float = 0.5, d: int = 1) -> MoserConstants:
    """Evaluate every constant; an out-of-regime ``gamma <= 0`` is flagged, not raised."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not l >= 2:
        raise ValueError("l must be >= 2")
    if not lam > 0:
        raise ValueError("lam must be positive")
    gamma = gamma_value(lam, alpha, beta, eps, l)
    c1 = (C / 2) * (1 + C / (4 * eps)) + ((3 + 2 * eps) / (2 * eps)) * C**2 + 3 * ((1 + eps) / eps**2) * C**2
    c2 = 1 / (2 * eps)
    c3 = (3 + eps) * (1 + eps) / eps
    tau = tau_value(gamma, beta, eps, l)
    delta = min(1.0, 2 * gamma / c_S) if gamma > 0 else -math.inf
    sigma = (d + 2 * theta) / d
    return MoserConstants(lam, alpha, beta, C, eps, l, c_S, theta, d, gamma, c1, c2, c3, tau, delta, sigma)


def default_epsilon(lam: float, alpha: float, beta: float, l: float = 2.0, iters: int = 200) -> float | None:
    """Largest ``eps`` (to bisection accuracy) keeping ``gamma > 0`` and ``tau > 0``.

    Both are decreasing in ``eps``; the returned value is the feasible end of
    the final bracket, or ``None`` when no positive ``eps`` works.
    """
    def ok(e):
        g = gamma_value(lam, alpha, beta, e, l)
        return g > 0 and tau_value(g, beta, e, l) > 0

    lo, hi = 0.0, 1 / 6
    if ok(hi):
        return hi
    tiny = 1e-300
    if not ok(tiny):
        return None
    lo = tiny
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def geometric_sums(sigma: float) -> tuple[float, float]:
    """``(sum_{m>=1} sigma^-m, sum_{m>=1} m sigma^-m)`` in closed form."""
    if not sigma > 1:
        raise ValueError(f"iteration exponent must exceed 1, got {sigma}")
    return 1 / (sigma - 1), sigma / (sigma - 1) ** 2


def log_euler_product(sigma: float, tol: float = 1e-17) -> float:
    """``-sum_m log(1 - sigma^-m)`` summed until terms fall below ``tol``."""
    total, m = 0.0, 1
    while True:
        q = sigma ** (-m)
        term = -math.log1p(-q)
        total += term
        if term < tol * max(total, 1e-300) or m > 100000:
            return total
        m += 1


def moser_factor(p: float, sigma: float, k: float = 1.0) -> float:
    """``sigma^(3 sum m/sigma^m) * prod (1 - sigma^-m)^-1 * (6 k p^2)^(sum 1/sigma^m)``."""
    s1, sm = geometric_sums(sigma)
    log_rho = 3 * sm * math.log(sigma) + log_euler_product(sigma) + s1 * math.log(6 * k * p * p)
    return math.exp(log_rho)


def moser_rhs_bound(p: float, theta: float, t: float, constants: MoserConstants | None,
                    norms: tuple[float, float, float, float], k: float = 1.0) -> float:
    """Factor times ``||xi - S'_0||^p + (||f0||*)^p + (|| |g0|^2 ||*)^(p/2) + (|| |h0|^2 ||*)^(p/2)``.

    ``norms`` are (sup of initial gap, f-norm, |g|^2-norm, |h|^2-norm); ``k``
    stands for the time-dependent structure factor, which is left to the caller.
    """
    if constants is not None and not constants.usable:
        raise ValueError("constants are outside the usable regime (gamma <= 0 or tau <= 0)")
    d = constants.d if constants is not None else 1
    sigma = (d + 2 * theta) / d
    xi_n, f_n, g_n, h_n = norms
    if min(norms) < 0:
        raise ValueError("norms must be nonnegative")
    data = xi_n**p + f_n**p + g_n ** (p / 2) + h_n ** (p / 2)
    if data == 0:
        return 0.0
    return moser_factor(p, sigma, k) * data
