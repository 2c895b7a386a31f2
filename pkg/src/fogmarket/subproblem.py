"""Per-service proximal subproblem: quadratic penalty plus a log reward.

Each consensus iteration asks every service to minimize

    -weight * ln(sum_j u_j) + (rho/2) * sum_{j,r} (u_j * a[j,r] - c[j,r])^2

over request rates u >= 0 with sum_j u_j <= cap, then expand the purchase
x[j,r] = u_j * a[j,r]. Parameterizing by the per-node rate keeps purchases
proportional to base demands, which is the only way a Leontief buyer spends
money usefully.

The optimum is found by monotone scalar root-finding: with the cap inactive
the stationary total rate s solves a one-dimensional fixed point; when the
cap binds, a bisection on the cap multiplier restores complementarity. Both
searches run a fixed number of bisection steps, which converges far below
the 1e-10 bracket tolerance the engine requires and keeps the kernel
branch-predictable and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# Total rates at or below this floor inside the logarithm mark a degenerate
# subproblem; the solve continues with the floored value but flags it.
LOG_FLOOR = 1e-12

_BISECT_STEPS = 100


class SubproblemError(RuntimeError):
    """Subproblem solve failed the stationarity contract.

    Carries the offending iterate and its residual for diagnosis.
    """

    def __init__(self, message: str, iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


@dataclass(frozen=True, eq=False)
class QuadLogSubproblem:
    """One service's proximal step data.

    ``base_demand`` rows that are entirely zero mark nodes the service cannot
    use; their rates are pinned at zero.
    """

    weight: float
    rho: float
    base_demand: np.ndarray  # (M, R)
    center: np.ndarray       # (M, R)
    cap: float = math.inf

    def __post_init__(self) -> None:
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.cap > 0:
            raise ValueError("cap must be positive")
        a = np.asarray(self.base_demand, dtype=float)
        c = np.asarray(self.center, dtype=float)
        if a.shape != c.shape or a.ndim != 2:
            raise ValueError("base_demand and center must share an (M, R) shape")
        object.__setattr__(self, "base_demand", a)
        object.__setattr__(self, "center", c)


@dataclass(frozen=True, eq=False)
class XUpdateResult:
    request_rates: np.ndarray   # (M,)
    allocation: np.ndarray      # (M, R)
    cap_multiplier: float
    total_rate: float
    degenerate: bool


@njit(cache=True)
def _xupdate_kernel(weights, rho, alpha, beta, caps, out_u, out_mu):  # pragma: no cover - jitted
    n, m = alpha.shape
    for i in range(n):
        w = weights[i]
        # Phase 1: drop the cap. The stationary total rate s > 0 solves
        # s = sum_j max(0, (beta_j + w/(rho*s)) / alpha_j); the right side is
        # strictly decreasing in s, so bisection applies.
        pos_part = 0.0
        inv_alpha_sum = 0.0
        for j in range(m):
            a = alpha[i, j]
            if a > 0.0:
                inv_alpha_sum += 1.0 / a
                if beta[i, j] > 0.0:
                    pos_part += beta[i, j] / a
        if inv_alpha_sum == 0.0:
            for j in range(m):
                out_u[i, j] = 0.0
            out_mu[i] = 0.0
            continue
        s_hi = pos_part + math.sqrt(w / rho * inv_alpha_sum) + 1.0
        s_lo = min(1e-12, s_hi * 1e-15)
        for _ in range(200):
            total = 0.0
            for j in range(m):
                a = alpha[i, j]
                if a > 0.0:
                    v = beta[i, j] + w / (rho * s_lo)
                    if v > 0.0:
                        total += v / a
            if total > s_lo:
                break
            s_lo *= 1e-3
        for _ in range(_BISECT_STEPS):
            s = 0.5 * (s_lo + s_hi)
            total = 0.0
            for j in range(m):
                a = alpha[i, j]
                if a > 0.0:
                    v = beta[i, j] + w / (rho * s)
                    if v > 0.0:
                        total += v / a
            if total > s:
                s_lo = s
            else:
                s_hi = s
        s = 0.5 * (s_lo + s_hi)
        mu = 0.0
        lam = w / s
        if s > caps[i]:
            # Phase 2: the cap binds. Bisect the rate multiplier lam so the
            # rates sum to the cap; mu = w/cap - lam is the cap multiplier.
            s = caps[i]
            lam_hi = w / s
            beta_max = -1e300
            for j in range(m):
                if alpha[i, j] > 0.0 and beta[i, j] > beta_max:
                    beta_max = beta[i, j]
            lam_lo = -rho * beta_max - rho
            if lam_lo > lam_hi:
                lam_lo = lam_hi - 1.0
            for _ in range(_BISECT_STEPS):
                lam = 0.5 * (lam_lo + lam_hi)
                total = 0.0
                for j in range(m):
                    a = alpha[i, j]
                    if a > 0.0:
                        v = beta[i, j] + lam / rho
                        if v > 0.0:
                            total += v / a
                if total > s:
                    lam_hi = lam
                else:
                    lam_lo = lam
            lam = 0.5 * (lam_lo + lam_hi)
            mu = w / s - lam
            if mu < 0.0:
                mu = 0.0
        total = 0.0
        for j in range(m):
            a = alpha[i, j]
            u = 0.0
            if a > 0.0:
                v = beta[i, j] + lam / rho
                if v > 0.0:
                    u = v / a
            out_u[i, j] = u
            total += u
        if total > caps[i] and total > 0.0:
            scale = caps[i] / total
            for j in range(m):
                out_u[i, j] *= scale
        out_mu[i] = mu


def x_update_batch(weights: np.ndarray, rho: float, alpha: np.ndarray,
                   beta: np.ndarray, caps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve all services' subproblems at once.

    ``alpha[i, j] = sum_r a[i,j,r]^2`` and ``beta[i, j] = sum_r a[i,j,r] *
    c[i,j,r]`` are the per-node quadratic coefficients; ``alpha == 0`` marks
    nodes pinned at zero rate. Returns (rates (N, M), cap multipliers (N,)).
    """
    weights = np.ascontiguousarray(weights, dtype=float)
    alpha = np.ascontiguousarray(alpha, dtype=float)
    beta = np.ascontiguousarray(beta, dtype=float)
    caps = np.ascontiguousarray(caps, dtype=float)
    rates = np.empty_like(alpha)
    multipliers = np.empty_like(weights)
    _xupdate_kernel(weights, float(rho), alpha, beta, caps, rates, multipliers)
    return rates, multipliers


def stationarity_residual(weight: float, rho: float, alpha: np.ndarray,
                          beta: np.ndarray, cap: float, rates: np.ndarray,
                          cap_multiplier: float) -> float:
    """Worst violation of the projected first-order conditions at ``rates``."""
    active = alpha > 0
    total = float(rates.sum())
    s = max(total, LOG_FLOOR)
    grad = rho * (alpha[active] * rates[active] - beta[active]) - weight / s
    shifted = grad + cap_multiplier
    positive = rates[active] > 0
    resid = 0.0
    if positive.any():
        resid = float(np.max(np.abs(shifted[positive])))
    if (~positive).any():
        resid = max(resid, float(np.max(-np.minimum(shifted[~positive], 0.0))))
    if math.isfinite(cap):
        resid = max(resid, abs(cap_multiplier * (cap - total)))
        resid = max(resid, max(0.0, total - cap))
    return resid


def solve_x_update(sub: QuadLogSubproblem) -> XUpdateResult:
    """Exactly minimize one proximal subproblem and expand the purchase."""
    a = sub.base_demand
    alpha = np.einsum("mr,mr->m", a, a)[None, :]
    beta = np.einsum("mr,mr->m", a, sub.center)[None, :]
    rates, multipliers = x_update_batch(
        np.array([sub.weight]), sub.rho, alpha, beta, np.array([sub.cap]))
    u, mu = rates[0], float(multipliers[0])
    resid = stationarity_residual(sub.weight, sub.rho, alpha[0], beta[0],
                                  sub.cap, u, mu)
    if resid > 1e-8:
        raise SubproblemError(
            f"stationarity residual {resid:.3e} exceeds 1e-8", u, resid)
    total = float(u.sum())
    return XUpdateResult(
        request_rates=u,
        allocation=u[:, None] * a,
        cap_multiplier=mu,
        total_rate=total,
        degenerate=total <= LOG_FLOOR,
    )
