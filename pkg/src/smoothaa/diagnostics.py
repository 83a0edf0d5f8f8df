"""
Convergence-rate estimators and optimality oracles.

The rate estimators turn residual histories into the quantities bounded by
the local convergence theory: the root factor ``(|F_k|/|F_0|)^(1/k)`` and
the quotient factor ``|F_{k+1}|/|F_k|`` of the smoothed residuals. The
oracles check application-level optimality of a computed fixed point
independently of the solver that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problems import bearing_pressure, enr_gradient, nnls_gradient
from .rng import make_rng

TAIL_FRACTION = 0.25
TAIL_MIN_POINTS = 5
RATE_SLACK = 0.05


@dataclass
class RateReport:
    r_factor_curve: list
    q_factor_curve: list
    tail_r_estimate: float
    tail_q_estimate: Optional[float]
    tail_length: int
    contraction_reference: Optional[float] = None

    def r_within(self, slack=RATE_SLACK):
        if self.contraction_reference is None:
            return None
        return self.tail_r_estimate <= self.contraction_reference + slack

    def q_within(self, slack=RATE_SLACK):
        if self.contraction_reference is None or self.tail_q_estimate is None:
            return None
        return self.tail_q_estimate <= self.contraction_reference + slack


def r_factor_curve(residuals):
    """``[(r_k / r_0) ** (1/k) for k >= 1]``; zero residuals map to 0."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ValueError("empty residual history")
    if not r[0] > 0:
        raise ValueError("initial residual must be positive")
    k = np.arange(1, r.size)
    with np.errstate(divide="ignore"):
        out = np.where(r[1:] > 0, (r[1:] / r[0]) ** (1.0 / k), 0.0)
    return out.tolist()


def q_factor_curve(smooth_residuals):
    """Successive ratios ``s[k+1] / s[k]``; ``0/0 -> 0`` and ``x/0 -> inf``."""
    s = np.asarray(smooth_residuals, dtype=float)
    if s.size < 2:
        return []
    num, den = s[1:], s[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return q.tolist()


def tail_length(iterations, fraction=TAIL_FRACTION, min_points=TAIL_MIN_POINTS):
    return min(iterations, max(min_points, int(iterations * fraction)))


def tail_rate(history, fraction=TAIL_FRACTION, min_points=TAIL_MIN_POINTS):
    """Geometric-mean per-step contraction over the last quartile of a history."""
    h = np.asarray(history, dtype=float)
    K = h.size - 1
    if K < 1:
        return 0.0
    t = tail_length(K, fraction, min_points)
    if h[-1] == 0.0 or h[-1 - t] == 0.0:
        return 0.0
    return float((h[-1] / h[-1 - t]) ** (1.0 / t))


def rate_report(residuals, smooth_residuals=None, contraction_reference=None):
    residuals = list(residuals)
    K = len(residuals) - 1
    smooth = [] if smooth_residuals is None else list(smooth_residuals)
    return RateReport(
        r_factor_curve=r_factor_curve(residuals),
        q_factor_curve=q_factor_curve(smooth),
        tail_r_estimate=tail_rate(residuals),
        tail_q_estimate=tail_rate(smooth) if len(smooth) >= 2 else None,
        tail_length=tail_length(K) if K > 0 else 0,
        contraction_reference=contraction_reference,
    )


def mu_audit(mu_history):
    """Return ``(non_increasing_from_k1, mu_last / mu_1)`` for a smoothing run."""
    mu = np.asarray(mu_history, dtype=float)
    if mu.size < 2:
        return True, 1.0
    tail = mu[1:]
    monotone = bool(np.all(np.diff(tail) <= 0.0))
    return monotone, float(tail[-1] / tail[0]) if tail[0] > 0 else 0.0


def _ball_points(rng, center, radius, count):
    n = center.size
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / n)
    return center + d * r[:, None]


def contraction_sample(problem, center, radius, pairs, seed=0, mu=None):
    """Largest observed ``|G(u) - G(v)| / |u - v|`` over random pairs in a ball.

    With ``mu`` given, the smoothed map ``G_s(., mu)`` is sampled instead.
    """
    if pairs < 1:
        raise ValueError("need at least one pair")
    center = np.asarray(center, dtype=float)
    rng = make_rng(seed, 7)
    U = _ball_points(rng, center, radius, pairs)
    V = _ball_points(rng, center, radius, pairs)
    mapping = problem.G if mu is None else (lambda x: problem.G_smooth(x, mu))
    best = 0.0
    for u, v in zip(U, V):
        d = np.linalg.norm(u - v)
        if d == 0.0:
            continue
        best = max(best, float(np.linalg.norm(mapping(u) - mapping(v)) / d))
    return best


@dataclass
class SmoothingConditionReport:
    kappa_hat: float
    kappa_by_mu: dict = field(default_factory=dict)
    tau_by_mu: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def check_smoothing_conditions(problem, mu_grid, sample_count=50, seed=0, center=None, radius=1.0):
    """Empirical smoothing constants: uniform error ``kappa`` and per-mu contraction ``tau``.

    ``kappa_hat`` is the largest ``|G_s(u, mu) - G(u)| / mu`` seen; a mu with
    ``tau_hat(mu) >= 1`` is listed in ``violations``.
    """
    mu_grid = [float(m) for m in mu_grid]
    if not mu_grid or min(mu_grid) <= 0:
        raise ValueError("mu_grid must be non-empty with positive entries")
    center = np.zeros(problem.dim) if center is None else np.asarray(center, dtype=float)
    rng = make_rng(seed, 7)
    pts = _ball_points(rng, center, radius, sample_count)
    exact = [problem.G(u) for u in pts]
    rep = SmoothingConditionReport(kappa_hat=0.0)
    for mu in mu_grid:
        k = max(np.linalg.norm(problem.G_smooth(u, mu) - g) / mu for u, g in zip(pts, exact))
        tau = contraction_sample(problem, center, radius, sample_count, seed=seed + 1, mu=mu)
        rep.kappa_by_mu[mu] = float(k)
        rep.tau_by_mu[mu] = tau
        if tau >= 1.0:
            rep.violations.append(mu)
    rep.kappa_hat = max(rep.kappa_by_mu.values())
    return rep


def lcp_complementarity_check(inst, u_star):
    """``(primal, dual, gap)`` violations of the bearing LCP at ``p = |u| + u``."""
    u_star = np.asarray(u_star, dtype=float)
    if u_star.shape != (inst.n,):
        raise ValueError(f"expected length {inst.n}, got {u_star.shape}")
    p = bearing_pressure(u_star)
    w = inst.matvec(p) - inst.b
    return (
        max(0.0, -float(np.min(p))),
        max(0.0, -float(np.min(w))),
        abs(float(p @ w)),
    )


def enr_optimality_check(inst, u_star):
    """Norm of the minimum-norm subgradient of the elastic net objective.

    Nonzero components contribute ``grad_i + lam*beta*sign(u_i)``; zero
    components contribute the distance of ``grad_i`` to ``[-lam*beta, lam*beta]``.
    """
    u = np.asarray(u_star, dtype=float)
    g = enr_gradient(inst, u)
    t = inst.lam * inst.beta
    r = np.where(u != 0.0, g + t * np.sign(u), np.sign(g) * np.maximum(np.abs(g) - t, 0.0))
    return float(np.linalg.norm(r))


def enr_optimality_bound(inst, residual_norm):
    """Upper bound on the subgradient residual at ``G(u)`` given ``|F(u)|``.

    For a prox-gradient step ``u+ = prox(u - a grad f(u))`` the vector
    ``(u - u+)/a + grad f(u+) - grad f(u)`` is a subgradient at ``u+``, so its
    norm is at most ``(1/a + L) |u+ - u|``.
    """
    return (1.0 / inst.alpha_step + inst.L) * residual_norm


def nnls_kkt_residual(inst, u_star):
    """Projected-gradient KKT residual ``|min(u, grad)|`` for ``u >= 0``."""
    u = np.asarray(u_star, dtype=float)
    g = nnls_gradient(inst, u)
    return float(np.linalg.norm(np.minimum(u, g)))


def nnls_kkt_components(inst, u_star):
    """Largest |grad| on the support and most negative grad off it."""
    u = np.asarray(u_star, dtype=float)
    g = nnls_gradient(inst, u)
    pos = u > 0
    on = float(np.max(np.abs(g[pos]))) if pos.any() else 0.0
    off = float(np.min(g[~pos])) if (~pos).any() else 0.0
    return on, off
