"""
Fixed-point iteration engines: Picard, Anderson(m), EDIIS(m) and their
smoothing counterparts with the adaptive smoothing-parameter schedule.

All variants share one driver, :func:`run_solver`. The smoothing variants
mix values of a smoothed map ``G_s(u, mu)`` while the stopping test always
uses the residual of the exact map ``G``.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

VARIANTS = ("picard", "anderson", "ediis", "smoothing_anderson", "smoothing_ediis")
SMOOTHING_VARIANTS = ("smoothing_anderson", "smoothing_ediis")
TERMINATIONS = ("tol_reached", "k_max_reached", "exact_zero_residual", "numerical_breakdown")

# above this estimated condition number the pivoted QR solve is replaced by
# ridge-regularized normal equations
COND_SWITCH = 1e12
MAX_SIMPLEX_VERTICES = 12


class SolverError(Exception):
    """Invalid solver configuration or problem/iterate mismatch."""


class NumericalBreakdown(ArithmeticError):
    """A subproblem or an iterate produced non-finite values."""


@dataclass(frozen=True)
class FixedPointProblem:
    """A map ``G`` on R^dim together with an optional smoothing ``G_s(u, mu)``.

    ``contraction_estimate`` and ``kappa_estimate`` are metadata only; they
    are never used by the solvers.
    """

    dim: int
    eval_G: Callable[[np.ndarray], np.ndarray]
    eval_G_smooth: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    contraction_estimate: Optional[float] = None
    kappa_estimate: Optional[float] = None
    name: str = ""

    def G(self, u):
        u = self._check(u)
        return np.asarray(self.eval_G(u), dtype=float)

    def G_smooth(self, u, mu):
        if self.eval_G_smooth is None:
            raise SolverError(f"problem {self.name!r} has no smoothing map")
        u = self._check(u)
        if mu == 0:
            return self.G(u)
        return np.asarray(self.eval_G_smooth(u, float(mu)), dtype=float)

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise SolverError(f"expected vector of length {self.dim}, got shape {u.shape}")
        return u


@dataclass(frozen=True)
class SolverConfig:
    variant: str = "anderson"
    depth_m: int = 1
    tol: float = 1e-10
    k_max: int = 1000
    ls_regularization: float = 0.0
    record_history: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SolverError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if int(self.depth_m) != self.depth_m or self.depth_m < 0:
            raise SolverError(f"depth_m must be a non-negative integer, got {self.depth_m!r}")
        if not 0.0 < self.tol < 1.0:
            raise SolverError(f"tol must lie in (0, 1), got {self.tol!r}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise SolverError(f"k_max must be a positive integer, got {self.k_max!r}")
        if not self.ls_regularization >= 0.0:
            raise SolverError("ls_regularization must be non-negative")
        if self.variant in ("ediis", "smoothing_ediis") and self.depth_m + 1 > MAX_SIMPLEX_VERTICES:
            raise SolverError(
                f"EDIIS face enumeration supports depth_m <= {MAX_SIMPLEX_VERTICES - 1}"
            )

    @property
    def smoothing(self):
        return self.variant in SMOOTHING_VARIANTS

    @property
    def depth(self):
        return 0 if self.variant == "picard" else int(self.depth_m)


@dataclass
class WindowEntry:
    u: np.ndarray
    g: np.ndarray
    f: np.ndarray


@dataclass
class SolverState:
    """Sliding window of the last ``m + 1`` (u, g, f = g - u) triples."""

    depth: int
    k: int = 0
    mu: Optional[float] = None
    f0_norm: float = 0.0
    window: deque = field(default_factory=deque)

    def push(self, u, g):
        self.window.append(WindowEntry(u, g, g - u))
        while len(self.window) > self.depth + 1:
            self.window.popleft()

    def F_matrix(self):
        return np.column_stack([e.f for e in self.window])

    def G_matrix(self):
        return np.column_stack([e.g for e in self.window])


@dataclass
class SolverReport:
    iterations: int
    termination: str
    residual_history: list
    smooth_residual_history: list
    mu_history: list
    final_u: np.ndarray
    elapsed: float
    elapsed_ns_history: list
    alpha_abs_sum_history: list
    variant: str = ""
    depth_m: int = 0
    alpha_history: Optional[list] = None
    window_length_history: Optional[list] = None
    combined_residual_history: Optional[list] = None

    @property
    def converged(self):
        return self.termination in ("tol_reached", "exact_zero_residual")

    @property
    def relative_residual(self):
        r0 = self.residual_history[0]
        return self.residual_history[-1] / r0 if r0 > 0 else 0.0

    @property
    def final_rate(self):
        """``(|F_k| / |F_0|) ** (1 / k)`` at termination."""
        if self.iterations == 0:
            return 0.0
        return self.relative_residual ** (1.0 / self.iterations)


def picard_step(problem, u):
    """One Picard step ``u -> G(u)``."""
    return problem.G(u)


def solve_gamma_ls(delta_F, f_latest, reg=0.0):
    """Least-squares coefficients for the unconstrained Anderson subproblem.

    Minimizes ``|f_latest - delta_F @ gamma|^2 + reg * |gamma|^2``. Zero
    columns of ``delta_F`` are dropped and get ``gamma = 0``. Without
    regularization a column-pivoted QR factorization is used unless its
    condition estimate exceeds ``COND_SWITCH``.
    """
    delta_F = np.asarray(delta_F, dtype=float)
    f_latest = np.asarray(f_latest, dtype=float)
    if delta_F.ndim != 2 or delta_F.shape[0] != f_latest.shape[0]:
        raise SolverError(f"shape mismatch: delta_F {delta_F.shape}, f {f_latest.shape}")
    if not (np.all(np.isfinite(delta_F)) and np.all(np.isfinite(f_latest))):
        raise NumericalBreakdown("non-finite entries in Anderson subproblem")
    gamma = np.zeros(delta_F.shape[1])
    keep = np.flatnonzero(np.any(delta_F != 0.0, axis=0))
    if keep.size == 0:
        return gamma
    D = delta_F[:, keep]
    if reg == 0.0:
        Q, R, perm = scipy.linalg.qr(D, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag[-1] * COND_SWITCH > diag[0]:
            z = scipy.linalg.solve_triangular(R, Q.T @ f_latest)
            sol = np.empty_like(z)
            sol[perm] = z
            gamma[keep] = sol
            return gamma
        logger.debug("ill-conditioned window (diag ratio %.3g), using ridge", diag[0] / max(diag[-1], 1e-300))
        reg = 1e-10 * np.sum(D * D)
    H = D.T @ D + reg * np.eye(D.shape[1])
    sol = scipy.linalg.solve(H, D.T @ f_latest, assume_a="pos")
    if not np.all(np.isfinite(sol)):
        raise NumericalBreakdown("non-finite Anderson coefficients")
    gamma[keep] = sol
    return gamma


def gamma_to_alpha(gamma):
    """Convert prefix-sum coefficients ``gamma`` to the affine weights ``alpha``."""
    gamma = np.asarray(gamma, dtype=float)
    alpha = np.empty(gamma.size + 1)
    if gamma.size == 0:
        alpha[0] = 1.0
        return alpha
    alpha[0] = gamma[0]
    alpha[1:-1] = np.diff(gamma)
    alpha[-1] = 1.0 - gamma[-1]
    return alpha


def alpha_to_gamma(alpha):
    return np.cumsum(np.asarray(alpha, dtype=float))[:-1]


def _face_candidate(F, face):
    """Minimum-norm minimizer of |F[:, face] a| subject to sum(a) = 1.

    Writes ``a = 1/p + N z`` with ``N`` an orthonormal basis of the
    zero-sum subspace; the min-norm ``z`` then gives the min-norm ``a``.
    """
    cols = F[:, face]
    p = len(face)
    if p == 1:
        return np.ones(1)
    a0 = np.full(p, 1.0 / p)
    N = scipy.linalg.null_space(np.ones((1, p)))
    U, s, Vt = np.linalg.svd(cols @ N, full_matrices=False)
    # rank cutoff relative to the face columns, not to the projected matrix
    keep = s > 1e-12 * max(np.linalg.norm(cols, 2), np.finfo(float).tiny)
    z = Vt[keep].T @ ((U[:, keep].T @ -(cols @ a0)) / s[keep])
    return a0 + N @ z


def solve_alpha_simplex(F_window):
    """Global minimizer of ``|F alpha|`` over the probability simplex.

    Every face (non-empty subset of columns) is tried: the equality
    constrained problem is solved on it and kept if the weights are
    non-negative. Ties in the objective go to the smaller ``|alpha|_2``,
    then to the lexicographically smaller weight vector.
    """
    F = np.asarray(F_window, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    p = F.shape[1]
    if p > MAX_SIMPLEX_VERTICES:
        raise SolverError(f"simplex window of {p} columns exceeds enumeration bound {MAX_SIMPLEX_VERTICES}")
    if not np.all(np.isfinite(F)):
        raise NumericalBreakdown("non-finite entries in EDIIS subproblem")
    scale = max(np.max(np.abs(F)), np.finfo(float).tiny)
    Fs = F / scale
    best = None
    for size in range(1, p + 1):
        for face in itertools.combinations(range(p), size):
            a = _face_candidate(Fs, list(face))
            if not np.all(np.isfinite(a)) or np.min(a) < -1e-12:
                continue
            a[a < 1e-14] = 0.0
            a /= a.sum()
            alpha = np.zeros(p)
            alpha[list(face)] = a
            key = (np.linalg.norm(Fs @ alpha), np.linalg.norm(alpha), tuple(alpha))
            if best is None or _better(key, best[0]):
                best = (key, alpha)
    return best[1]


def _better(key, incumbent):
    obj, nrm, lex = key
    obj0, nrm0, lex0 = incumbent
    tie = 1e-12 * max(obj0, 1e-300) + 1e-15
    if obj < obj0 - tie:
        return True
    if obj > obj0 + tie:
        return False
    if nrm < nrm0 - 1e-12:
        return True
    if nrm > nrm0 + 1e-12:
        return False
    return lex < lex0


def anderson1_alpha(f_k, f_km1):
    """Closed-form Anderson(1) weight on the older map value."""
    f_k = np.asarray(f_k, dtype=float)
    d = f_k - np.asarray(f_km1, dtype=float)
    dd = float(d @ d)
    if dd == 0.0:
        return 0.0
    return float(f_k @ d) / dd


def ediis1_alpha(f_k, f_km1):
    """EDIIS(1) weight: the Anderson(1) weight clamped to ``[0, 1]``."""
    return min(max(anderson1_alpha(f_k, f_km1), 0.0), 1.0)


def mu_init(f0_norm):
    if not f0_norm > 0:
        raise ValueError("initial residual norm must be positive")
    return math.sqrt(f0_norm)


def mu_update(smooth_residual_norms, f0_norm):
    """Next smoothing parameter: window max of smoothed residual norms over sqrt(|F(u0)|)."""
    norms = list(smooth_residual_norms)
    if not norms:
        raise ValueError("empty residual window")
    return max(norms) / math.sqrt(f0_norm)


def _mixing_weights(state, variant, reg):
    """Return ``(alpha, u_next)`` for the current window."""
    window = state.window
    g_new = window[-1].g
    if len(window) == 1:
        return np.ones(1), g_new.copy()
    if variant in ("anderson", "smoothing_anderson"):
        F = state.F_matrix()
        G = state.G_matrix()
        dF = np.diff(F, axis=1)
        gamma = solve_gamma_ls(dF, F[:, -1], reg)
        u_next = g_new - np.diff(G, axis=1) @ gamma
        return gamma_to_alpha(gamma), u_next
    alpha = solve_alpha_simplex(state.F_matrix())
    return alpha, state.G_matrix() @ alpha


def run_solver(problem, u0, config):
    """Iterate until ``|F(u_k)| / |F(u_0)| <= tol`` or ``k >= k_max``.

    Parameters
    ----------
    problem : FixedPointProblem
    u0 : array_like
        Starting point of length ``problem.dim``.
    config : SolverConfig

    Returns
    -------
    SolverReport
        Histories are indexed by iteration; ``smooth_residual_history`` holds
        the smoothed residual norm of each iterate that was mixed, so it is
        one entry shorter than ``residual_history`` after a normal stop.
    """
    if config.smoothing and problem.eval_G_smooth is None:
        raise SolverError(f"variant {config.variant} needs a smoothing map")
    u = problem._check(u0).copy()
    t_start = time.perf_counter_ns()

    g_exact = problem.G(u)
    f0_norm = float(np.linalg.norm(g_exact - u))
    state = SolverState(depth=config.depth, f0_norm=f0_norm)
    residuals = [f0_norm]
    smooth_res, mus, elapsed_ns, abs_sums = [], [], [0], []
    alphas = [] if config.record_history else None
    wlens = [] if config.record_history else None
    combined = [] if config.record_history else None

    def report(termination):
        t = time.perf_counter_ns() - t_start
        return SolverReport(
            iterations=state.k,
            termination=termination,
            residual_history=residuals,
            smooth_residual_history=smooth_res,
            mu_history=mus,
            final_u=u,
            elapsed=t * 1e-9,
            elapsed_ns_history=elapsed_ns,
            alpha_abs_sum_history=abs_sums,
            variant=config.variant,
            depth_m=config.depth,
            alpha_history=alphas,
            window_length_history=wlens,
            combined_residual_history=combined,
        )

    if not np.isfinite(f0_norm):
        return report("numerical_breakdown")
    if f0_norm == 0.0:
        return report("exact_zero_residual")
    if config.smoothing:
        state.mu = mu_init(f0_norm)
        mus.append(state.mu)

    while True:
        if config.smoothing:
            g = problem.G_smooth(u, state.mu)
        else:
            g = g_exact
        state.push(u, g)
        if config.smoothing:
            smooth_res.append(float(np.linalg.norm(state.window[-1].f)))
        try:
            alpha, u_next = _mixing_weights(state, config.variant, config.ls_regularization)
        except (NumericalBreakdown, np.linalg.LinAlgError) as exc:
            logger.warning("breakdown at k=%d: %s", state.k, exc)
            return report("numerical_breakdown")
        abs_sums.append(float(np.sum(np.abs(alpha))))
        if config.record_history:
            alphas.append(alpha)
            wlens.append(len(state.window))
            combined.append(float(np.linalg.norm(state.F_matrix() @ alpha)))
        if config.smoothing:
            state.mu = mu_update([np.linalg.norm(e.f) for e in state.window], f0_norm)
            mus.append(state.mu)
        state.k += 1
        if not np.all(np.isfinite(u_next)):
            return report("numerical_breakdown")
        u = u_next
        g_exact = problem.G(u)
        res = float(np.linalg.norm(g_exact - u))
        residuals.append(res)
        elapsed_ns.append(time.perf_counter_ns() - t_start)
        if not np.isfinite(res):
            return report("numerical_breakdown")
        if res == 0.0 or res / f0_norm <= config.tol:
            return report("tol_reached")
        if state.k >= config.k_max:
            return report("k_max_reached")
