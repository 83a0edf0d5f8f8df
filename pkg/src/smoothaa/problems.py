"""
Application problems recast as nonsmooth fixed-point maps.

* elastic net regression solved by ISTA (soft-thresholding),
* the discretized infinite journal bearing LCP, through its absolute value
  reformulation ``p = |u| + u``,
* non-negative least squares solved by projected gradient.

Each family has a seeded generator, an immutable instance dataclass and a
constructor returning a :class:`~smoothaa.accel.FixedPointProblem` with an
exact and a smoothed map.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .accel import FixedPointProblem
from .rng import make_rng
from .smoothing import KAPPA, smooth_abs_vec, smooth_max_vec, smooth_soft_threshold, soft_threshold

ENR_BETA = 0.5
NNLS_LAMBDA = 0.1
U0_SCALE = {"enr": 10.0, "bearing": 15.0, "nnls": 8.0}


class ConfigurationError(ValueError):
    pass


def spectral_norm(A, rtol=1e-10, max_iter=1000, seed=0):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    Returns the best estimate with a ``RuntimeWarning`` when the relative
    change has not dropped below ``rtol`` within ``max_iter`` sweeps.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ValueError("empty matrix")
    if A.ndim == 1:
        A = A[:, None]
    x = make_rng(seed, 99).standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = A.T @ (A @ x)
        lam_new = float(np.linalg.norm(y))
        if lam_new == 0.0:
            return 0.0
        x = y / lam_new
        if abs(lam_new - lam) <= rtol * lam_new:
            return float(np.linalg.norm(A @ x))
        lam = lam_new
    warnings.warn("power iteration did not converge", RuntimeWarning, stacklevel=2)
    return float(np.linalg.norm(A @ x))


# --------------------------------------------------------------------------
# elastic net / ISTA


@dataclass(frozen=True, eq=False)
class EnrInstance:
    A: np.ndarray
    b: np.ndarray
    lam: float
    alpha_step: float
    L: float
    beta: float = ENR_BETA
    x_true: np.ndarray | None = None

    @property
    def shape(self):
        return self.A.shape


def make_enr_instance(A, b, lam=None, step_factor=1.8, beta=ENR_BETA, x_true=None):
    """Wrap data as an :class:`EnrInstance`; ``lam`` defaults to ``0.001 |A^T b|_inf``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if lam is None:
        lam = 0.001 * float(np.max(np.abs(A.T @ b)))
    L = spectral_norm(A) ** 2 + lam / 2.0
    if not 0.0 < step_factor < 2.0:
        raise ConfigurationError("stepsize factor must lie in (0, 2)")
    return EnrInstance(A=A, b=b, lam=float(lam), alpha_step=step_factor / L, L=L, beta=beta, x_true=x_true)


def build_enr(M, n, sparsity=0.1, noise_scale=0.1, seed=0, step_factor=1.8):
    """Random elastic net instance: Gaussian ``A``, sparse nonnegative ground truth."""
    if M < 1 or n < 1:
        raise ConfigurationError("M and n must be positive")
    if not 0.0 < sparsity < 1.0:
        raise ConfigurationError(f"sparsity must lie in (0, 1), got {sparsity!r}")
    rng = make_rng(seed, 0)
    A = rng.standard_normal((M, n))
    e = rng.standard_normal(M)
    nnz = math.ceil(sparsity * n)
    x = np.zeros(n)
    pos = rng.choice(n, size=nnz, replace=False)
    x[np.sort(pos)] = rng.random(nnz)
    b = A @ x + noise_scale * e
    return make_enr_instance(A, b, step_factor=step_factor, x_true=x)


def enr_gradient(inst, u):
    """Gradient of the smooth part ``0.5|Au - b|^2 + lam (1-beta)/2 |u|^2``."""
    return inst.A.T @ (inst.A @ u - inst.b) + inst.lam * (1.0 - inst.beta) * u


def enr_objective(inst, u):
    r = inst.A @ u - inst.b
    return 0.5 * r @ r + inst.lam * ((1 - inst.beta) / 2 * u @ u + inst.beta * np.abs(u).sum())


def enr_fixed_point_map(inst):
    a = inst.alpha_step
    thresh = a * inst.lam * inst.beta

    def Q(u):
        return u - a * enr_gradient(inst, u)

    def G(u):
        return soft_threshold(Q(u), thresh)

    def Gs(u, mu):
        return smooth_soft_threshold(Q(u), thresh, mu)

    return FixedPointProblem(
        dim=inst.A.shape[1],
        eval_G=G,
        eval_G_smooth=Gs,
        kappa_estimate=2 * KAPPA * math.sqrt(inst.A.shape[1]),
        name="enr",
    )


# --------------------------------------------------------------------------
# journal bearing LCP


def bearing_thickness(t, eps):
    return (1.0 + eps * np.cos(np.pi * t)) / math.sqrt(math.pi)


@dataclass(frozen=True, eq=False)
class BearingInstance:
    """Tridiagonal LCP ``p >= 0, Ap - b >= 0, p^T (Ap - b) = 0``.

    ``diag`` and ``off`` hold the main and (symmetric) off-diagonal of
    ``A``; ``chol`` is the banded Cholesky factor of ``I + A`` in upper
    LAPACK storage.
    """

    n: int
    eps: float
    dt: float
    diag: np.ndarray
    off: np.ndarray
    b: np.ndarray
    chol: np.ndarray

    @property
    def A(self):
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, x):
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    def solve_I_plus_A(self, rhs):
        return scipy.linalg.cho_solve_banded((self.chol, False), rhs, check_finite=False)

    def contraction_factor(self):
        """``|(I+A)^{-1}(I-A)|_2`` from the eigenvalues of the symmetric ``A``."""
        lam = scipy.linalg.eigh_tridiagonal(self.diag, self.off, eigvals_only=True)
        return float(np.max(np.abs((1.0 - lam) / (1.0 + lam))))


def build_bearing(n, eps=0.4):
    if n < 2:
        raise ConfigurationError("bearing grid needs n >= 2")
    if not 0.0 <= eps < 1.0:
        raise ConfigurationError(f"eccentricity must lie in [0, 1), got {eps!r}")
    dt = 2.0 / (n + 1)
    i = np.arange(1, n + 1)
    h_plus = bearing_thickness((i + 0.5) * dt, eps)
    h_minus = bearing_thickness((i - 0.5) * dt, eps)
    diag = h_plus**3 + h_minus**3
    # row i carries -(h_{i+1/2})^3 right of the diagonal and row i+1 carries
    # -(h_{(i+1)-1/2})^3 left of it: the same number
    off = -(h_plus[:-1] ** 3)
    b = -dt * (h_plus - h_minus)
    ab = np.zeros((2, n))
    ab[0, 1:] = off
    ab[1] = 1.0 + diag
    chol = scipy.linalg.cholesky_banded(ab, lower=False)
    return BearingInstance(n=n, eps=float(eps), dt=dt, diag=diag, off=off, b=b, chol=chol)


def bearing_fixed_point_map(inst):
    """``G(u) = (I+A)^{-1} ((I-A)|u| + b)`` and its smoothing."""

    def apply(absu):
        return inst.solve_I_plus_A(absu - inst.matvec(absu) + inst.b)

    def G(u):
        return apply(np.abs(u))

    def Gs(u, mu):
        return apply(smooth_abs_vec(u, mu))

    return FixedPointProblem(
        dim=inst.n,
        eval_G=G,
        eval_G_smooth=Gs,
        contraction_estimate=inst.contraction_factor(),
        kappa_estimate=2 * KAPPA * math.sqrt(inst.n),
        name="bearing",
    )


def bearing_pressure(u):
    """Recover ``p = |u| + u`` from a fixed point of the bearing map."""
    u = np.asarray(u, dtype=float)
    return np.abs(u) + u


def gave_fixed_point_map(A, B, b):
    """Generic ``G(u) = (I - A) u + B|u| + b`` for ``Au - B|u| = b``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    IA = np.eye(n) - A
    c = spectral_norm(IA) + spectral_norm(B)
    return FixedPointProblem(
        dim=n,
        eval_G=lambda u: IA @ u + B @ np.abs(u) + b,
        eval_G_smooth=lambda u, mu: IA @ u + B @ smooth_abs_vec(u, mu) + b,
        contraction_estimate=c if c < 1 else None,
        name="gave",
    )


# --------------------------------------------------------------------------
# non-negative least squares


@dataclass(frozen=True, eq=False)
class NnlsInstance:
    A: np.ndarray
    b: np.ndarray
    lam: float
    alpha_step: float
    L: float


def make_nnls_instance(A, b, lam=NNLS_LAMBDA):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    M = A.shape[0]
    L = spectral_norm(A) ** 2 / M + 2.0 * lam
    return NnlsInstance(A=A, b=b, lam=float(lam), alpha_step=1.0 / L, L=L)


def build_nnls_synthetic(M, n, condition_target=2.1e4, seed=0, lam=NNLS_LAMBDA, gram_scale=15.0):
    """Ill-conditioned NNLS data with a geometric singular spectrum.

    The singular values run from ``sqrt(gram_scale * M)`` down by the factor
    ``condition_target``, so ``|A|^2 / M = gram_scale``; left and right
    singular vectors are Haar-random orthogonal factors.
    """
    if condition_target < 1:
        raise ConfigurationError("condition_target must be >= 1")
    if M < 1 or n < 1:
        raise ConfigurationError("M and n must be positive")
    rng = make_rng(seed, 0)
    r = min(M, n)
    smax = math.sqrt(gram_scale * M)
    s = smax * condition_target ** (-np.arange(r) / max(r - 1, 1))
    U = _haar_orthogonal(rng, M, r)
    V = _haar_orthogonal(rng, n, r)
    A = (U * s) @ V.T
    b = rng.standard_normal(M)
    return make_nnls_instance(A, b, lam)


def _haar_orthogonal(rng, n, r):
    Z = rng.standard_normal((n, r))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def nnls_gradient(inst, u):
    M = inst.A.shape[0]
    return inst.A.T @ (inst.A @ u - inst.b) / M + 2.0 * inst.lam * u


def nnls_fixed_point_map(inst):
    a = inst.alpha_step

    def Q(u):
        return u - a * nnls_gradient(inst, u)

    return FixedPointProblem(
        dim=inst.A.shape[1],
        eval_G=lambda u: np.maximum(Q(u), 0.0),
        eval_G_smooth=lambda u, mu: smooth_max_vec(Q(u), mu),
        kappa_estimate=KAPPA * math.sqrt(inst.A.shape[1]),
        name="nnls",
    )


def initial_point(family, dim, seed, scale=None):
    """Seeded starting point ``scale * N(0, I)``; scale defaults per family."""
    if scale is None:
        scale = U0_SCALE[family]
    return scale * make_rng(seed, 1).standard_normal(dim)
