"""
Piecewise-quadratic smoothing of ``max(t, 0)`` and the operators built on it.

The smoothing function ``phi(t, mu)`` is C^1 in ``t``, agrees with
``max(t, 0)`` outside ``[0, mu + 2*sqrt(mu)]`` and never deviates from it by
more than ``mu / 2``. Passing ``mu = 0`` returns the exact nonsmooth value.
"""

import numpy as np

# sup_t |phi(t, mu) - max(t, 0)| = KAPPA * mu, attained at t = mu
KAPPA = 0.5


def _check_mu(mu):
    mu = float(mu)
    if not mu >= 0.0 or not np.isfinite(mu):
        raise ValueError(f"smoothing parameter must be non-negative and finite, got {mu!r}")
    return mu


def _phi_array(t, mu):
    t = np.asarray(t, dtype=float)
    if mu == 0.0:
        return np.maximum(t, 0.0)
    s = np.sqrt(mu)
    b1, b2, b3 = mu, mu + s, mu + 2.0 * s
    out = t.copy()
    out[t < 0.0] = 0.0
    m = (t >= 0.0) & (t <= b1)
    out[m] = t[m] ** 2 / (2.0 * mu)
    m = (t > b1) & (t <= b2)
    out[m] = (t[m] - mu) ** 2 / 4.0 + t[m] - mu / 2.0
    m = (t > b2) & (t <= b3)
    out[m] = -((t[m] - b3) ** 2) / 4.0 + t[m]
    return out


def _dphi_array(t, mu):
    t = np.asarray(t, dtype=float)
    if mu == 0.0:
        return (t > 0.0).astype(float)
    s = np.sqrt(mu)
    b1, b2, b3 = mu, mu + s, mu + 2.0 * s
    out = np.ones_like(t)
    out[t < 0.0] = 0.0
    m = (t >= 0.0) & (t <= b1)
    out[m] = t[m] / mu
    m = (t > b1) & (t <= b2)
    out[m] = (t[m] - mu) / 2.0 + 1.0
    m = (t > b2) & (t <= b3)
    out[m] = -(t[m] - b3) / 2.0 + 1.0
    return out


def phi(t, mu):
    """Smoothing function of ``max(t, 0)``.

    Five branches on the half-open intervals ``(-inf, 0)``, ``[0, mu]``,
    ``(mu, mu+sqrt(mu)]``, ``(mu+sqrt(mu), mu+2sqrt(mu)]`` and the rest.
    Works on scalars and arrays; scalars in give a float back.

    Raises
    ------
    ValueError
        If ``mu`` is negative or not finite.
    """
    mu = _check_mu(mu)
    out = _phi_array(np.atleast_1d(t), mu)
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def phi_derivative(t, mu):
    """Derivative of :func:`phi` with respect to ``t``.

    At the breakpoints both one-sided derivatives coincide, so the shared
    value is returned.
    """
    mu = _check_mu(mu)
    out = _dphi_array(np.atleast_1d(t), mu)
    return float(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


def smooth_max_vec(v, mu):
    """Elementwise smoothed ``max(v, 0)``."""
    mu = _check_mu(mu)
    return _phi_array(np.asarray(v, dtype=float), mu)


def smooth_abs_vec(v, mu):
    """Smoothed ``|v|`` built as ``phi(v) + phi(-v)``."""
    mu = _check_mu(mu)
    v = np.asarray(v, dtype=float)
    return _phi_array(v, mu) + _phi_array(-v, mu)


def soft_threshold(v, threshold):
    """Exact soft-thresholding ``sign(v) * max(|v| - threshold, 0)``."""
    v = np.asarray(v, dtype=float)
    return np.maximum(v - threshold, 0.0) - np.maximum(-v - threshold, 0.0)


def smooth_soft_threshold(v, threshold, mu):
    """Smoothed soft-thresholding ``phi(v - t) - phi(-v - t)``.

    Parameters
    ----------
    v : array_like
        Input vector.
    threshold : float
        Non-negative threshold ``t``.
    mu : float
        Smoothing parameter; ``0`` gives :func:`soft_threshold`.
    """
    mu = _check_mu(mu)
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold!r}")
    v = np.asarray(v, dtype=float)
    return _phi_array(v - threshold, mu) - _phi_array(-v - threshold, mu)
