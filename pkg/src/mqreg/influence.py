"""Huber and M-quantile loss, influence, derivative and IRLS weight functions.

All functions broadcast over array input and return a Python float for
scalar input. The asymmetric M-quantile influence is

    psi_q(u) = 2(1-q) psi_c(u)   for u <= 0
               2q     psi_c(u)   for u >  0

with psi_c the Huber influence clipped at +-c.
"""
import numpy as np

__all__ = [
    "check_q",
    "check_c",
    "psi_huber",
    "dpsi_huber",
    "rho_huber",
    "rho_q",
    "psi_q",
    "dpsi_q",
    "irls_weight",
]


def check_q(q):
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile order must lie in (0, 1), got {q!r}")
    return q


def check_c(c):
    c = float(c)
    if not (np.isfinite(c) and c > 0.0):
        raise ValueError(f"tuning constant must be positive and finite, got {c!r}")
    return c


def _out(u, value):
    if np.ndim(u) == 0:
        return float(value)
    return value


def _side_factor(u, q):
    # u <= 0 takes the 2(1-q) branch, including u == 0
    return np.where(u > 0, 2.0 * q, 2.0 * (1.0 - q))


def psi_huber(u, c):
    """Huber influence: ``u`` inside ``[-c, c]``, ``c*sign(u)`` outside."""
    c = check_c(c)
    u_arr = np.asarray(u, dtype=float)
    return _out(u, np.clip(u_arr, -c, c))


def dpsi_huber(u, c):
    """Derivative of the Huber influence; 1 on the closed interval ``|u| <= c``."""
    c = check_c(c)
    u_arr = np.asarray(u, dtype=float)
    return _out(u, (np.abs(u_arr) <= c).astype(float))


def rho_huber(u, c):
    """Huber loss ``u**2/2`` inside the threshold, ``c|u| - c**2/2`` outside."""
    c = check_c(c)
    a = np.abs(np.asarray(u, dtype=float))
    return _out(u, np.where(a <= c, 0.5 * a * a, c * a - 0.5 * c * c))


def rho_q(u, q, c):
    """Asymmetric Huber loss whose derivative is :func:`psi_q`.

    Parameters
    ----------
    u : float or array_like
        Standardized residual(s).
    q : float
        M-quantile order in (0, 1).
    c : float
        Huber tuning constant.
    """
    q, c = check_q(q), check_c(c)
    u_arr = np.asarray(u, dtype=float)
    return _out(u, _side_factor(u_arr, q) * rho_huber(u_arr, c))


def psi_q(u, q, c):
    """M-quantile influence function with a nested Huber core."""
    q, c = check_q(q), check_c(c)
    u_arr = np.asarray(u, dtype=float)
    return _out(u, _side_factor(u_arr, q) * np.clip(u_arr, -c, c))


def dpsi_q(u, q, c):
    """Derivative of :func:`psi_q`: ``2(1-q)`` on ``[-c, 0]``, ``2q`` on ``(0, c]``, else 0."""
    q, c = check_q(q), check_c(c)
    u_arr = np.asarray(u, dtype=float)
    return _out(u, _side_factor(u_arr, q) * (np.abs(u_arr) <= c))


def irls_weight(u, q, c):
    """IRLS weight ``psi_q(u)/u``; at ``u == 0`` the value is ``2(1-q)``."""
    q, c = check_q(q), check_c(c)
    u_arr = np.asarray(u, dtype=float)
    a = np.abs(u_arr)
    shrink = np.ones_like(a)
    np.divide(c, a, out=shrink, where=a > c)
    return _out(u, _side_factor(u_arr, q) * shrink)
