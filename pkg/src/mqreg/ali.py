"""Asymmetric least informative (ALI) distribution and normal helpers.

The ALI(mu, sigma, q, c) density is ``exp(-rho_q((y - mu)/sigma)) / (sigma * B_q)``
where ``rho_q`` is the asymmetric Huber loss. Its second-moment functional
``E[psi_q(u)^2]`` under ALI(0, 1, q, c) is the consistency target of the
method-of-moments scale estimator.
"""
import math
from functools import lru_cache

import numpy as np
from scipy import special

from .influence import check_c, check_q, rho_q

__all__ = [
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "b_q",
    "log_pdf",
    "pdf",
    "expected_psi_sq_ali",
    "expected_psi_sq_normal",
    "MAD_CONSTANT",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def normal_cdf(x):
    """Standard normal distribution function."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(x) == 0 else out


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


def normal_quantile(p):
    """Standard normal inverse distribution function.

    Raises
    ------
    ValueError
        If any ``p`` lies outside the open interval (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise ValueError("normal_quantile requires probabilities in (0, 1)")
    out = special.ndtri(p_arr)
    return float(out) if out.ndim == 0 else out


#: Phi^{-1}(3/4), the normal consistency constant of the MAD.
MAD_CONSTANT = normal_quantile(0.75)


def _half_gauss_mass(a, c):
    # int_0^c exp(-a u^2) du
    return 0.5 * math.sqrt(math.pi / a) * math.erf(c * math.sqrt(a))


@lru_cache(maxsize=4096)
def _b_q(q, c):
    inner = _half_gauss_mass(q, c) + _half_gauss_mass(1.0 - q, c)
    tails = (math.exp(-c * c * q) / (2.0 * c * q)
             + math.exp(-c * c * (1.0 - q)) / (2.0 * c * (1.0 - q)))
    return inner + tails


def b_q(q, c):
    """Normalizing constant of the standard ALI density.

    Closed form of ``int exp(-rho_q(u)) du`` over the real line: two
    truncated Gaussian pieces on ``[-c, c]`` plus two exponential tails.
    """
    return _b_q(check_q(q), check_c(c))


def log_pdf(y, mu=0.0, sigma=1.0, q=0.5, c=1.345):
    """Log density of ALI(mu, sigma, q, c) evaluated at ``y``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    u = (np.asarray(y, dtype=float) - mu) / sigma
    out = -math.log(sigma) - math.log(b_q(q, c)) - rho_q(u, q, c)
    return float(out) if np.ndim(y) == 0 else out


def pdf(y, mu=0.0, sigma=1.0, q=0.5, c=1.345):
    return np.exp(log_pdf(y, mu, sigma, q, c))


def _gl(f, a, b):
    half = 0.5 * (b - a)
    x = a + half * (_GL_NODES + 1.0)
    return half * float(np.dot(_GL_WEIGHTS, f(x)))


@lru_cache(maxsize=4096)
def _expected_psi_sq_ali(q, c):
    lo, hi = 2.0 * (1.0 - q), 2.0 * q
    # on [-c, c] psi_q^2 * exp(-rho_q) is smooth on each half-line; nodes stop
    # where the Gaussian factor drops below e^-50 so large c stays resolved
    left = _gl(lambda u: (lo * u) ** 2 * np.exp(-(1.0 - q) * u * u),
               -min(c, math.sqrt(50.0 / (1.0 - q))), 0.0)
    right = _gl(lambda u: (hi * u) ** 2 * np.exp(-q * u * u), 0.0, min(c, math.sqrt(50.0 / q)))
    # tails: psi_q^2 is constant, exp(-rho_q) integrates in closed form
    left_tail = (lo * c) ** 2 * math.exp(-c * c * (1.0 - q)) / (2.0 * c * (1.0 - q))
    right_tail = (hi * c) ** 2 * math.exp(-c * c * q) / (2.0 * c * q)
    return (left + right + left_tail + right_tail) / _b_q(q, c)


def expected_psi_sq_ali(q, c):
    """``E[psi_q(u)^2]`` for ``u ~ ALI(0, 1, q, c)``."""
    return _expected_psi_sq_ali(check_q(q), check_c(c))


def expected_psi_sq_normal(c):
    """``E[psi_c(u)^2]`` for ``u ~ N(0, 1)``; the Huber Proposal 2 target."""
    c = check_c(c)
    phi_c = math.exp(-0.5 * c * c) / _SQRT_2PI
    upper = 0.5 * math.erfc(c / math.sqrt(2.0))
    return math.erf(c / math.sqrt(2.0)) - 2.0 * c * phi_c + 2.0 * c * c * upper
