"""Efficiency factor and asymptotic covariance of M-quantile coefficients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateEfficiency, SingularDesign
from .influence import check_c, check_q, dpsi_q, psi_q

__all__ = ["CovarianceEstimate", "tau_hat", "sandwich_cov", "tau_cov"]


@dataclass
class CovarianceEstimate:
    cov: np.ndarray
    se: np.ndarray
    tau: float
    kind: str = "sandwich"


def tau_hat(std_residuals, q, c):
    """Plug-in efficiency factor ``mean(psi_q')**2 / mean(psi_q**2)``.

    The residuals must already be divided by the scale estimate.

    Raises
    ------
    DegenerateEfficiency
        If every residual is exactly zero.
    """
    q, c = check_q(q), check_c(c)
    r = np.asarray(std_residuals, dtype=float).reshape(-1)
    den = np.mean(psi_q(r, q, c) ** 2)
    if not den > 0:
        raise DegenerateEfficiency("all standardized residuals are zero")
    return float(np.mean(dpsi_q(r, q, c)) ** 2 / den)


def _symmetrize(a):
    return 0.5 * (a + a.T)


def sandwich_cov(data, mqfit, q=None, c=None):
    """Sandwich covariance ``sigma^2 A^{-1} B A^{-1}`` of the coefficients.

    ``A = sum psi_q'(r_i) x_i x_i'`` and ``B = sum psi_q(r_i)^2 x_i x_i'``
    with ``r_i`` the standardized residuals of ``mqfit``. ``q`` and ``c``
    default to the values the fit was made with.
    """
    q = mqfit.config.q if q is None else q
    c = mqfit.config.c if c is None else c
    X = data.X
    r = mqfit.residuals / mqfit.sigma
    d1 = dpsi_q(r, q, c)
    ps = psi_q(r, q, c)
    A = (X * d1[:, None]).T @ X
    B = (X * (ps * ps)[:, None]).T @ X
    try:
        if np.linalg.cond(A) > 1e14:
            raise np.linalg.LinAlgError
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise SingularDesign("sandwich bread matrix is singular; too few "
                             "residuals inside the Huber threshold") from None
    cov = _symmetrize(mqfit.sigma ** 2 * A_inv @ B @ A_inv)
    return CovarianceEstimate(cov=cov, se=np.sqrt(np.clip(np.diag(cov), 0, None)),
                              tau=tau_hat(r, q, c), kind="sandwich")


def tau_cov(data, mqfit, q=None, c=None):
    """Covariance collapsed through the efficiency factor: ``sigma^2 / tau * (X'X)^{-1}``."""
    q = mqfit.config.q if q is None else q
    c = mqfit.config.c if c is None else c
    tau = tau_hat(mqfit.residuals / mqfit.sigma, q, c)
    if not tau > 0:
        raise DegenerateEfficiency("efficiency factor is zero")
    cov = _symmetrize(mqfit.sigma ** 2 / tau * np.linalg.inv(data.X.T @ data.X))
    return CovarianceEstimate(cov=cov, se=np.sqrt(np.diag(cov)), tau=tau, kind="tau")
