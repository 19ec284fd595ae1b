"""Data-driven selection of the Huber tuning constant.

Two selectors are provided:

* :func:`select_c_av` picks, for one quantile order, the constant that
  maximizes the estimated efficiency factor (local, per-q).
* :func:`select_c_inv` picks one constant for a whole ensemble of orders by
  mapping fitted M-quantiles back to their orders through the inverse
  M-quantile function of a normal reference model (global).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from ._parallel import pmap
from .exceptions import DegenerateEfficiency, MQError
from .fitting import MQConfig, fit
from .influence import check_c, check_q

__all__ = [
    "CGrid",
    "TuningResult",
    "default_q_grid",
    "partial_expectation_normal",
    "inverse_mq",
    "select_c_av",
    "select_c_inv",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CGrid:
    """Regular grid of candidate tuning constants on ``[lo, hi]``.

    Values below 0.5 make the selectors unstable and are rejected.
    """

    lo: float = 0.5
    hi: float = 4.0
    step: float = 0.02

    def __post_init__(self):
        if not (0.5 <= self.lo < self.hi):
            raise ValueError(f"grid needs 0.5 <= lo < hi, got lo={self.lo}, hi={self.hi}")
        if not self.step > 0:
            raise ValueError("grid step must be positive")

    @classmethod
    def parse(cls, text, default_step=0.02):
        """Build a grid from ``"lo:hi:step"`` (step optional)."""
        parts = [float(v) for v in str(text).split(":")]
        if len(parts) == 2:
            parts.append(default_step)
        if len(parts) != 3:
            raise ValueError(f"grid must look like lo:hi[:step], got {text!r}")
        return cls(*parts)

    @property
    def values(self):
        k = int(math.floor((self.hi - self.lo) / self.step + 1e-9))
        return np.round(self.lo + self.step * np.arange(k + 1), 10)


@dataclass
class TuningResult:
    c_opt: float
    trace: list
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    note: str = ""
    fit: object = None
    failed_q: list = field(default_factory=list)


def default_q_grid(step=0.01):
    k = int(round(1.0 / step))
    return np.round(np.arange(1, k) * step, 10)


def partial_expectation_normal(t, mean=0.0, sd=1.0):
    """``int_{-inf}^t y dF(y)`` for ``F = N(mean, sd**2)``."""
    if not sd > 0:
        raise ValueError("sd must be positive")
    z = (np.asarray(t, dtype=float) - mean) / sd
    with np.errstate(invalid="ignore"):
        dens = np.where(np.isinf(z), 0.0, np.exp(-0.5 * z * z) / _SQRT_2PI)
    out = mean * special.ndtr(z) - sd * dens
    return float(out) if out.ndim == 0 else out


def inverse_mq(x, mean=0.0, sd=1.0, sigma_q=1.0, c=4.0, full_output=False):
    """Inverse Huber M-quantile function ``G_c(x; F)`` for a normal ``F``.

    Returns the order ``q`` whose M-quantile (scale ``sigma_q``, tuning
    ``c``) of ``N(mean, sd**2)`` equals ``x``.

    Parameters
    ----------
    full_output : bool
        Also return a boolean array marking points where the denominator
        vanished numerically and the value was clamped to 0 or 1.
    """
    c = check_c(c)
    if not (sd > 0 and sigma_q > 0):
        raise ValueError("sd and sigma_q must be positive")
    x_arr = np.asarray(x, dtype=float)
    s = float(sigma_q)
    a_lo, a_hi = x_arr - c * s, x_arr + c * s
    b_lo, b_hi = x_arr / s - c, x_arr / s + c

    def F(t):
        return special.ndtr((t - mean) / sd)

    def H(t):
        return np.asarray(partial_expectation_normal(t, mean, sd))

    Fx, Hx = F(x_arr), H(x_arr)
    F_lo, F_hi = F(a_lo), F(a_hi)
    H_lo, H_hi = H(a_lo), H(a_hi)
    num = b_lo * F_lo + (Hx - H_lo - x_arr * Fx) / s
    den = (2.0 * Hx - H_lo - H_hi - 2.0 * x_arr * Fx) / s + b_lo * F_lo + b_hi * F_hi - c
    bad = ~np.isfinite(den) | (np.abs(den) < 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(bad, np.where(x_arr < mean, 0.0, 1.0), num / den)
    g = np.clip(g, 0.0, 1.0)
    if x_arr.ndim == 0:
        g, bad = float(g), bool(bad)
    return (g, bad) if full_output else g


def _tau_trace(mqfit, q, cs):
    taus = _kernels.tau_grid(mqfit.residuals / mqfit.sigma, q, cs)
    if not np.any(np.isfinite(taus)):
        raise DegenerateEfficiency("all standardized residuals are zero")
    return taus


def select_c_av(data, q, grid=None, c_start=1.3, max_outer=20, scale="cMAD"):
    """Local tuning-constant selection by maximal estimated efficiency.

    Fit at the current constant, standardize the residuals, evaluate the
    efficiency factor over the grid, move to its maximizer and repeat until
    the maximizer stops changing. Ties go to the smallest constant. A
    two-point cycle resolves to the smaller constant.
    """
    q = check_q(q)
    grid = CGrid(step=0.02) if grid is None else grid
    cs = grid.values
    c_cur = float(c_start)
    history = [c_cur]
    steps = []  # (fitted c, trace, selected c, fit)
    for it in range(1, max_outer + 1):
        f = fit(data, MQConfig(q=q, c=c_cur, scale=scale))
        taus = _tau_trace(f, q, cs)
        c_new = float(cs[int(np.nanargmax(taus))])
        steps.append((c_cur, taus, c_new, f))
        if math.isclose(c_new, c_cur, abs_tol=1e-9):
            return TuningResult(c_opt=c_new, trace=list(zip(cs.tolist(), taus.tolist())),
                                iterations=it, converged=True, history=history, fit=f)
        if len(history) >= 2 and math.isclose(c_new, history[-2], abs_tol=1e-9):
            c_opt = min(c_new, c_cur)
            # the step whose maximizer is the smaller constant
            fitted_c, taus_c, _, _ = next(s for s in reversed(steps)
                                          if math.isclose(s[2], c_opt, abs_tol=1e-9))
            f_opt = next(s[3] for s in reversed(steps)
                         if math.isclose(s[0], c_opt, abs_tol=1e-9))
            return TuningResult(c_opt=c_opt, trace=list(zip(cs.tolist(), taus_c.tolist())),
                                iterations=it, converged=True, history=history,
                                note=f"cycle between {min(c_new, c_cur)} and {max(c_new, c_cur)}",
                                fit=f_opt)
        c_cur = c_new
        history.append(c_cur)
    _, taus, c_last, _ = steps[-1]
    return TuningResult(c_opt=c_last, trace=list(zip(cs.tolist(), taus.tolist())),
                        iterations=max_outer, converged=False, history=history,
                        note="outer iteration cap reached",
                        fit=fit(data, MQConfig(q=q, c=c_last, scale=scale)))


def _ensemble_deviation(data, c, q_grid, ref_c, scale):
    """Deviation ``sum (qhat - q)^2`` for one candidate constant."""
    meds, sigmas = {}, {}
    failed = []

    def run(q, init):
        try:
            f = fit(data, MQConfig(q=q, c=c, scale=scale), init=init)
        except MQError:
            f = None
        if f is None or not f.converged:
            failed.append(q)
            return init
        meds[q] = float(np.median(data.X @ f.beta))
        sigmas[q] = f.sigma
        return (f.beta, f.sigma)

    centre = run(0.5, None)
    if 0.5 not in meds:
        return math.inf, [float(q) for q in q_grid]
    # walk outward from the centre so each fit warm-starts from its neighbour
    for side in (q_grid[q_grid > 0.5], q_grid[q_grid < 0.5][::-1]):
        init = centre
        for q in side:
            init = run(float(q), init)
    qs = np.array(sorted(meds))
    x = np.array([(meds[q] - meds[0.5]) / sigmas[q] for q in qs])
    qhat = inverse_mq(x, 0.0, 1.0, 1.0, ref_c)
    return float(np.sum((qhat - qs) ** 2)), sorted(failed)


def select_c_inv(data, q_grid=None, grid=None, ref_c=4.0, scale="cMAD", workers=None):
    """Global tuning-constant selection through the inverse M-quantile function.

    For each candidate constant an ensemble of M-quantile fits over
    ``q_grid`` is computed; the median fitted value at each order, centred at
    the ``q = 0.5`` fit and standardized by that order's scale, is mapped back
    to an order with the inverse function of a standard normal at
    ``c = ref_c``. The constant whose recovered orders deviate least (sum of
    squares) from ``q_grid`` is returned.
    """
    q_grid = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float)
    for q in q_grid:
        check_q(q)
    if not np.any(np.isclose(q_grid, 0.5)):
        q_grid = np.sort(np.append(q_grid, 0.5))
    q_grid = np.round(q_grid, 10)
    grid = CGrid(step=0.1) if grid is None else grid
    cs = grid.values

    results = pmap(lambda c: _ensemble_deviation(data, float(c), q_grid, ref_c, scale),
                   cs, workers)
    devs = np.array([r[0] for r in results])
    failed = sorted({q for r in results for q in r[1]})
    if failed:
        warnings.warn(f"ensemble fits failed for q in {failed}; excluded from the deviation",
                      RuntimeWarning, stacklevel=2)
    j = int(np.argmin(devs))
    c_opt = float(cs[j])
    return TuningResult(c_opt=c_opt, trace=list(zip(cs.tolist(), devs.tolist())),
                        iterations=1, converged=bool(np.isfinite(devs[j])),
                        history=[c_opt], failed_q=failed)
