"""M-quantile regression by iteratively re-weighted least squares.

The scale is re-estimated inside the IRLS loop by one of four rules:

``nMAD``  median absolute residual / Phi^{-1}(3/4)
``cMAD``  median absolute deviation of the residuals about their median / Phi^{-1}(3/4)
``ML``    fixed point of mean(psi_q(r) r) = 1 (ALI likelihood score)
``MM``    moment match sum psi_q(r)^2 / (n - p) = E_ALI[psi_q^2]
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ali import MAD_CONSTANT, expected_psi_sq_ali
from .exceptions import DegenerateScale, DimensionMismatch, NoConvergence, SingularDesign
from .influence import check_c, check_q

__all__ = [
    "SCALE_METHODS",
    "Dataset",
    "MQConfig",
    "MQFit",
    "fit",
    "predict",
    "wls_solve",
    "scale_nmad",
    "scale_cmad",
    "scale_ml_step",
    "scale_mm_step",
    "huberised_mask",
]

SCALE_METHODS = {"nMAD": _kernels.NMAD, "cMAD": _kernels.CMAD,
                 "ML": _kernels.ML, "MM": _kernels.MM}
_ALIASES = {k.lower(): k for k in SCALE_METHODS}


def _scale_tag(tag):
    try:
        return _ALIASES[str(tag).lower()]
    except KeyError:
        raise ValueError(f"unknown scale method {tag!r}; expected one of "
                         f"{sorted(SCALE_METHODS)}") from None


@dataclass(frozen=True)
class Dataset:
    """Response vector and design matrix (intercept column included by the caller)."""

    y: np.ndarray
    X: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DimensionMismatch(f"X has shape {X.shape} but y has {y.size} rows")
        n, p = X.shape
        if p < 1 or n < p:
            raise DimensionMismatch(f"need n >= p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("Dataset contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        names = tuple(self.names) or tuple(f"x{j}" for j in range(p))
        if len(names) != p:
            raise DimensionMismatch("names must have one entry per design column")
        object.__setattr__(self, "names", names)

    @classmethod
    def intercept_only(cls, y):
        y = np.asarray(y, dtype=float).reshape(-1)
        return cls(y, np.ones((y.size, 1)), ("(Intercept)",))

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class MQConfig:
    q: float = 0.5
    c: float = 1.345
    scale: str = "cMAD"
    max_iter: int = 200
    tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "q", check_q(self.q))
        object.__setattr__(self, "c", check_c(self.c))
        object.__setattr__(self, "scale", _scale_tag(self.scale))
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class MQFit:
    """Result of :func:`fit`.

    ``residuals`` are ``y - X @ beta`` on the response scale; divide by
    ``sigma`` for standardized residuals.
    """

    beta: np.ndarray
    sigma: float
    residuals: np.ndarray
    converged: bool
    n_iter: int
    config: MQConfig = field(default_factory=MQConfig)

    @property
    def std_residuals(self):
        return self.residuals / self.sigma


def huberised_mask(residuals, sigma, c):
    """Boolean mask of residuals with ``|e| > c * sigma`` (ties are not Huberised)."""
    return np.abs(np.asarray(residuals, dtype=float)) > c * sigma


def _median(x):
    # numpy's median averages the two middle order statistics for even n
    return float(np.median(x))


def scale_nmad(residuals, q=0.5):
    """Naive MAD: ``median(|e|) / Phi^{-1}(3/4)``.

    ``q`` is accepted for interface symmetry with the other scale rules and
    does not enter the formula.
    """
    e = np.asarray(residuals, dtype=float)
    if e.size < 1:
        raise ValueError("scale_nmad needs at least one residual")
    s = _median(np.abs(e)) / MAD_CONSTANT
    if s == 0.0:
        raise DegenerateScale("median absolute residual is zero")
    return s


def scale_cmad(residuals, q=0.5):
    """Corrected MAD: deviations taken about the residual median."""
    e = np.asarray(residuals, dtype=float)
    if e.size < 2:
        raise ValueError("scale_cmad needs at least two residuals")
    s = _median(np.abs(e - _median(e))) / MAD_CONSTANT
    if s == 0.0:
        raise DegenerateScale("median absolute deviation is zero")
    return s


def scale_ml_step(residuals, sigma_prev, q, c):
    """One fixed-point step toward ``mean(psi_q(e/s) * e/s) = 1``."""
    q, c = check_q(q), check_c(c)
    if not sigma_prev > 0:
        raise ValueError("sigma_prev must be positive")
    e = np.asarray(residuals, dtype=float)
    s = _kernels._scale_step_numpy(e, float(sigma_prev), q, c, _kernels.ML, 0, 1.0)
    if s == 0.0:
        raise DegenerateScale("ML scale update is zero")
    return float(s)


def scale_mm_step(residuals, sigma_prev, q, c, p):
    """One method-of-moments step matching the ALI second moment of ``psi_q``."""
    q, c = check_q(q), check_c(c)
    e = np.asarray(residuals, dtype=float)
    if not sigma_prev > 0:
        raise ValueError("sigma_prev must be positive")
    if e.size <= p:
        raise ValueError("scale_mm_step needs n > p")
    s = _kernels._scale_step_numpy(e, float(sigma_prev), q, c, _kernels.MM, int(p),
                                   expected_psi_sq_ali(q, c))
    if s == 0.0:
        raise DegenerateScale("MM scale update is zero")
    return float(s)


def _check_rank(X):
    p = X.shape[1]
    if p == 1:
        if not np.any(X[:, 0] != 0.0):
            raise SingularDesign("design column is identically zero")
        return
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesign(f"design matrix has rank < {p}")


def wls_solve(X, y, weights):
    """Minimize ``sum w_i (y_i - x_i' beta)^2`` by QR of the weight-scaled design."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not (X.shape[0] == y.size == w.size):
        raise DimensionMismatch("X, y and weights must have the same number of rows")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be finite and strictly positive")
    beta = _kernels._wls_numpy(X, y, w)
    if beta is None:
        raise SingularDesign("weighted design is rank deficient")
    return beta


def _start(data):
    beta = np.linalg.lstsq(data.X, data.y, rcond=None)[0]
    resid = data.y - data.X @ beta
    sigma = _median(np.abs(resid - _median(resid))) / MAD_CONSTANT
    return beta, sigma


def _floor(y):
    proxy = _median(np.abs(y - _median(y))) / MAD_CONSTANT
    return 1e-12 * (proxy if proxy > 0 else 1.0)


def fit(data, cfg=None, *, init=None, strict=False, **kwargs):
    """Fit an M-quantile regression.

    Parameters
    ----------
    data : Dataset
    cfg : MQConfig, optional
        Defaults to ``MQConfig(**kwargs)``.
    init : tuple of (beta, sigma), optional
        Warm start; by default least squares with a cMAD scale.
    strict : bool
        Raise :class:`NoConvergence` instead of returning ``converged=False``.

    Returns
    -------
    MQFit

    Raises
    ------
    SingularDesign
        If ``X`` is rank deficient.
    DegenerateScale
        If the scale estimate collapses to zero.
    """
    if cfg is None:
        cfg = MQConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either cfg or keyword settings, not both")
    if not isinstance(data, Dataset):
        raise TypeError("data must be a Dataset")
    _check_rank(data.X)

    if init is None:
        beta0, sigma0 = _start(data)
    else:
        beta0 = np.asarray(init[0], dtype=float).reshape(-1)
        sigma0 = float(init[1])
        if beta0.size != data.p:
            raise DimensionMismatch("initial beta has the wrong length")
    floor = _floor(data.y)
    if not sigma0 > floor:
        if np.all(data.y == data.X @ beta0):
            raise DegenerateScale("data are fitted exactly; scale is zero")
        sigma0 = max(float(np.mean(np.abs(data.y - data.X @ beta0))), floor * 10)

    method = SCALE_METHODS[cfg.scale]
    e_mm = expected_psi_sq_ali(cfg.q, cfg.c) if method == _kernels.MM else 1.0
    if method == _kernels.MM and data.n <= data.p:
        raise ValueError("MM scale needs n > p")
    beta, sigma, n_iter, status = _kernels.irls(
        data.y, data.X, cfg.q, cfg.c, method, beta0, sigma0, e_mm, floor,
        cfg.tol, cfg.max_iter)

    if status == _kernels.SINGULAR:
        raise SingularDesign("weighted design became rank deficient during IRLS")
    if status == _kernels.DEGENERATE:
        raise DegenerateScale(f"{cfg.scale} scale collapsed to zero (q={cfg.q}, c={cfg.c})")
    converged = status == _kernels.CONVERGED
    if strict and not converged:
        raise NoConvergence(f"IRLS did not converge in {cfg.max_iter} iterations")
    beta = np.asarray(beta, dtype=float)
    return MQFit(beta=beta, sigma=float(sigma), residuals=data.y - data.X @ beta,
                 converged=converged, n_iter=int(n_iter), config=cfg)


def predict(mqfit, X_new):
    """Fitted M-quantiles ``X_new @ beta``."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new.reshape(-1, mqfit.beta.size) if X_new.size else np.empty((0, mqfit.beta.size))
    if X_new.ndim != 2 or X_new.shape[1] != mqfit.beta.size:
        raise DimensionMismatch(f"expected {mqfit.beta.size} columns, got shape {X_new.shape}")
    return X_new @ mqfit.beta
