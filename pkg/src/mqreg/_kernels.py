"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The numba path is used when numba imports and ``MQREG_DISABLE_NUMBA`` is
unset (or set to ``0``/``false``). Both backends are always importable
under explicit names (``*_numpy`` / ``*_numba``) so they can be compared
against each other and benchmarked.

Kernel status codes returned by ``irls``:

    0  converged
    1  iteration cap reached
    2  scale collapsed onto the floor twice
    3  weighted design numerically singular
"""
import os

import numpy as np
from scipy.linalg import solve_triangular

from . import influence

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_flag = os.environ.get("MQREG_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _flag in ("", "0", "false", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"

NMAD, CMAD, ML, MM = 0, 1, 2, 3
CONVERGED, MAXITER, DEGENERATE, SINGULAR = 0, 1, 2, 3

_MAD_CONST = 0.6744897501960817
_RANK_EPS = 1e-12


# ---------------------------------------------------------------- numpy path

def psi_q_numpy(u, q, c):
    return influence.psi_q(u, q, c)


def irls_weight_numpy(u, q, c):
    return influence.irls_weight(u, q, c)


def tau_grid_numpy(r, q, cs):
    """Efficiency factor for every tuning constant in ``cs`` (sorted-sweep form)."""
    r = np.asarray(r, dtype=float)
    cs = np.asarray(cs, dtype=float)
    n = r.size
    out = np.empty(cs.size)
    num = np.zeros(cs.size)
    den = np.zeros(cs.size)
    for side, fac in ((r[r <= 0], 2.0 * (1.0 - q)), (r[r > 0], 2.0 * q)):
        a = np.sort(np.abs(side))
        csq = np.concatenate(([0.0], np.cumsum(a * a)))
        k = np.searchsorted(a, cs, side="right")  # count with |r| <= c
        num += fac * k
        den += fac * fac * (csq[k] + (a.size - k) * cs * cs)
    num /= n
    den /= n
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num * num / den
    return out


def _wls_numpy(X, y, w):
    sw = np.sqrt(w)
    if X.shape[1] == 1:
        x = X[:, 0]
        den = np.dot(w * x, x)
        if not den > 0:
            return None
        return np.array([np.dot(w * x, y) / den])
    qmat, rmat = np.linalg.qr(X * sw[:, None])
    d = np.abs(np.diag(rmat))
    if d.min() <= _RANK_EPS * d.max() * X.shape[0]:
        return None
    return solve_triangular(rmat, qmat.T @ (sw * y))


def _scale_step_numpy(resid, sigma, q, c, method, p, e_mm):
    if method == NMAD:
        return np.median(np.abs(resid)) / _MAD_CONST
    if method == CMAD:
        return np.median(np.abs(resid - np.median(resid))) / _MAD_CONST
    r = resid / sigma
    ps = np.where(r > 0, 2.0 * q, 2.0 * (1.0 - q)) * np.clip(r, -c, c)
    if method == ML:
        return np.sqrt(max(np.mean(ps * resid) * sigma, 0.0))
    n = resid.size
    return sigma * np.sqrt(np.dot(ps, ps) / ((n - p) * e_mm))


def _scale_solve_numpy(resid, sigma, q, c, method, p, e_mm):
    """Solve the ML / MM scale equation with the Huberised set held fixed.

    This is the limit of repeating the one-step fixed-point update while the
    set ``|e| > c*sigma`` does not change; falls back to the one-step update
    when the partitioned equation has no positive root.
    """
    if method == NMAD or method == CMAD:
        return _scale_step_numpy(resid, sigma, q, c, method, p, e_mm)
    n = resid.size
    k = np.where(resid > 0, 2.0 * q, 2.0 * (1.0 - q))
    inside = np.abs(resid) <= c * sigma
    if method == ML:
        a = np.sum(k[inside] * resid[inside] ** 2)
        b = c * np.sum(k[~inside] * np.abs(resid[~inside]))
        return (b + np.sqrt(b * b + 4.0 * n * a)) / (2.0 * n)
    a = np.sum((k[inside] * resid[inside]) ** 2)
    den = (n - p) * e_mm - c * c * np.sum(k[~inside] ** 2)
    if den > 0.0 and a > 0.0:
        return np.sqrt(a / den)
    return _scale_step_numpy(resid, sigma, q, c, method, p, e_mm)


def irls_numpy(y, X, q, c, method, beta, sigma, e_mm, floor, tol, max_iter):
    n, p = X.shape
    beta = np.array(beta, dtype=float)
    hits = 0
    for it in range(1, max_iter + 1):
        fitted = X @ beta
        w = influence.irls_weight((y - fitted) / sigma, q, c)
        beta_new = _wls_numpy(X, y, w)
        if beta_new is None:
            return beta, sigma, it, SINGULAR
        fitted_new = X @ beta_new
        sigma_new = _scale_solve_numpy(y - fitted_new, sigma, q, c, method, p, e_mm)
        if not sigma_new > floor:
            hits += 1
            if hits >= 2:
                return beta_new, floor, it, DEGENERATE
            sigma_new = floor
        step = max(np.max(np.abs(fitted_new - fitted)), abs(sigma_new - sigma)) / sigma
        beta, sigma = beta_new, sigma_new
        if step < tol:
            return beta, sigma, it, CONVERGED
    return beta, sigma, max_iter, MAXITER


# ---------------------------------------------------------------- numba path

if numba is not None:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _psi1(u, q, c):
        v = u
        if v > c:
            v = c
        elif v < -c:
            v = -c
        if u > 0.0:
            return 2.0 * q * v
        return 2.0 * (1.0 - q) * v

    @_jit
    def _w1(u, q, c):
        fac = 2.0 * q if u > 0.0 else 2.0 * (1.0 - q)
        a = abs(u)
        if a > c:
            return fac * c / a
        return fac

    @_jit
    def _psi_q_nb(u, q, c):
        out = np.empty_like(u)
        for i in range(u.size):
            out[i] = _psi1(u[i], q, c)
        return out

    @_jit
    def _irls_weight_nb(u, q, c):
        out = np.empty_like(u)
        for i in range(u.size):
            out[i] = _w1(u[i], q, c)
        return out

    @_jit
    def _tau_grid_nb(neg, pos, q, cs):
        # neg, pos: sorted |r| on each side; cs ascending
        n = neg.size + pos.size
        lo2 = 4.0 * (1.0 - q) * (1.0 - q)
        hi2 = 4.0 * q * q
        total_f2 = lo2 * neg.size + hi2 * pos.size
        out = np.empty(cs.size)
        i = 0
        k = 0
        num = 0.0
        inner = 0.0
        inner_f2 = 0.0
        for j in range(cs.size):
            c = cs[j]
            while i < neg.size and neg[i] <= c:
                num += 2.0 * (1.0 - q)
                inner += lo2 * neg[i] * neg[i]
                inner_f2 += lo2
                i += 1
            while k < pos.size and pos[k] <= c:
                num += 2.0 * q
                inner += hi2 * pos[k] * pos[k]
                inner_f2 += hi2
                k += 1
            den = (inner + (total_f2 - inner_f2) * c * c) / n
            if den > 0.0:
                out[j] = (num / n) * (num / n) / den
            else:
                out[j] = np.nan
        return out

    @_jit
    def _wls_nb(X, y, w):
        n, p = X.shape
        beta = np.empty(p)
        if p == 1:
            num = 0.0
            den = 0.0
            for i in range(n):
                wx = w[i] * X[i, 0]
                num += wx * y[i]
                den += wx * X[i, 0]
            if not den > 0.0:
                return beta, False
            beta[0] = num / den
            return beta, True
        A = np.empty((n, p))
        b = np.empty(n)
        for i in range(n):
            s = np.sqrt(w[i])
            b[i] = s * y[i]
            for j in range(p):
                A[i, j] = s * X[i, j]
        Q, R = np.linalg.qr(A)
        dmax = 0.0
        dmin = np.inf
        for j in range(p):
            d = abs(R[j, j])
            dmax = max(dmax, d)
            dmin = min(dmin, d)
        if dmin <= _RANK_EPS * dmax * n:
            return beta, False
        rhs = np.zeros(p)
        for j in range(p):
            for i in range(n):
                rhs[j] += Q[i, j] * b[i]
        for j in range(p - 1, -1, -1):
            acc = rhs[j]
            for k in range(j + 1, p):
                acc -= R[j, k] * beta[k]
            beta[j] = acc / R[j, j]
        return beta, True

    @_jit
    def _scale_step_nb(resid, sigma, q, c, method, p, e_mm):
        n = resid.size
        if method == 0:
            return np.median(np.abs(resid)) / _MAD_CONST
        if method == 1:
            med = np.median(resid)
            return np.median(np.abs(resid - med)) / _MAD_CONST
        acc = 0.0
        if method == 2:
            for i in range(n):
                acc += _psi1(resid[i] / sigma, q, c) * resid[i]
            acc = acc / n * sigma
            return np.sqrt(acc) if acc > 0.0 else 0.0
        for i in range(n):
            v = _psi1(resid[i] / sigma, q, c)
            acc += v * v
        return sigma * np.sqrt(acc / ((n - p) * e_mm))

    @_jit
    def _scale_solve_nb(resid, sigma, q, c, method, p, e_mm):
        if method == 0 or method == 1:
            return _scale_step_nb(resid, sigma, q, c, method, p, e_mm)
        n = resid.size
        a = 0.0
        b = 0.0
        for i in range(n):
            e = resid[i]
            k = 2.0 * q if e > 0.0 else 2.0 * (1.0 - q)
            if abs(e) <= c * sigma:
                a += k * e * e if method == 2 else k * k * e * e
            else:
                b += k * c * abs(e) if method == 2 else k * k * c * c
        if method == 2:
            return (b + np.sqrt(b * b + 4.0 * n * a)) / (2.0 * n)
        den = (n - p) * e_mm - b
        if den > 0.0 and a > 0.0:
            return np.sqrt(a / den)
        return _scale_step_nb(resid, sigma, q, c, method, p, e_mm)

    @_jit
    def _irls_nb(y, X, q, c, method, beta0, sigma, e_mm, floor, tol, max_iter):
        n, p = X.shape
        beta = beta0.copy()
        fitted = X @ beta
        w = np.empty(n)
        hits = 0
        for it in range(1, max_iter + 1):
            for i in range(n):
                w[i] = _w1((y[i] - fitted[i]) / sigma, q, c)
            beta_new, ok = _wls_nb(X, y, w)
            if not ok:
                return beta, sigma, it, 3
            fitted_new = X @ beta_new
            sigma_new = _scale_solve_nb(y - fitted_new, sigma, q, c, method, p, e_mm)
            if not sigma_new > floor:
                hits += 1
                if hits >= 2:
                    return beta_new, floor, it, 2
                sigma_new = floor
            step = abs(sigma_new - sigma)
            for i in range(n):
                step = max(step, abs(fitted_new[i] - fitted[i]))
            step /= sigma
            beta = beta_new
            fitted = fitted_new
            sigma = sigma_new
            if step < tol:
                return beta, sigma, it, 0
        return beta, sigma, max_iter, 1

    def psi_q_numba(u, q, c):
        return _psi_q_nb(np.ascontiguousarray(u, dtype=np.float64), float(q), float(c))

    def irls_weight_numba(u, q, c):
        return _irls_weight_nb(np.ascontiguousarray(u, dtype=np.float64), float(q), float(c))

    def tau_grid_numba(r, q, cs):
        # numpy's vectorized sort beats a jitted one; the sweep is jitted
        r = np.asarray(r, dtype=np.float64)
        cs = np.asarray(cs, dtype=np.float64)
        order = np.argsort(cs, kind="stable")
        neg = np.sort(-r[r <= 0])
        pos = np.sort(r[r > 0])
        out = np.empty(cs.size)
        out[order] = _tau_grid_nb(neg, pos, float(q), np.ascontiguousarray(cs[order]))
        return out

    def irls_numba(y, X, q, c, method, beta, sigma, e_mm, floor, tol, max_iter):
        beta, sigma, it, status = _irls_nb(
            np.ascontiguousarray(y, dtype=np.float64),
            np.ascontiguousarray(X, dtype=np.float64),
            float(q), float(c), int(method),
            np.ascontiguousarray(beta, dtype=np.float64),
            float(sigma), float(e_mm), float(floor), float(tol), int(max_iter))
        return beta, float(sigma), int(it), int(status)
else:  # pragma: no cover
    psi_q_numba = irls_weight_numba = tau_grid_numba = irls_numba = None


if USE_NUMBA:
    psi_q = psi_q_numba
    irls_weight = irls_weight_numba
    tau_grid = tau_grid_numba
    irls = irls_numba
else:
    psi_q = psi_q_numpy
    irls_weight = irls_weight_numpy
    tau_grid = tau_grid_numpy
    irls = irls_numpy
