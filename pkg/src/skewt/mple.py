"""
Maximum penalized likelihood for univariate (regression) and multivariate
skew-t models.

The optimizer works in an unconstrained parameterization: free location
coefficients, ``log omega`` (or the log-diagonal and off-diagonal entries of
a Cholesky factor of ``Omega``), free slant, and ``log(nu - NU0)``.
Gradients are central finite differences.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .errors import DomainError, NumericalError
from .inversion import PreliminaryEstimate, init_regression, intercept_column
from .multivariate import (
    MSTParams,
    delta_to_alpha,
    feasibility_adjust,
    init_multivariate,
    mst_logpdf,
    scale_split,
)
from .univariate import (
    STParams,
    STRegParams,
    b_nu,
    lambda_of_delta,
    st_logpdf,
    st_moments,
)

__all__ = [
    "NU0",
    "NU_MAX",
    "PENALTY_C1",
    "PENALTY_C2",
    "FitResult",
    "DevianceGrid",
    "penalty",
    "st_loglik",
    "mst_loglik",
    "loglik",
    "penalized_loglik",
    "cumulant_start",
    "mcumulant_start",
    "maximize",
    "fit",
    "deviance_grid",
]

NU0 = 0.1
NU_MAX = 1e6
# Q(a2) = c1 log(1 + c2 a2), a2 the squared standardized slant
PENALTY_C1 = 0.875913
PENALTY_C2 = 0.856250
FALLBACK_NU = 10.0
_BAD = 1e100

ParamsT = Union[STRegParams, MSTParams]


@dataclass
class FitResult:
    params: ParamsT
    loglik: float
    penalized_loglik: float
    start: PreliminaryEstimate
    method_tag: str
    converged: bool
    iterations: int
    elapsed: float
    grad_norm: float = math.nan
    nu_at_bound: bool = False
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "loglik": self.loglik,
            "penalized_loglik": self.penalized_loglik,
            "method": self.method_tag,
            "converged": self.converged,
            "iterations": self.iterations,
            "elapsed": self.elapsed,
            "grad_norm": self.grad_norm,
            "nu_at_bound": self.nu_at_bound,
            "start": {
                "method": self.start.method,
                "params": self.start.params.as_dict(),
                "clamped_M": self.start.clamped_M,
                "clamped_G": self.start.clamped_G,
            },
        }


def _slant_sq(params) -> float:
    if isinstance(params, MSTParams):
        Obar = params.Omega_bar
        return float(params.alpha @ Obar @ params.alpha)
    return float(params.lam) ** 2


def penalty(params) -> float:
    """
    Slant penalty ``c1 log(1 + c2 a2)``.

    ``a2`` is ``lam^2`` for univariate parameters and
    ``alpha' Omega_bar alpha`` (equivalently ``d'Ob^-1 d / (1 - d'Ob^-1 d)``
    in terms of ``delta``) for multivariate ones.
    """
    return PENALTY_C1 * math.log1p(PENALTY_C2 * _slant_sq(params))


def _design(y, X):
    y = np.asarray(y, float)
    n = y.shape[0]
    if X is None:
        return y, np.ones((n, 1))
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise DomainError("X and y have different numbers of rows")
    return y, X


def st_loglik(params, y, X=None) -> float:
    """Sum of skew-t log densities; ``params`` is :class:`STRegParams` or :class:`STParams`."""
    y = np.asarray(y, float).ravel()
    if isinstance(params, STParams):
        lp = st_logpdf(y, params)
    else:
        y, X = _design(y, X)
        xi = X @ params.beta
        base = STParams(0.0, params.omega, params.lam, params.nu)
        lp = st_logpdf(y - xi, base)
    lp = np.atleast_1d(lp)
    bad = np.flatnonzero(~np.isfinite(lp))
    if bad.size:
        raise NumericalError(f"non-finite log density at observation {int(bad[0])}")
    return float(lp.sum())


def mst_loglik(params: MSTParams, y, X=None) -> float:
    Y = np.atleast_2d(np.asarray(y, float))
    lp = np.atleast_1d(mst_logpdf(Y, params, X))
    bad = np.flatnonzero(~np.isfinite(lp))
    if bad.size:
        raise NumericalError(f"non-finite log density at observation {int(bad[0])}")
    return float(lp.sum())


def loglik(params, y, X=None) -> float:
    if isinstance(params, MSTParams):
        return mst_loglik(params, y, X)
    return st_loglik(params, y, X)


def penalized_loglik(params, y, X=None) -> float:
    return loglik(params, y, X) - penalty(params)


# ---------------------------------------------------------------- cumulants


def _sample_shape(r):
    r = r - r.mean()
    m2 = float(np.mean(r**2))
    g1 = float(np.mean(r**3)) / m2**1.5
    g2 = float(np.mean(r**4)) / m2**2 - 3.0
    return m2, g1, g2


def _invert_cumulants(g1: float, g2: float):
    """(delta, nu) with theoretical skewness/kurtosis (g1, g2), or None."""

    def unpack(v):
        return math.tanh(v[0]), 4.0 + math.exp(min(v[1], 700.0))

    def loss(v):
        delta, nu = unpack(v)
        if not (abs(delta) < 1 and math.isfinite(nu)):
            return _BAD
        m = st_moments(STParams(0.0, 1.0, float(lambda_of_delta(delta)), nu))
        return (m.gamma1 - g1) ** 2 + (m.gamma2 - g2) ** 2

    best = None
    for d0 in (-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9):
        for n0 in (4.5, 6.0, 10.0, 30.0):
            v = (math.atanh(d0), math.log(n0 - 4.0))
            f = loss(v)
            if best is None or f < best[0]:
                best = (f, v)
    res = optimize.minimize(
        loss, best[1], method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000},
    )
    delta, nu = unpack(res.x)
    if math.sqrt(max(res.fun, 0.0)) > 1e-3 or not (4.0 < nu < 1000.0) or abs(delta) > 0.999:
        return None
    return delta, nu


def cumulant_start(y, X=None) -> PreliminaryEstimate:
    """
    Least-squares and cumulant-based start (method M0).

    Residual skewness and kurtosis are matched to the skew-t expressions
    over ``nu > 4``; if no interior match exists the slant is set to 0 and
    ``nu`` to 10, keeping the least-squares coefficients and residual scale.
    """
    y, X = _design(np.asarray(y, float).ravel(), X)
    n, p = X.shape
    if n <= p:
        raise DomainError("need n > p")
    j0 = intercept_column(X)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ beta
    m2, g1, g2 = _sample_shape(r)
    sol = _invert_cumulants(g1, g2) if m2 > 0 else None
    if sol is None:
        s = math.sqrt(float(r @ r) / max(n - p, 1))
        params = STRegParams(beta, s, 0.0, FALLBACK_NU)
        return PreliminaryEstimate(params, "M0", info={"cumulant_inversion": False})
    delta, nu = sol
    bd = b_nu(nu) * delta
    omega = math.sqrt(m2 / (nu / (nu - 2.0) - bd * bd))
    beta = beta.copy()
    beta[j0] += (r.mean() - omega * bd) / X[0, j0]
    params = STRegParams(beta, omega, float(lambda_of_delta(delta)), nu)
    return PreliminaryEstimate(params, "M0", info={"cumulant_inversion": True})


def mcumulant_start(y, X=None) -> PreliminaryEstimate:
    """
    Multivariate analogue of :func:`cumulant_start`.

    Column-wise cumulant inversion gives ``delta_j`` and ``nu_j``; with the
    median ``nu`` the residual covariance is converted to ``Omega``.  Any
    failure falls back to ``Omega`` = residual covariance, ``alpha = 0``,
    ``nu = 10``.
    """
    Y = np.asarray(y, float)
    n, d = Y.shape
    _, X = _design(Y, X)
    beta = np.linalg.lstsq(X, Y, rcond=None)[0]
    R = Y - X @ beta
    S = R.T @ R / max(n - X.shape[1], 1)
    sols = [_invert_cumulants(*_sample_shape(R[:, j])[1:]) for j in range(d)]
    if all(s is not None for s in sols):
        nu = float(np.median([s[1] for s in sols]))
        delta = np.array([s[0] for s in sols])
        b = b_nu(nu)
        sd = np.sqrt(np.diag(S))
        # first pass: omega from marginal variances at the pooled nu
        omega = sd / np.sqrt(nu / (nu - 2.0) - (b * delta) ** 2)
        Omega = (nu - 2.0) / nu * (S + b * b * np.outer(omega * delta, omega * delta))
        try:
            omega, Obar = scale_split(Omega)
            Obar, delta, _ = feasibility_adjust(Obar, np.clip(delta, -0.999, 0.999))
            alpha = delta_to_alpha(Obar, delta)
            Omega = Obar * np.outer(omega, omega)
            j0 = intercept_column(X)
            beta = beta.copy()
            beta[j0] += (R.mean(axis=0) - omega * b * delta) / X[0, j0]
            return PreliminaryEstimate(
                MSTParams(beta, Omega, alpha, nu), "M0", info={"cumulant_inversion": True}
            )
        except (DomainError, NumericalError, np.linalg.LinAlgError):
            pass
    params = MSTParams(beta, S, np.zeros(d), FALLBACK_NU)
    return PreliminaryEstimate(params, "M0", info={"cumulant_inversion": False})


# ---------------------------------------------------------------- packing


def _nu_to_w(nu):
    return math.log(min(nu, NU_MAX) - NU0)


def _w_to_nu(w):
    return NU0 + math.exp(w)


class _UniModel:
    def __init__(self, y, X):
        self.y, self.X = y, X
        self.p = X.shape[1]

    def pack(self, params: STRegParams):
        return np.r_[params.beta, math.log(params.omega), params.lam, _nu_to_w(params.nu)]

    def unpack(self, v):
        p = self.p
        return STRegParams(v[:p].copy(), math.exp(v[p]), float(v[p + 1]), _w_to_nu(v[p + 2]))

    def bounds(self):
        return [(None, None)] * (self.p + 2) + [(None, math.log(NU_MAX - NU0))]


class _MultiModel:
    def __init__(self, y, X):
        self.y, self.X = y, X
        self.p = X.shape[1]
        self.d = y.shape[1]
        self.tril = np.tril_indices(self.d, -1)

    def pack(self, params: MSTParams):
        L = np.linalg.cholesky(params.Omega)
        return np.r_[
            params.beta.ravel(),
            np.log(np.diag(L)),
            L[self.tril],
            params.alpha,
            _nu_to_w(params.nu),
        ]

    def unpack(self, v):
        p, d = self.p, self.d
        k = p * d
        beta = v[:k].reshape(p, d)
        L = np.diag(np.exp(v[k : k + d]))
        m = d * (d - 1) // 2
        L[self.tril] = v[k + d : k + d + m]
        alpha = v[k + d + m : k + d + m + d]
        Omega = L @ L.T
        Omega = 0.5 * (Omega + Omega.T)
        return MSTParams(beta.copy(), Omega, alpha.copy(), _w_to_nu(v[-1]))

    def bounds(self):
        n = self.p * self.d + self.d + self.d * (self.d - 1) // 2 + self.d
        return [(None, None)] * n + [(None, math.log(NU_MAX - NU0))]


def _objective(model, penalized):
    def f(v):
        try:
            params = model.unpack(v)
            val = loglik(params, model.y, model.X)
            if penalized:
                val -= penalty(params)
        except (DomainError, NumericalError, np.linalg.LinAlgError, OverflowError, ValueError):
            return _BAD
        return -val if math.isfinite(val) else _BAD

    return f


def _fd_grad(f, v, h=1e-6):
    g = np.empty_like(v)
    for i in range(v.size):
        step = h * (1.0 + abs(v[i]))
        e = np.zeros_like(v)
        e[i] = step
        g[i] = (f(v + e) - f(v - e)) / (2.0 * step)
    return g


def _projected(g, v, bounds):
    g = g.copy()
    for i, (lo, hi) in enumerate(bounds):
        if hi is not None and v[i] >= hi - 1e-12 and g[i] < 0:
            g[i] = 0.0
        if lo is not None and v[i] <= lo + 1e-12 and g[i] > 0:
            g[i] = 0.0
    return g


_TAGS = {"M1": "M2", "M3": "M3", "M0": "M0"}


def _minimize(f, v0, bounds, max_iter, tol_factor=1e-5, restarts=3):
    """L-BFGS-B with finite-difference gradients; returns best point seen."""
    best = {"v": np.array(v0, float), "f": f(np.array(v0, float))}

    def tracked(v):
        val = f(v)
        if val < best["f"]:
            best["v"], best["f"] = np.array(v, float), val
        return val

    def fg(v):
        g = _fd_grad(tracked, v)
        return tracked(v), g

    iters = 0
    v = best["v"]
    message = ""
    for _ in range(restarts + 1):
        remaining = max_iter - iters
        if remaining <= 0:
            break
        res = optimize.minimize(
            fg, v, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": remaining, "ftol": 1e-15, "gtol": 1e-9, "maxls": 40},
        )
        iters += int(res.nit)
        message = str(res.message)
        v = best["v"]
        g = _projected(_fd_grad(f, v), v, bounds)
        gnorm = float(np.linalg.norm(g))
        if best["f"] >= _BAD:
            break
        if gnorm <= tol_factor * (1.0 + abs(best["f"])):
            return v, best["f"], iters, True, gnorm, message
        if res.nit == 0:
            break
    g = _projected(_fd_grad(f, best["v"]), best["v"], bounds)
    return best["v"], best["f"], iters, False, float(np.linalg.norm(g)), message


def maximize(
    start: PreliminaryEstimate,
    y,
    X=None,
    penalized: bool = True,
    max_iter: int = 500,
) -> FitResult:
    """
    Local maximizer of the (penalized) log-likelihood from ``start``.

    ``converged`` means the projected gradient norm in the working
    parameterization is below ``1e-5 (1 + |loglik|)``.  The returned point
    is the best seen, converged or not.
    """
    t0 = time.perf_counter()
    y = np.asarray(y, float)
    if isinstance(start.params, MSTParams):
        Y = y if y.ndim == 2 else y[:, None]
        _, Xd = _design(Y, X)
        model = _MultiModel(Y, Xd)
    else:
        yv, Xd = _design(y.ravel(), X)
        model = _UniModel(yv, Xd)
    f = _objective(model, penalized)
    v0 = model.pack(start.params)
    bounds = model.bounds()
    v0[-1] = min(v0[-1], bounds[-1][1])
    v, fval, iters, conv, gnorm, msg = _minimize(f, v0, bounds, max_iter)
    if fval >= _BAD:
        raise NumericalError("log-likelihood is not finite at the starting point")
    params = model.unpack(v)
    ll = loglik(params, model.y, model.X)
    return FitResult(
        params=params,
        loglik=ll,
        penalized_loglik=ll - penalty(params),
        start=start,
        method_tag=_TAGS.get(start.method, start.method),
        converged=conv,
        iterations=iters,
        elapsed=time.perf_counter() - t0,
        grad_norm=gnorm,
        nu_at_bound=v[-1] >= bounds[-1][1] - 1e-9,
        message=msg,
    )


def start_for(method: str, y, X=None) -> PreliminaryEstimate:
    """Starting point for methods M0, M1/M2 or M3, uni- or multivariate."""
    y = np.asarray(y, float)
    multi = y.ndim == 2 and y.shape[1] > 1
    method = method.upper()
    if method == "M0":
        return mcumulant_start(y, X) if multi else cumulant_start(y.ravel(), X)
    pre = {"M1": "M1", "M2": "M1", "M3": "M3"}.get(method)
    if pre is None:
        raise DomainError(f"unknown method {method!r}")
    if multi:
        return init_multivariate(y, X, method=pre)
    return init_regression(y.ravel(), X, method=pre)


def fit(y, X=None, method: str = "M2", penalized: bool = True, max_iter: int = 500) -> FitResult:
    """Initialize with ``method`` and maximize; ``elapsed`` includes initialization."""
    t0 = time.perf_counter()
    start = start_for(method, y, X)
    res = maximize(start, y, X, penalized=penalized, max_iter=max_iter)
    res.elapsed = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------- deviance


@dataclass
class DevianceGrid:
    """``deviance[i, j]`` is D at ``(lambdas[i], nus[j])``; NaN marks failed cells."""

    lambdas: np.ndarray
    nus: np.ndarray
    deviance: np.ndarray
    profile: np.ndarray
    reference: float
    fit: FitResult
    penalized: bool = True


def _profile_cell(y, X, lam, nu, v0, penalized):
    p = X.shape[1]

    def f(v):
        try:
            params = STRegParams(v[:p], math.exp(v[p]), lam, nu)
            val = st_loglik(params, y, X)
        except (DomainError, NumericalError, OverflowError):
            return _BAD
        return -val if math.isfinite(val) else _BAD

    bounds = [(None, None)] * (p + 1)
    v, fval, _, _, _, _ = _minimize(f, v0, bounds, max_iter=300, restarts=1)
    if fval >= _BAD:
        return None, v0
    pen = PENALTY_C1 * math.log1p(PENALTY_C2 * lam * lam) if penalized else 0.0
    return -fval - pen, v


def deviance_grid(
    y,
    X=None,
    lambda_grid: Optional[Sequence[float]] = None,
    nu_grid: Optional[Sequence[float]] = None,
    penalized: bool = True,
    global_fit: Optional[FitResult] = None,
) -> DevianceGrid:
    """
    Profile deviance ``D = 2 (max - profile(lam, nu))`` over a grid.

    Location and scale are maximized out in each cell, warm-started from
    the previous cell in row-major order.  The reference maximum is the
    larger of the global fit and the best cell, so that ``D >= 0``.
    """
    y, X = _design(np.asarray(y, float).ravel(), X)
    if global_fit is None:
        fits = [fit(y, X, m, penalized=penalized) for m in ("M2", "M3")]
        global_fit = max(fits, key=lambda r: r.penalized_loglik if penalized else r.loglik)
    if lambda_grid is None or nu_grid is None:
        raise DomainError("both grids are required")
    lams = np.asarray(lambda_grid, float)
    nus = np.asarray(nu_grid, float)
    if lams.size == 0 or nus.size == 0:
        raise DomainError("grids must be nonempty")
    prof = np.full((lams.size, nus.size), np.nan)
    gp = global_fit.params
    seed_v = np.r_[gp.beta, math.log(gp.omega)]
    v_prev = seed_v
    for i, lam in enumerate(lams):
        v_row = None
        for j, nu in enumerate(nus):
            val, v = _profile_cell(y, X, float(lam), float(nu), v_prev, penalized)
            if val is None:
                val2, v2 = _profile_cell(y, X, float(lam), float(nu), seed_v, penalized)
                val, v = val2, v2
            if val is not None:
                prof[i, j] = val
                v_prev = v
                if v_row is None:
                    v_row = v
        if v_row is not None:
            v_prev = v_row
    g_val = global_fit.penalized_loglik if penalized else global_fit.loglik
    ref = max(g_val, np.nanmax(prof)) if np.any(np.isfinite(prof)) else g_val
    D = 2.0 * (ref - prof)
    return DevianceGrid(lams, nus, D, prof, float(ref), global_fit, penalized)
