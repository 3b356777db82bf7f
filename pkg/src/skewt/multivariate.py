"""
The multivariate skew-t ST_d(xi, Omega, alpha, nu) and its quantile-based
initialization.

Column-wise univariate fits provide location, scale, slant and tail weight;
pairwise correlations come from matching the median of products of
normalized residuals to the distribution of the product of a bivariate t
pair, whose law does not depend on the slant.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy import special as sc

from .errors import DomainError, NumericalError
from .inversion import PreliminaryEstimate, init_regression
from .special import log_gamma_ratio, t_logcdf
from .univariate import delta_of_lambda

__all__ = [
    "MSTParams",
    "ColumnFits",
    "scale_split",
    "mst_logpdf",
    "mst_pdf",
    "mst_sample",
    "product_cdf_W",
    "solve_rho",
    "feasibility_adjust",
    "delta_to_alpha",
    "alpha_to_delta",
    "column_fits",
    "init_multivariate",
]

RHO_EDGE = 1e-6
SHRINK = 0.95
PD_EPS = 1e-10


@dataclass(frozen=True)
class MSTParams:
    """
    ``y_i ~ ST_d(x_i' beta, Omega, alpha, nu)`` with ``beta`` of shape (p, d).

    ``alpha`` acts on the standardized vector ``omega^{-1}(y - xi)``.
    """

    beta: np.ndarray
    Omega: np.ndarray
    alpha: np.ndarray
    nu: float

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, float))
        Omega = np.atleast_2d(np.asarray(self.Omega, float))
        alpha = np.atleast_1d(np.asarray(self.alpha, float))
        d = Omega.shape[0]
        if Omega.shape != (d, d) or beta.shape[1] != d or alpha.shape != (d,):
            raise DomainError("inconsistent MSTParams dimensions")
        if not np.allclose(Omega, Omega.T, rtol=1e-10, atol=1e-12):
            raise DomainError("Omega must be symmetric")
        try:
            np.linalg.cholesky(Omega)
        except np.linalg.LinAlgError:
            raise DomainError("Omega must be positive definite") from None
        if not self.nu > 0:
            raise DomainError("nu must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        return self.Omega.shape[0]

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(np.diag(self.Omega))

    @property
    def Omega_bar(self) -> np.ndarray:
        return scale_split(self.Omega)[1]

    @property
    def delta(self) -> np.ndarray:
        return alpha_to_delta(self.Omega_bar, self.alpha)

    def as_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "Omega": self.Omega.tolist(),
            "alpha": self.alpha.tolist(),
            "nu": float(self.nu),
        }


@dataclass(frozen=True)
class ColumnFits:
    """Per-column univariate estimates and the normalized residuals ``z``."""

    estimates: List[PreliminaryEstimate]
    z: np.ndarray


def scale_split(Omega) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(omega, Omega_bar)`` with ``Omega = diag(omega) Omega_bar diag(omega)``."""
    Omega = np.asarray(Omega, float)
    omega = np.sqrt(np.diag(Omega))
    return omega, Omega / np.outer(omega, omega)


def _log_t_cdf(x, nu):
    return np.asarray(t_logcdf(x, nu))


def mst_logpdf(y, p: MSTParams, X=None) -> np.ndarray:
    """
    Log density of each row of ``y`` (shape (n, d), or a single d-vector).

    ``X`` is the (n, p) design; if omitted the first row of ``beta`` is the
    common location.
    """
    y = np.asarray(y, float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    d = p.d
    if Y.shape[1] != d:
        raise DomainError("observation dimension does not match parameters")
    xi = p.beta[0] if X is None else np.asarray(X, float) @ p.beta
    omega, Obar = scale_split(p.Omega)
    z = (Y - xi) / omega
    L = np.linalg.cholesky(Obar)
    sol = np.linalg.solve(L, z.T)
    Q = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    nu = p.nu
    az = z @ p.alpha
    if math.isinf(nu):
        log_td = -0.5 * d * math.log(2 * math.pi) - 0.5 * logdet - 0.5 * Q
        arg = az
    else:
        log_td = (
            log_gamma_ratio(0.5 * nu, d)
            - 0.5 * d * math.log(nu * math.pi)
            - 0.5 * logdet
            - 0.5 * (nu + d) * np.log1p(Q / nu)
        )
        arg = az * np.sqrt((nu + d) / (nu + Q))
    out = math.log(2.0) + log_td + _log_t_cdf(arg, nu + d) - np.sum(np.log(omega))
    return float(out[0]) if single else out


def mst_pdf(y, p: MSTParams, X=None):
    out = np.exp(mst_logpdf(y, p, X))
    return float(out) if np.ndim(out) == 0 else out


def alpha_to_delta(Omega_bar, alpha) -> np.ndarray:
    """``delta = Omega_bar alpha / sqrt(1 + alpha' Omega_bar alpha)``."""
    Obar = np.asarray(Omega_bar, float)
    alpha = np.asarray(alpha, float)
    oa = Obar @ alpha
    return oa / math.sqrt(1.0 + float(alpha @ oa))


def delta_to_alpha(Omega_bar, delta) -> np.ndarray:
    """``alpha = (1 - delta' Omega_bar^{-1} delta)^{-1/2} Omega_bar^{-1} delta``."""
    Obar = np.asarray(Omega_bar, float)
    delta = np.asarray(delta, float)
    sol = np.linalg.solve(Obar, delta)
    q = float(delta @ sol)
    if not q < 1.0:
        raise DomainError("delta' Omega_bar^{-1} delta must be below 1")
    return sol / math.sqrt(1.0 - q)


def mst_sample(n: int, p: MSTParams, seed=None, X=None) -> np.ndarray:
    """
    Draw ``n`` rows from ST_d.

    A skew-normal vector is obtained by conditioning on the sign of the
    first coordinate of an (d+1)-variate normal with correlation
    ``[[1, delta'], [delta, Omega_bar]]``, then divided by ``sqrt(chi2_nu/nu)``.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = p.d
    omega, Obar = scale_split(p.Omega)
    delta = alpha_to_delta(Obar, p.alpha)
    star = np.empty((d + 1, d + 1))
    star[0, 0] = 1.0
    star[0, 1:] = star[1:, 0] = delta
    star[1:, 1:] = Obar
    L = np.linalg.cholesky(star)
    u = rng.standard_normal((n, d + 1)) @ L.T
    x = np.where(u[:, :1] > 0, u[:, 1:], -u[:, 1:])
    if not math.isinf(p.nu):
        x = x / np.sqrt(rng.chisquare(p.nu, n) / p.nu)[:, None]
    xi = p.beta[0] if X is None else np.asarray(X, float) @ p.beta
    return xi + x * omega


def product_cdf_W(w: float, rho: float, nu: float) -> float:
    """
    ``P(Z1 Z2 <= w)`` for a bivariate Student t pair with correlation ``rho``.

    Conditions on ``Z1``: given ``Z1 = z``, ``Z2`` is ``rho z`` plus a
    scaled t on ``nu + 1`` degrees of freedom.  The outer integral runs in
    probability space ``s = T(z; nu)`` and is split at ``z = 0``.
    """
    if not abs(rho) < 1:
        raise DomainError("|rho| must be below 1")
    if not nu > 0:
        raise DomainError("nu must be positive")
    w = float(w)
    inf = math.isinf(nu)
    c = math.sqrt(1.0 - rho * rho)

    def inner(z):
        # P(Z1 Z2 <= w | Z1 = z)
        if inf:
            scale = c
            cdf = sc.ndtr
        else:
            scale = c * math.sqrt((nu + z * z) / (nu + 1.0))
            cdf = lambda v: sc.stdtr(nu + 1.0, v)
        if z > 0:
            return cdf((w / z - rho * z) / scale)
        return cdf(-(w / z - rho * z) / scale)

    if inf:
        quant = sc.ndtri
    else:
        quant = lambda s: sc.stdtrit(nu, s)

    def integrand(s):
        z = quant(s)
        if z == 0.0:
            return 1.0 if w > 0 else (0.0 if w < 0 else 0.5)
        return inner(z)

    total = 0.0
    for a, b in ((0.0, 0.5), (0.5, 1.0)):
        val, err = integrate.quad(integrand, a, b, epsabs=1e-11, epsrel=1e-10, limit=200)
        if not math.isfinite(val) or err > 1e-8:
            raise NumericalError(f"product CDF quadrature failed (err={err:g})")
        total += val
    return min(max(total, 0.0), 1.0)


def solve_rho(m_w: float, nu: float) -> Tuple[float, bool]:
    """
    Correlation whose product distribution has median ``m_w``.

    Returns ``(rho, at_boundary)``; when no root lies inside
    ``(-1 + 1e-6, 1 - 1e-6)`` the nearer boundary is returned with the flag set.
    """
    lo, hi = -1.0 + RHO_EDGE, 1.0 - RHO_EDGE
    f = lambda r: product_cdf_W(m_w, r, nu) - 0.5
    if m_w == 0.0:
        return 0.0, False
    if m_w < 0:
        r, edge = solve_rho(-m_w, nu)
        return -r, edge
    flo, fhi = f(lo), f(hi)
    # F_W decreases in rho
    if flo < 0:
        return lo, True
    if fhi > 0:
        return hi, True
    r = optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12)
    return float(r), False


def feasibility_adjust(Omega_bar, delta, max_steps: int = 10_000):
    """
    Shrink the off-diagonal entries of ``[[Omega_bar, delta], [delta', 1]]``
    (both the correlations and ``delta``) by 0.95 per pass until it is
    positive definite.  Returns ``(Omega_bar, delta, k)``.
    """
    Obar = np.array(Omega_bar, float)
    delta = np.array(delta, float)
    d = delta.size
    star = np.empty((d + 1, d + 1))
    star[:d, :d] = Obar
    star[:d, d] = star[d, :d] = delta
    star[d, d] = 1.0
    diag = np.diag(np.diag(star))
    off = star - diag
    for k in range(max_steps):
        cur = diag + SHRINK**k * off
        if np.linalg.eigvalsh(cur).min() > PD_EPS:
            return cur[:d, :d].copy(), cur[:d, d].copy(), k
    raise NumericalError("feasibility shrinkage did not terminate")


def column_fits(y, X=None, method: str = "M1") -> ColumnFits:
    """Univariate regression initialization applied to every column of ``y``."""
    Y = np.asarray(y, float)
    n, d = Y.shape
    X = np.ones((n, 1)) if X is None else np.asarray(X, float)
    ests = [init_regression(Y[:, j], X, method=method) for j in range(d)]
    z = np.column_stack(
        [(Y[:, j] - X @ e.params.beta) / e.params.omega for j, e in enumerate(ests)]
    )
    return ColumnFits(ests, z)


def init_multivariate(y, X=None, method: str = "M1") -> PreliminaryEstimate:
    """
    Quantile-based preliminary estimate of (beta, Omega, alpha, nu).

    ``method="M3"`` keeps location and scale from the column fits but sets
    ``alpha = 0`` and ``nu = 10``; the correlations are still estimated.
    """
    Y = np.asarray(y, float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, d = Y.shape
    X = np.ones((n, 1)) if X is None else np.asarray(X, float)
    if X.shape[0] != n or n <= max(X.shape[1], d):
        raise DomainError("need n > max(p, d) and matching rows")
    cols = column_fits(Y, X, method=method)
    nu = float(np.median([e.params.nu for e in cols.estimates]))
    omega = np.array([e.params.omega for e in cols.estimates])
    beta = np.column_stack([e.params.beta for e in cols.estimates])
    Obar = np.eye(d)
    edges = []
    for j in range(d):
        for k in range(j + 1, d):
            m_w = float(np.median(cols.z[:, j] * cols.z[:, k]))
            r, edge = solve_rho(m_w, nu)
            Obar[j, k] = Obar[k, j] = r
            if edge:
                edges.append((j, k))
    delta = np.array([delta_of_lambda(e.params.lam) for e in cols.estimates])
    if method == "M3":
        delta[:] = 0.0
    Obar, delta, shrinks = feasibility_adjust(Obar, delta)
    alpha = delta_to_alpha(Obar, delta)
    Omega = Obar * np.outer(omega, omega)
    info = {"shrink_steps": shrinks, "rho_at_boundary": edges}
    params = MSTParams(beta, Omega, alpha, nu)
    return PreliminaryEstimate(
        params,
        method,
        any(e.clamped_M for e in cols.estimates),
        any(e.clamped_G for e in cols.estimates),
        info,
    )
