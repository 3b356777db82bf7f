"""
Inversion of quantile measures (q2, dq, G, M) to skew-t parameters.

Tail weight comes from a monotone cubic interpolant of ``1/nu`` against the
Moors measure at zero slant; slant then comes from the log-polynomial
``log lam = eta1 u + eta2 u^3 + eta3 u^-3`` with ``u = log G`` and
coefficients interpolated linearly in ``nu``.  Scale and location follow from
the sample quartiles and the quartiles of the fitted standard skew-t.
"""

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.interpolate import PchipInterpolator

from . import special
from .errors import DomainError
from .lad import lad_fit
from .quantiles import QuantileSummary, st_theoretical_measures, summarize
from .univariate import (
    STParams,
    STRegParams,
    delta_of_lambda,
    lambda_of_delta,
    st_quantile,
)

__all__ = [
    "INVERSION_TABLE",
    "DELTA_GRID",
    "NU_GRID",
    "NU_MIN",
    "NU_CAP",
    "M3_NU",
    "G_CLAMP",
    "LAMBDA_CAP",
    "PreliminaryEstimate",
    "table_csv",
    "nu_from_moors",
    "eta_coefficients",
    "lambda_from_gb",
    "invert_measures",
    "m3_start",
    "intercept_column",
    "init_regression",
]

# (nu*, M at delta=0, eta1, eta2, eta3); the last row has no coefficients.
INVERSION_TABLE = (
    (0.30, 9.946, 2.213831, -0.315418, -0.007641),
    (0.32, 8.588, 2.022665, -0.240821, -0.012001),
    (0.35, 7.110, 1.790767, -0.164193, -0.021492),
    (0.40, 5.525, 1.506418, -0.090251, -0.047034),
    (0.45, 4.543, 1.305070, -0.050702, -0.087117),
    (0.50, 3.888, 1.156260, -0.028013, -0.143526),
    (0.60, 3.088, 0.952435, -0.005513, -0.307509),
    (0.70, 2.630, 0.819371, 0.004209, -0.536039),
    (0.80, 2.339, 0.724816, 0.008992, -0.818739),
    (0.90, 2.142, 0.653206, 0.011596, -1.142667),
    (1.00, 2.000, 0.596276, 0.013136, -1.495125),
    (1.50, 1.652, 0.417375, 0.015798, -3.365100),
    (2.00, 1.517, 0.314104, 0.016371, -5.011929),
    (3.00, 1.403, 0.192531, 0.016274, -7.304089),
    (4.00, 1.354, 0.123531, 0.015682, -8.676470),
    (5.00, 1.327, 0.080123, 0.014987, -9.546498),
    (7.00, 1.298, 0.030605, 0.013674, -10.561206),
    (10.00, 1.277, -0.003627, 0.012113, -11.335506),
    (15.00, 1.262, -0.024611, 0.010334, -11.977601),
    (20.00, 1.254, -0.030903, 0.009149, -12.343369),
    (30.00, 1.247, -0.031385, 0.007650, -12.789281),
    (40.00, 1.244, -0.027677, 0.006721, -13.074983),
    (50.00, 1.241, -0.023285, 0.006079, -13.284029),
    (100.00, 1.237, -0.005288, 0.004478, -13.874691),
    (math.inf, 1.233, None, None, None),
)

DELTA_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0)
NU_GRID = tuple(row[0] for row in INVERSION_TABLE)

NU_MIN = 0.30
NU_CAP = 100.0  # finite stand-in for nu = inf in starting values
M3_NU = 10.0
G_CLAMP = 0.99
# Beyond this slant the octiles barely move, while the likelihood surface
# becomes flat in lambda and a maximizer started there tends to stall.
LAMBDA_CAP = 20.0

_FINITE = [row for row in INVERSION_TABLE if row[2] is not None]
_ETA_NU = np.array([row[0] for row in _FINITE])
_ETA = np.array([row[2:] for row in _FINITE])
_M_MIN = INVERSION_TABLE[-1][1]
_M_MAX = INVERSION_TABLE[0][1]


_DECIMALS = (2, 3, 6, 6, 6)


def table_csv() -> str:
    """The embedded coefficient table as CSV text, at its published precision."""
    buf = io.StringIO()
    buf.write("nu,M0,eta1,eta2,eta3\n")
    for row in INVERSION_TABLE:
        cells = []
        for v, dec in zip(row, _DECIMALS):
            if v is None:
                cells.append("")
            elif math.isinf(v):
                cells.append("Inf")
            else:
                cells.append(f"{v:.{dec}f}")
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


# knots ordered by increasing M; 1/nu runs from 0 (nu = inf) upward
_RECIP_NU_SPLINE = PchipInterpolator(
    [row[1] for row in reversed(INVERSION_TABLE)],
    [0.0 if math.isinf(row[0]) else 1.0 / row[0] for row in reversed(INVERSION_TABLE)],
)


@dataclass(frozen=True)
class PreliminaryEstimate:
    """A starting point for likelihood maximization, with its provenance."""

    params: object  # STRegParams or MSTParams
    method: str
    clamped_M: bool = False
    clamped_G: bool = False
    info: dict = field(default_factory=dict, compare=False)


def nu_from_moors(M: float) -> float:
    """
    Degrees of freedom from the Moors measure, via the ``1/nu`` spline.

    Values above the largest knot give ``NU_MIN``; the result is capped at
    ``NU_CAP`` (which also covers M below the normal value 1.233).
    """
    if not M > 0:
        raise DomainError("the Moors measure must be positive")
    if M >= _M_MAX:
        return NU_MIN
    if M <= _M_MIN:
        return NU_CAP
    r = float(_RECIP_NU_SPLINE(M))
    if not r > 1.0 / NU_CAP:
        return NU_CAP
    return min(1.0 / r, NU_CAP)


def eta_coefficients(nu: float) -> np.ndarray:
    """(eta1, eta2, eta3), linear in ``nu`` between rows; clamped outside [0.30, 100]."""
    if not nu > 0:
        raise DomainError("nu must be positive")
    v = min(max(nu, _ETA_NU[0]), _ETA_NU[-1])
    return np.array([np.interp(v, _ETA_NU, _ETA[:, j]) for j in range(3)])


def lambda_from_gb(G: float, nu: float) -> float:
    """
    Slant from the Galton-Bowley measure at a given ``nu``.

    Works on ``|G|`` (clamped to 0.99) and restores the sign at the end.
    """
    g = min(abs(G), G_CLAMP)
    if g == 0.0:
        return 0.0
    eta1, eta2, eta3 = eta_coefficients(nu)
    u = math.log(g)
    log_lam = eta1 * u + eta2 * u**3 + eta3 / u**3
    # math.exp overflows past ~709; such slants are numerically infinite anyway
    lam = math.exp(min(log_lam, 700.0))
    return math.copysign(lam, G)


def _refine(G: float, M: float, lam: float, nu: float) -> Tuple[float, float]:
    # least-squares match of the theoretical (G, M) over (delta, log nu)
    g = abs(G)

    def loss(v):
        delta, lognu = v
        Gt, Mt = st_theoretical_measures(float(lambda_of_delta(delta)), math.exp(lognu))
        return (Gt - g) ** 2 + (Mt - M) ** 2

    x0 = [min(abs(delta_of_lambda(lam)), 0.99), math.log(nu)]
    res = optimize.minimize(
        loss,
        x0,
        method="Nelder-Mead",
        bounds=[(0.0, 0.995), (math.log(NU_MIN), math.log(NU_CAP))],
        options={"xatol": 1e-4, "fatol": 1e-10, "maxiter": 400},
    )
    if res.fun >= loss(x0):
        return lam, nu
    d, lognu = res.x
    return math.copysign(float(lambda_of_delta(d)), G), math.exp(lognu)


def _location_scale(q: QuantileSummary, lam: float, nu: float) -> Tuple[float, float]:
    q1s, q2s, q3s = st_quantile([0.25, 0.5, 0.75], STParams(0.0, 1.0, lam, nu))
    omega = (q.q3 - q.q1) / (q3s - q1s)
    xi = q.q2 - omega * q2s
    return xi, omega


def invert_measures(q: QuantileSummary, refine: bool = False) -> PreliminaryEstimate:
    """
    Quantile-based preliminary estimate (method M1) from sample measures.

    ``refine`` adds a numerical search matching the theoretical (G, M) to
    the sample values; off by default.
    """
    nu = nu_from_moors(q.M)
    lam = lambda_from_gb(q.G, nu)
    clamped_M = not (_M_MIN < q.M < _M_MAX)
    clamped_G = abs(q.G) > G_CLAMP
    if refine:
        lam, nu = _refine(q.G, q.M, lam, nu)
    info = {}
    if abs(lam) > LAMBDA_CAP:
        info["lambda_uncapped"] = lam
        lam = math.copysign(LAMBDA_CAP, lam)
    xi, omega = _location_scale(q, lam, nu)
    params = STRegParams(np.array([xi]), omega, lam, nu)
    return PreliminaryEstimate(params, "M1", clamped_M, clamped_G, info)


def m3_start(q: QuantileSummary) -> PreliminaryEstimate:
    """Simplified start (method M3): slant 0, ``nu = 10``, median and quartile deviation."""
    q3t = float(special.t_quantile(0.75, M3_NU))
    params = STRegParams(np.array([q.q2]), q.dq / q3t, 0.0, M3_NU)
    return PreliminaryEstimate(params, "M3")


def intercept_column(X: np.ndarray) -> int:
    """Index of the first constant non-zero column of ``X``."""
    X = np.asarray(X, float)
    for j in range(X.shape[1]):
        col = X[:, j]
        if col[0] != 0 and np.all(col == col[0]):
            return j
    raise DomainError("the design matrix must include a constant column")


def init_regression(y, X=None, method: str = "M1", refine: bool = False) -> PreliminaryEstimate:
    """
    Preliminary estimate for ``y_i ~ ST(x_i' beta, omega^2, lam, nu)``.

    Median regression gives ``beta``; the residual measures are inverted
    and the intercept absorbs the residual location estimate.  With only a
    constant column this is exactly :func:`invert_measures` (or
    :func:`m3_start`) on ``y``.
    """
    y = np.asarray(y, float).ravel()
    if X is None:
        X = np.ones((y.size, 1))
    X = np.asarray(X, float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DomainError("X must be an n x p matrix matching y")
    j0 = intercept_column(X)
    if X.shape[1] == 1:
        beta_m = np.zeros(1)
        resid = y
    else:
        fit = lad_fit(y, X)
        beta_m, resid = fit.beta.copy(), fit.residuals
    q = summarize(resid)
    if method == "M1":
        est = invert_measures(q, refine=refine)
    elif method == "M3":
        est = m3_start(q)
    else:
        raise DomainError(f"unknown preliminary method {method!r}")
    r = est.params
    beta = beta_m.copy()
    beta[j0] += r.beta[0] / X[0, j0]
    params = STRegParams(beta, r.omega, r.lam, r.nu)
    return PreliminaryEstimate(params, est.method, est.clamped_M, est.clamped_G, dict(est.info))
