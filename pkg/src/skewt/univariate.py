"""
The univariate skew-t distribution ST(xi, omega^2, lambda, nu).

The standard density is ``2 t(z; nu) T(lambda z sqrt((nu+1)/(nu+z^2)); nu+1)``.
``nu = inf`` gives the skew-normal and ``lambda = +-inf`` the half-t
(equivalently the square root of an F(1, nu) variate, reflected for negative
slant).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate, optimize
from scipy import special as sc

from . import special
from .errors import DomainError, NumericalError

__all__ = [
    "STParams",
    "STRegParams",
    "STMoments",
    "delta_of_lambda",
    "lambda_of_delta",
    "b_nu",
    "st_pdf",
    "st_logpdf",
    "st_cdf",
    "st_quantile",
    "st_moments",
    "st_sample",
]

_CDF_EPSABS = 1e-13
_QUANTILE_PTOL = 1e-8


@dataclass(frozen=True)
class STParams:
    """Parameters of ST(xi, omega^2, lam, nu); ``nu`` and ``lam`` may be infinite."""

    xi: float = 0.0
    omega: float = 1.0
    lam: float = 0.0
    nu: float = math.inf

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega!r}")
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu!r}")
        if math.isnan(self.lam) or math.isnan(self.xi):
            raise DomainError("xi and lam must not be NaN")

    @property
    def delta(self) -> float:
        return delta_of_lambda(self.lam)

    def standard(self) -> "STParams":
        return STParams(0.0, 1.0, self.lam, self.nu)


@dataclass(frozen=True)
class STRegParams:
    """
    Skew-t linear regression parameters: ``y_i ~ ST(x_i' beta, omega^2, lam, nu)``.

    With a single constant regressor ``beta[0]`` is the location ``xi``.
    """

    beta: np.ndarray
    omega: float
    lam: float
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, float)))
        STParams(0.0, self.omega, self.lam, self.nu)

    def location(self, X) -> np.ndarray:
        return np.asarray(X, float) @ self.beta

    def at(self, xi: float) -> STParams:
        return STParams(float(xi), self.omega, self.lam, self.nu)

    def as_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "omega": float(self.omega),
            "lambda": float(self.lam),
            "nu": float(self.nu),
        }


class STMoments(NamedTuple):
    """Mean, variance, skewness and excess kurtosis; ``None`` when undefined."""

    mu: Optional[float]
    sigma2: Optional[float]
    gamma1: Optional[float]
    gamma2: Optional[float]


def delta_of_lambda(lam):
    """Map slant to ``delta = lam / sqrt(1 + lam^2)``; infinite slant maps to +-1."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(lam), np.sign(lam), lam / np.sqrt(1.0 + lam * lam))
    return float(out) if out.ndim == 0 else out


def lambda_of_delta(delta, allow_boundary=False):
    """
    Inverse of :func:`delta_of_lambda`.

    ``|delta| = 1`` raises unless ``allow_boundary`` is set, in which case
    it maps to an infinite slant.
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(np.abs(delta) > 1) or np.any(np.isnan(delta)):
        raise DomainError("delta must lie in [-1, 1]")
    edge = np.abs(delta) == 1
    if np.any(edge) and not allow_boundary:
        raise DomainError("|delta| = 1 corresponds to infinite slant")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(edge, np.sign(delta) * np.inf, delta / np.sqrt(1.0 - delta**2))
    return float(out) if out.ndim == 0 else out


def b_nu(nu: float) -> float:
    """The constant ``sqrt(nu) G((nu-1)/2) / (sqrt(pi) G(nu/2))`` for nu > 1."""
    if not nu > 1:
        raise DomainError("b_nu requires nu > 1")
    if math.isinf(nu):
        return math.sqrt(2.0 / math.pi)
    return math.exp(0.5 * math.log(nu / math.pi) - special.log_gamma_ratio(0.5 * (nu - 1.0)))


def _std_logpdf(z, lam, nu):
    z = np.asarray(z, dtype=float)
    if math.isinf(lam):
        with np.errstate(divide="ignore"):
            inside = np.where(np.sign(lam) * z > 0, 0.0, -np.inf)
        return math.log(2.0) + np.asarray(special.t_logpdf(z, nu)) + inside
    if lam == 0:
        return np.asarray(special.t_logpdf(z, nu), dtype=float)
    if math.isinf(nu):
        arg = lam * z
    else:
        arg = lam * z * np.sqrt((nu + 1.0) / (nu + z * z))
    nu1 = nu + 1.0
    return (
        math.log(2.0)
        + np.asarray(special.t_logpdf(z, nu))
        + np.asarray(special.t_logcdf(arg, nu1))
    )


def st_logpdf(y, p: STParams):
    """Log density of ST(p) at ``y`` (vectorized)."""
    z = (np.asarray(y, dtype=float) - p.xi) / p.omega
    out = _std_logpdf(z, p.lam, p.nu) - math.log(p.omega)
    return float(out) if np.ndim(out) == 0 else out


def st_pdf(y, p: STParams):
    """Density of ST(p) at ``y`` (vectorized)."""
    out = np.exp(st_logpdf(y, p))
    return float(out) if np.ndim(out) == 0 else out


def _sn_cdf(z, lam):
    if math.isinf(lam):
        return max(0.0, 2.0 * sc.ndtr(z) - 1.0) if lam > 0 else min(1.0, 2.0 * sc.ndtr(z))
    return float(np.clip(sc.ndtr(z) - 2.0 * sc.owens_t(z, lam), 0.0, 1.0))


def _std_cdf(z: float, lam: float, nu: float) -> float:
    # Integrate in probability space s = T(u; nu): the integrand
    # 2 T(lam u sqrt((nu+1)/(nu+u^2)); nu+1) is bounded in [0, 2].
    if math.isinf(nu):
        return _sn_cdf(z, lam)
    if lam == 0:
        return float(special.t_cdf(z, nu))
    if math.isinf(lam):
        s_end = float(special.t_cdf(z, nu))
        return max(0.0, 2.0 * s_end - 1.0) if lam > 0 else min(1.0, 2.0 * s_end)
    if z > 0:
        # reflection keeps s <= 1/2, where the t quantile is well conditioned
        return 1.0 - _lower_cdf(-z, -lam, nu)
    return _lower_cdf(z, lam, nu)


def _lower_cdf(z: float, lam: float, nu: float) -> float:
    s_end = float(special.t_cdf(z, nu))
    if s_end <= 0.0:
        return 0.0
    root = math.sqrt(nu + 1.0)
    nu1 = nu + 1.0

    def integrand(s):
        if s <= 0.0:
            return 2.0 * sc.stdtr(nu1, -lam * root)
        u = sc.stdtrit(nu, s)
        return 2.0 * sc.stdtr(nu1, lam * u * root / math.sqrt(nu + u * u))

    val, err = integrate.quad(integrand, 0.0, s_end, epsabs=_CDF_EPSABS, epsrel=1e-12, limit=200)
    if not math.isfinite(val) or err > 1e-9:
        raise NumericalError(f"skew-t CDF quadrature did not converge (err={err:g})")
    return min(max(val, 0.0), 1.0)


def st_cdf(y, p: STParams):
    """Distribution function of ST(p), by quadrature of the density."""
    z = (np.asarray(y, dtype=float) - p.xi) / p.omega
    if z.ndim == 0:
        return _std_cdf(float(z), p.lam, p.nu)
    return np.array([_std_cdf(float(v), p.lam, p.nu) for v in z.ravel()]).reshape(z.shape)


def _std_quantile(prob: float, lam: float, nu: float) -> float:
    if lam < 0:
        return -_std_quantile(1.0 - prob, -lam, nu)
    if lam == 0:
        return float(special.t_quantile(prob, nu))
    if math.isinf(lam):
        return math.sqrt(float(special.f1nu_quantile(prob, nu)))
    lo = float(special.t_quantile(prob, nu))
    hi = float(special.t_quantile(0.5 * (1.0 + prob), nu))
    f = lambda z: _std_cdf(z, lam, nu) - prob
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        # widen defensively; the t envelope normally brackets the root
        span = max(1.0, hi - lo)
        for _ in range(60):
            if flo > 0:
                lo -= span
                flo = f(lo)
            if fhi < 0:
                hi += span
                fhi = f(hi)
            if flo <= 0 <= fhi:
                break
            span *= 2.0
        else:
            raise NumericalError("could not bracket the skew-t quantile")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    z = optimize.brentq(f, lo, hi, xtol=1e-14 * max(1.0, abs(lo), abs(hi)), rtol=1e-15)
    if abs(f(z)) > _QUANTILE_PTOL:
        raise NumericalError("skew-t quantile root-finding missed its tolerance")
    return z


def st_quantile(prob, p: STParams):
    """Quantile function of ST(p) (vectorized over ``prob``)."""
    prob = np.asarray(prob, dtype=float)
    if np.any(~((prob > 0) & (prob < 1))):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    if prob.ndim == 0:
        return p.xi + p.omega * _std_quantile(float(prob), p.lam, p.nu)
    z = np.array([_std_quantile(float(v), p.lam, p.nu) for v in prob.ravel()])
    return p.xi + p.omega * z.reshape(prob.shape)


def _ratio(nu, k):
    return 1.0 if math.isinf(nu) else nu / (nu - k)


def st_moments(p: STParams) -> STMoments:
    """Mean, variance, skewness and excess kurtosis of ST(p) where they exist."""
    nu = p.nu
    if math.isinf(p.lam):
        raise DomainError("moments are only tabulated for finite slant")
    if not nu > 1:
        return STMoments(None, None, None, None)
    delta = delta_of_lambda(p.lam)
    m = b_nu(nu) * delta
    mu = p.xi + p.omega * m
    if not nu > 2:
        return STMoments(mu, None, None, None)
    s2z = _ratio(nu, 2) - m * m
    sigma2 = p.omega**2 * s2z
    if not nu > 3:
        return STMoments(mu, sigma2, None, None)
    r3 = (3.0 - delta * delta) * _ratio(nu, 3)
    gamma1 = m / s2z**1.5 * (r3 - 3.0 * _ratio(nu, 2) + 2.0 * m * m)
    if not nu > 4:
        return STMoments(mu, sigma2, gamma1, None)
    r24 = 3.0 * _ratio(nu, 2) * _ratio(nu, 4)
    gamma2 = (
        r24 - 4.0 * m * m * r3 + 6.0 * m * m * _ratio(nu, 2) - 3.0 * m**4
    ) / s2z**2 - 3.0
    return STMoments(mu, sigma2, gamma1, gamma2)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def st_sample(n: int, p: STParams, seed=None) -> np.ndarray:
    """
    Draw ``n`` i.i.d. values from ST(p).

    Uses ``Z = X / sqrt(V)`` with ``X`` skew-normal (built as
    ``delta |U0| + sqrt(1 - delta^2) U1``) and ``V ~ chi2(nu) / nu``.
    ``seed`` is an integer, ``None`` or a :class:`numpy.random.Generator`.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    rng = _rng(seed)
    delta = delta_of_lambda(p.lam)
    u = rng.standard_normal((2, n))
    x = delta * np.abs(u[0]) + math.sqrt(max(0.0, 1.0 - delta * delta)) * u[1]
    if not math.isinf(p.nu):
        x = x / np.sqrt(rng.chisquare(p.nu, n) / p.nu)
    return p.xi + p.omega * x
