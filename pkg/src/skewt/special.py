"""
Scalar special functions and classical-distribution primitives.

Student's t and normal primitives are backed by :mod:`scipy.special`.  The
degrees of freedom ``nu`` may be ``math.inf``, in which case every t
primitive dispatches to its normal counterpart.
"""

import math

import numpy as np
from scipy import special as sc

from .errors import DomainError

__all__ = [
    "INF",
    "log_gamma",
    "log_gamma_ratio",
    "t_pdf",
    "t_logpdf",
    "t_cdf",
    "t_logcdf",
    "t_quantile",
    "normal_pdf",
    "normal_cdf",
    "normal_quantile",
    "f1nu_cdf",
    "f1nu_quantile",
]

INF = math.inf
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _check_nu(nu):
    if not nu > 0:
        raise DomainError(f"degrees of freedom must be positive, got {nu!r}")


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("probabilities must lie strictly inside (0, 1)")
    return p


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def log_gamma(x):
    """Natural logarithm of the gamma function for positive arguments."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma requires x > 0")
    return _out(sc.gammaln(x))


def _half_step(x):
    # log G(x + 1/2) - log G(x); the asymptotic series avoids cancellation
    if x >= 100.0:
        r = 1.0 / x
        r2 = r * r
        return 0.5 * math.log(x) + r * (-1.0 / 8 + r2 * (1.0 / 192 + r2 * (-1.0 / 640 + r2 * 17.0 / 14336)))
    return float(sc.gammaln(x + 0.5) - sc.gammaln(x))


def log_gamma_ratio(x: float, d: int = 1) -> float:
    """
    ``log G(x + d/2) - log G(x)`` for ``x > 0`` and integer ``d >= 0``.

    Whole steps are summed as ``log(x + k)``, so the result keeps its
    relative accuracy when ``x`` is large and the two gamma values nearly
    cancel.
    """
    if not x > 0:
        raise DomainError("log_gamma_ratio requires x > 0")
    whole, half = divmod(int(d), 2)
    out = math.fsum(math.log(x + k) for k in range(whole))
    if half:
        out += _half_step(x + whole)
    return out


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return _out(np.exp(-0.5 * z * z - _LOG_SQRT_2PI))


def normal_cdf(z):
    return _out(sc.ndtr(np.asarray(z, dtype=float)))


def normal_quantile(p):
    return _out(sc.ndtri(_check_prob(p)))


def t_logpdf(z, nu):
    """Log density of Student's t on ``nu`` degrees of freedom."""
    _check_nu(nu)
    z = np.asarray(z, dtype=float)
    if math.isinf(nu):
        return _out(-0.5 * z * z - _LOG_SQRT_2PI)
    const = log_gamma_ratio(0.5 * nu) - 0.5 * math.log(math.pi * nu)
    return _out(const - 0.5 * (nu + 1.0) * np.log1p(z * z / nu))


def t_pdf(z, nu):
    """Density of Student's t on ``nu`` degrees of freedom."""
    return _out(np.exp(t_logpdf(z, nu)))


def t_cdf(z, nu):
    """Distribution function of Student's t on ``nu`` degrees of freedom."""
    _check_nu(nu)
    z = np.asarray(z, dtype=float)
    if math.isinf(nu):
        return _out(sc.ndtr(z))
    return _out(sc.stdtr(nu, z))


def t_logcdf(z, nu):
    """
    Logarithm of the t distribution function, accurate far in the lower tail.

    Where the direct value underflows, the leading term of the incomplete
    beta series ``I_w(a, b) ~ w**a (1-w)**b / (a B(a, b))`` is used.
    """
    _check_nu(nu)
    z = np.asarray(z, dtype=float)
    if math.isinf(nu):
        return _out(sc.log_ndtr(z))
    with np.errstate(divide="ignore"):
        out = np.log(sc.stdtr(nu, z))
    tiny = ~(out > -690.0)
    if np.any(tiny):
        zt = z[tiny] if out.ndim else z
        a = 0.5 * nu
        # w = nu / (nu + z^2) written without forming z^2, which may overflow
        la = np.log(np.abs(zt))
        log1mw = -np.log1p(nu * np.exp(-2.0 * la))
        logw = math.log(nu) - 2.0 * la + log1mw
        approx = (
            math.log(0.5) + a * logw + 0.5 * log1mw - math.log(a) - sc.betaln(a, 0.5)
        )
        if out.ndim:
            out[tiny] = approx
        else:
            out = approx
    return _out(out)


def t_quantile(p, nu):
    """Inverse of :func:`t_cdf` in its first argument."""
    _check_nu(nu)
    p = _check_prob(p)
    if math.isinf(nu):
        return _out(sc.ndtri(p))
    # work in the lower tail, then one Newton step on the cdf to remove
    # the ~1e-11 relative error of the library inverse
    q = np.minimum(p, 1.0 - p)
    z = sc.stdtrit(nu, q)
    with np.errstate(all="ignore"):
        step = (sc.stdtr(nu, z) - q) / np.asarray(t_pdf(z, nu))
        z = np.where(np.isfinite(step) & (np.abs(step) < 1e-6 * (1.0 + np.abs(z))), z - step, z)
    z = np.where(q == 0.5, 0.0, z)
    return _out(np.where(p > 0.5, -z, z))


def f1nu_cdf(v, nu):
    """Distribution function of Snedecor's F(1, nu)."""
    _check_nu(nu)
    v = np.asarray(v, dtype=float)
    root = np.sqrt(np.clip(v, 0.0, None))
    return _out(np.where(v > 0, 2.0 * np.asarray(t_cdf(root, nu)) - 1.0, 0.0))


def f1nu_quantile(p, nu):
    """
    Quantile of Snedecor's F(1, nu).

    The square root of this quantity is the quantile of ``|T|`` with
    ``T ~ t(nu)``, i.e. of the skew-t with infinite slant.
    """
    _check_nu(nu)
    p = _check_prob(p)
    root = np.asarray(t_quantile(0.5 * (1.0 + p), nu))
    return _out(root * root)
