"""
Octile-based summaries: median, quartile deviation, Galton-Bowley skewness
and Moors kurtosis, for samples and for the skew-t family.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DegenerateSampleError, DomainError
from .univariate import STParams, st_quantile

__all__ = [
    "OCTILE_PROBS",
    "QuantileSummary",
    "sample_octiles",
    "measures_from_octiles",
    "summarize",
    "st_octiles",
    "st_theoretical_measures",
]

OCTILE_PROBS = np.arange(1, 8) / 8.0


@dataclass(frozen=True)
class QuantileSummary:
    """Octiles ``e1..e7`` and the derived (q2, dq, G, M)."""

    octiles: Tuple[float, ...]
    q2: float
    dq: float
    G: float
    M: float

    @property
    def q1(self) -> float:
        return self.octiles[1]

    @property
    def q3(self) -> float:
        return self.octiles[5]


def sample_octiles(y) -> np.ndarray:
    """
    Empirical octiles at probabilities j/8, j = 1..7.

    Uses linear interpolation between order statistics with plotting
    position (k-1)/(n-1), numpy's default ``"linear"`` method.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 8:
        raise DomainError("at least 8 observations are needed for octiles")
    if not np.all(np.isfinite(y)):
        raise DomainError("sample contains non-finite values")
    e = np.quantile(y, OCTILE_PROBS)
    if not e[5] > e[1]:
        raise DegenerateSampleError("quartile deviation is zero")
    return e


def measures_from_octiles(e) -> QuantileSummary:
    e = tuple(float(v) for v in e)
    if len(e) != 7:
        raise DomainError("exactly seven octiles are required")
    if any(b < a for a, b in zip(e, e[1:])):
        raise DomainError("octiles must be nondecreasing")
    q1, q2, q3 = e[1], e[3], e[5]
    spread = q3 - q1
    if not spread > 0:
        raise DegenerateSampleError("quartile deviation is zero")
    dq = 0.5 * spread
    G = (q3 - 2.0 * q2 + q1) / spread
    M = ((e[6] - e[4]) + (e[2] - e[0])) / spread
    return QuantileSummary(e, q2, dq, G, M)


def summarize(y) -> QuantileSummary:
    """Sample octiles followed by :func:`measures_from_octiles`."""
    return measures_from_octiles(sample_octiles(y))


def st_octiles(lam: float, nu: float) -> np.ndarray:
    return np.asarray(st_quantile(OCTILE_PROBS, STParams(0.0, 1.0, lam, nu)))


def st_theoretical_measures(lam: float, nu: float) -> Tuple[float, float]:
    """(G, M) of ST(0, 1, lam, nu); the sign of ``lam`` only flips ``G``."""
    if lam < 0:
        G, M = st_theoretical_measures(-lam, nu)
        return -G, M
    s = measures_from_octiles(st_octiles(lam, nu))
    return s.G, s.M
