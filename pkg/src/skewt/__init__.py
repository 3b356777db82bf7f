"""Skew-t distributions and quantile-based initialization of penalized likelihood fits."""

from .errors import DegenerateSampleError, DomainError, NumericalError
from .inversion import (
    PreliminaryEstimate,
    init_regression,
    invert_measures,
    lambda_from_gb,
    m3_start,
    nu_from_moors,
)
from .lad import LADFit, lad_fit
from .mple import (
    DevianceGrid,
    FitResult,
    cumulant_start,
    deviance_grid,
    fit,
    maximize,
    penalty,
    st_loglik,
)
from .multivariate import MSTParams, init_multivariate, mst_pdf, mst_sample
from .quantiles import QuantileSummary, st_theoretical_measures, summarize
from .univariate import (
    STParams,
    STRegParams,
    st_cdf,
    st_moments,
    st_pdf,
    st_quantile,
    st_sample,
)

__version__ = "0.1.0"
