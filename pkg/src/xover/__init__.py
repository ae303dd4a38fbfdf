"""Optimal designs for multivariate crossover trials.

Direct-effect information matrices under uncorrelated responses with
response-specific within-subject covariance, A/D/E criteria, orthogonal
array constructions, design search and Monte Carlo validation.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .design import Design, OaSpec, construct_oa, parse_design, serialize_design
from .errors import XoverError
from .information import contrast_dispersion, info_block, info_matrix, oa_closed_form
from .model import CovarianceSpec, ResponseConfig, StudyConfig
from .optimality import criteria, efficiency, exchange_search, exhaustive_search, sweep

__all__ = [
    "__version__",
    "BACKEND",
    "Design",
    "OaSpec",
    "construct_oa",
    "parse_design",
    "serialize_design",
    "XoverError",
    "CovarianceSpec",
    "ResponseConfig",
    "StudyConfig",
    "info_block",
    "info_matrix",
    "oa_closed_form",
    "contrast_dispersion",
    "criteria",
    "efficiency",
    "sweep",
    "exhaustive_search",
    "exchange_search",
]
