"""Homogeneous OHLC volatility estimators for a drifted Wiener process.

Subpackages and modules:

- ``core``: bars, normalization and angular coordinates
- ``density``: exact densities of high, low and close
- ``kernels``: radial kernels and efficiency functionals
- ``estimators``: classic and most efficient estimators, bounds, pdfs
- ``quasi``: quasi-unbiased mixtures of efficient estimators
- ``mle``: maximum-likelihood estimators
- ``montecarlo``: path simulation and moment studies
- ``cli``: the ``ohlcvol`` command
"""
__version__ = "0.1.0"

from .core import DomainError, NormalizedTriple, OhlcBar, SphericalTriple, normalize_bar, to_spherical
from .density import ConvergenceError, SeriesControl, joint_pdf
from .estimators import (
    DiagramTable,
    EstimateResult,
    apply_diagram,
    classic_diagram,
    efficient_variance_diagram,
    efficient_volatility_diagram,
    gk_variance,
    gk_volatility,
    lower_bound_variance,
    lower_bound_volatility,
    parkinson_variance,
    parkinson_volatility,
    rs_variance,
    rs_volatility,
)
from .kernels import DEFAULT_QUADRATURE, QuadratureConfig

__all__ = [
    "__version__",
    "DomainError",
    "ConvergenceError",
    "OhlcBar",
    "NormalizedTriple",
    "SphericalTriple",
    "normalize_bar",
    "to_spherical",
    "SeriesControl",
    "joint_pdf",
    "QuadratureConfig",
    "DEFAULT_QUADRATURE",
    "DiagramTable",
    "EstimateResult",
    "apply_diagram",
    "classic_diagram",
    "efficient_variance_diagram",
    "efficient_volatility_diagram",
    "lower_bound_variance",
    "lower_bound_volatility",
    "rs_variance",
    "rs_volatility",
    "gk_variance",
    "gk_volatility",
    "parkinson_variance",
    "parkinson_volatility",
]
