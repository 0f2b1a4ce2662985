"""Photovoltaic production estimation toolkit.

Modules: ``datacube`` (source fusion), ``interpolation`` (ordinary kriging),
``regressors`` and ``ensemble`` (voting committees), ``evolution`` (genetic
search), ``covcor`` (covariance/correlation metric), ``neuralnet``,
``arima`` and ``hybrid`` (generation forecasting), ``cli``.
"""
from .errors import ComputationError, PvcastError, ValidationError

__version__ = "0.1.0"
__all__ = ["PvcastError", "ValidationError", "ComputationError", "__version__"]
