"""Sequential Bayesian assimilation for epidemic count data.

A staged transmission model is fit to daily case and death counts over
sliding windows; each window's posterior seeds the next window's prior,
and every window issues quantile-band forecasts.
"""
from .assimilation import (
    ForecastResult,
    ForecastUnstable,
    SamplerSettings,
    SequentialRun,
    WindowConfig,
    WindowResult,
    forecast,
    run_sequential,
    window_bounds,
)
from .epimodel import (
    EpiParams,
    InfeasibleParameters,
    InitialConditions,
    StateVector,
    assemble_initial_state,
)
from .observation import EpidemicSeries, ObsConfig, log_likelihood
from .odeint import IntegrationDiverged, Trajectory, integrate
from .priors import PriorSpec, default_prior
from .sampler import PosteriorSamples, estimate_iat, run_mcmc

__version__ = "0.1.0"

__all__ = [
    "EpiParams",
    "EpidemicSeries",
    "ForecastResult",
    "ForecastUnstable",
    "InfeasibleParameters",
    "InitialConditions",
    "IntegrationDiverged",
    "ObsConfig",
    "PosteriorSamples",
    "PriorSpec",
    "SamplerSettings",
    "SequentialRun",
    "StateVector",
    "Trajectory",
    "WindowConfig",
    "WindowResult",
    "__version__",
    "assemble_initial_state",
    "default_prior",
    "estimate_iat",
    "forecast",
    "integrate",
    "log_likelihood",
    "run_mcmc",
    "run_sequential",
    "window_bounds",
]
