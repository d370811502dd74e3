"""Sliding-window sequential assimilation: fit, propagate, forecast.

Window k learns from [t_k, t_k + L), waits out a reporting delay of D days,
and forecasts [t_k + L + D, t_k + L + D + F). Between windows the posterior
is pushed n days forward through the ODE to become the next state prior,
while the inferred parameters get moment-fitted, variance-inflated priors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import epimodel, fastpath, observation, priors, sampler
from .epimodel import EpiParams, InfeasibleParameters
from .observation import EpidemicSeries, ObsConfig
from .odeint import DEFAULT_STEP, IntegrationDiverged
from .priors import Beta, FitDegenerate, Gamma, LogNormal, PriorSpec
from .sampler import InitializationFailed, PosteriorSamples

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)

THETA_COORDS = ("beta", "omega", "g")
STATE_COORDS = ("E0", "O0", "U0", "R0", "D0")


class ForecastUnstable(RuntimeError):
    """Too many posterior draws failed to integrate over the forecast span."""


@dataclass(frozen=True)
class WindowConfig:
    """Window geometry: t0 start day, L learn, D delay, F forecast, n advance."""

    t0: int = 0
    learn_days: int = 28
    delay_days: int = 7
    forecast_days: int = 14
    advance_days: int = 7
    num_windows: int | None = None

    def __post_init__(self):
        if self.t0 < 0:
            raise ValueError(f"t0 must be non-negative, got {self.t0}")
        for name in ("learn_days", "delay_days", "forecast_days", "advance_days"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.advance_days > self.learn_days:
            raise ValueError("advance_days beyond learn_days would leave data unseen")
        if self.num_windows is not None and self.num_windows < 1:
            raise ValueError("num_windows must be at least 1 when given")


@dataclass(frozen=True)
class WindowBounds:
    """Day indices of one window: learning, delay and forecast intervals."""

    t_start: int
    learn_end: int
    forecast_start: int
    forecast_end: int

    @property
    def learning(self) -> tuple[int, int]:
        return (self.t_start, self.learn_end)

    @property
    def delay(self) -> tuple[int, int]:
        return (self.learn_end, self.forecast_start)

    @property
    def forecast(self) -> tuple[int, int]:
        return (self.forecast_start, self.forecast_end)


def window_bounds(cfg: WindowConfig, k: int) -> WindowBounds:
    """Interval arithmetic for window k: t_k = t0 + n*k."""
    if k < 0:
        raise ValueError(f"window index must be non-negative, got {k}")
    t_k = cfg.t0 + cfg.advance_days * k
    learn_end = t_k + cfg.learn_days
    fc_start = learn_end + cfg.delay_days
    return WindowBounds(
        t_start=t_k,
        learn_end=learn_end,
        forecast_start=fc_start,
        forecast_end=fc_start + cfg.forecast_days,
    )


@dataclass(frozen=True)
class SamplerSettings:
    iters: int = 150_000
    burn_in: int = 50_000
    thin: int = 100

    def __post_init__(self):
        if not (self.iters > self.burn_in >= 0):
            raise ValueError("need iters > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if (self.iters - self.burn_in) // self.thin < 100:
            raise ValueError("settings would retain fewer than 100 draws")


@dataclass
class ForecastResult:
    """Per-day predictive quantiles over the forecast interval of one window."""

    window: int
    days: np.ndarray              # (F,) absolute day indices
    case_quantiles: np.ndarray    # (5, F) rows follow QUANTILES
    death_quantiles: np.ndarray   # (5, F)
    param_summary: dict           # median and 90% interval for beta, omega, g
    n_dropped: int

    def __post_init__(self):
        for name, qmat in (("case", self.case_quantiles), ("death", self.death_quantiles)):
            if qmat.shape != (len(QUANTILES), self.days.size):
                raise ValueError(f"{name} quantile matrix has wrong shape {qmat.shape}")
            if np.any(qmat < 0.0):
                raise ValueError(f"{name} quantiles must be non-negative")
            if np.any(np.diff(qmat, axis=0) < 0.0):
                raise ValueError(f"{name} quantiles must be non-decreasing")


@dataclass
class WindowResult:
    k: int
    bounds: WindowBounds
    posterior: PosteriorSamples
    forecast: ForecastResult
    n_propagation_dropped: int = 0


@dataclass
class SequentialRun:
    windows: list[WindowResult] = field(default_factory=list)
    failure: dict | None = None

    @property
    def completed(self) -> bool:
        return self.failure is None


def build_log_posterior(prior: PriorSpec, cases, deaths, base: EpiParams, obs_cfg: ObsConfig,
                        step: float = DEFAULT_STEP):
    """Callable log pi(v) for one learning window; -inf outside the support."""
    cases = np.ascontiguousarray(cases, dtype=np.int64)
    deaths = np.ascontiguousarray(deaths, dtype=np.int64)
    n_pop = base.N

    def log_posterior(v):
        lp = priors.prior_log_density(prior, v, n_pop=n_pop)
        if lp == -math.inf:
            return -math.inf
        return lp + fastpath.window_loglik(v, base, cases, deaths, obs_cfg, step=step)

    return log_posterior


def assimilate_window(window_series: EpidemicSeries, prior: PriorSpec, base: EpiParams,
                      obs_cfg: ObsConfig, settings: SamplerSettings, rng: np.random.Generator,
                      step: float = DEFAULT_STEP) -> PosteriorSamples:
    """Fit one learning window: MCMC over the prior times the window likelihood.

    window_series must already be sliced to exactly the learning interval.
    """
    target = build_log_posterior(prior, window_series.cases, window_series.deaths,
                                 base, obs_cfg, step=step)
    a, _, b, _ = sampler.sample_initial_pair(target, lambda: priors.sample_vector(prior, rng))
    return sampler.run_mcmc(
        target, a, b,
        iters=settings.iters, burn_in=settings.burn_in, thin=settings.thin,
        rng=rng,
    )


def propagate_state_prior(post: PosteriorSamples, base: EpiParams, n_days_ahead: int,
                          step: float = DEFAULT_STEP) -> tuple[dict, int]:
    """Push every retained draw n days forward and Gamma-fit the aggregate masses.

    Returns ({"E0": Gamma, ...}, n_dropped). n_days_ahead = 0 fits the
    posterior initial conditions themselves.
    """
    if n_days_ahead < 0:
        raise ValueError("n_days_ahead must be non-negative")
    draws = post.draws
    if n_days_ahead == 0:
        agg = {name: draws[:, i] for i, name in enumerate(STATE_COORDS)}
        dropped = 0
    else:
        x0 = fastpath.assemble_states(draws, base)
        day_states, _, ok = fastpath.integrate_batch(
            x0, draws[:, 5], draws[:, 7], base, n_days_ahead, step=step
        )
        dropped = int(draws.shape[0] - ok.sum())
        final = day_states[ok, -1, :]
        if final.shape[0] < 100:
            raise FitDegenerate("fewer than 100 propagated draws survived integration")
        agg = {
            "E0": final[:, epimodel.E1] + final[:, epimodel.E2],
            "O0": final[:, epimodel.O1] + final[:, epimodel.O2],
            "U0": final[:, epimodel.U1] + final[:, epimodel.U2],
            "R0": final[:, epimodel.R],
            "D0": final[:, epimodel.D],
        }
    fitted = {name: priors.fit_moments(agg[name], Gamma) for name in STATE_COORDS}
    return fitted, dropped


def autoregressive_theta_prior(post: PosteriorSamples, inflate: float = 1.5) -> dict:
    """Moment-fit beta (LogNormal), omega and g (Beta), then widen by inflate^2.

    The widened prior keeps the fitted mean; only the variance grows. This is
    the random-walk parameter evolution between windows.
    """
    fitted = {
        "beta": priors.fit_moments(post.draws[:, 5], LogNormal),
        "omega": priors.fit_moments(post.draws[:, 6], Beta),
        "g": priors.fit_moments(post.draws[:, 7], Beta),
    }
    return {name: priors.inflate_variance(d, inflate) for name, d in fitted.items()}


def forecast(post: PosteriorSamples, base: EpiParams, obs_cfg: ObsConfig, bounds: WindowBounds,
             rng: np.random.Generator, step: float = DEFAULT_STEP,
             observation_noise: bool = True, max_dropped_frac: float = 0.01,
             window: int = 0) -> ForecastResult:
    """Posterior-predictive quantile bands over the forecast interval.

    Each retained draw is integrated from t_k through the forecast horizon;
    with observation_noise the per-day counts are sampled from the count
    distribution, otherwise the reporting-scaled means are used directly.
    """
    draws = post.draws
    m = draws.shape[0]
    n_total = bounds.forecast_end - bounds.t_start
    x0 = fastpath.assemble_states(draws, base)
    day_states, case_flux, ok = fastpath.integrate_batch(
        x0, draws[:, 5], draws[:, 7], base, n_total, step=step
    )
    n_dropped = int(m - ok.sum())
    if n_dropped > max_dropped_frac * m:
        raise ForecastUnstable(
            f"{n_dropped} of {m} draws failed to integrate over the forecast span"
        )

    start_rel = bounds.forecast_start - bounds.t_start
    n_fc = bounds.forecast_end - bounds.forecast_start
    mu_c = case_flux[ok][:, start_rel:start_rel + n_fc]
    mu_d = np.diff(day_states[ok][:, :, epimodel.D], axis=1)[:, start_rel:start_rel + n_fc]

    if observation_noise:
        pred_c = observation.sample_counts(rng, mu_c, obs_cfg).astype(float)
        pred_d = observation.sample_counts(rng, mu_d, obs_cfg).astype(float)
    else:
        pred_c = obs_cfg.p_report * mu_c
        pred_d = obs_cfg.p_report * mu_d

    case_q = np.quantile(pred_c, QUANTILES, axis=0)
    death_q = np.quantile(pred_d, QUANTILES, axis=0)

    summary = {}
    for name, col in zip(THETA_COORDS, (5, 6, 7)):
        vals = draws[:, col]
        summary[name] = {
            "median": float(np.median(vals)),
            "q05": float(np.quantile(vals, 0.05)),
            "q95": float(np.quantile(vals, 0.95)),
        }

    return ForecastResult(
        window=window,
        days=np.arange(bounds.forecast_start, bounds.forecast_end),
        case_quantiles=case_q,
        death_quantiles=death_q,
        param_summary=summary,
        n_dropped=n_dropped,
    )


_WINDOW_ERRORS = (
    FitDegenerate,
    InitializationFailed,
    ForecastUnstable,
    IntegrationDiverged,
    InfeasibleParameters,
)


def run_sequential(series: EpidemicSeries, wcfg: WindowConfig, base: EpiParams,
                   obs_cfg: ObsConfig, settings: SamplerSettings, rng: np.random.Generator,
                   kappa: float = 1.5, step: float = DEFAULT_STEP,
                   observation_noise: bool = True) -> SequentialRun:
    """Run windows in sequence until data (or num_windows) runs out.

    Window 0 uses the default prior; later windows use the propagated state
    prior and the variance-inflated parameter prior. A failure in any window
    stops the run, keeping every completed window's results.
    """
    run = SequentialRun()
    prior = priors.default_prior()
    k = 0
    while True:
        if wcfg.num_windows is not None and k >= wcfg.num_windows:
            break
        bounds = window_bounds(wcfg, k)
        if bounds.learn_end > len(series):
            break
        stage = "assimilate"
        try:
            window_series = series.slice(bounds.t_start, bounds.learn_end)
            post = assimilate_window(window_series, prior, base, obs_cfg, settings, rng, step=step)
            stage = "forecast"
            fc = forecast(post, base, obs_cfg, bounds, rng, step=step,
                          observation_noise=observation_noise, window=k)
            result = WindowResult(k=k, bounds=bounds, posterior=post, forecast=fc)
            run.windows.append(result)

            next_bounds = window_bounds(wcfg, k + 1)
            more = next_bounds.learn_end <= len(series)
            if wcfg.num_windows is not None and k + 1 >= wcfg.num_windows:
                more = False
            if not more:
                break
            stage = "propagate"
            state_prior, n_drop = propagate_state_prior(post, base, wcfg.advance_days, step=step)
            result.n_propagation_dropped = n_drop
            theta_prior = autoregressive_theta_prior(post, inflate=kappa)
            prior = PriorSpec(**state_prior, **theta_prior)
        except _WINDOW_ERRORS as err:
            run.failure = {
                "window": k,
                "stage": stage,
                "error": type(err).__name__,
                "message": str(err),
            }
            break
        k += 1
    return run
