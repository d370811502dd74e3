"""Observation model: daily expected counts and a negative-binomial likelihood.

The count for series index i covers model time [i, i+1]: expected deaths are
first differences of cumulative D, expected cases integrate the flux of new
observed-infectious arrivals over the day with the 10-point trapezoid rule.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from . import epimodel
from .epimodel import EpiParams
from .odeint import Trajectory, trapezoid_day_integral

# reporting-scaled means are floored here before entering the likelihood
MEAN_FLOOR = 1e-8

# below this excess variance (relative to the mean) the pmf is evaluated as
# Poisson; the exact NB formula loses all precision when r = m^2/(v-m) blows up
_POISSON_SWITCH = 1e-8


@dataclass(frozen=True)
class ObsConfig:
    """Reporting and over-dispersion settings for the count distribution.

    The variance function is omega_over * m + theta_over * m**2 around the
    reporting-scaled mean m; omega_over = 1 with theta_over -> 0 recovers
    the Poisson limit.
    """

    p_report: float = 1.0
    omega_over: float = 2.0
    theta_over: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.p_report <= 1.0):
            raise ValueError(f"p_report must lie in (0, 1], got {self.p_report}")
        if not (np.isfinite(self.theta_over) and self.theta_over > 0.0):
            raise ValueError(f"theta_over must be positive, got {self.theta_over}")
        if not (np.isfinite(self.omega_over) and self.omega_over >= 1.0):
            raise ValueError(f"omega_over must be at least 1, got {self.omega_over}")


@dataclass(frozen=True)
class EpidemicSeries:
    """Daily incident case and death counts starting at start_date."""

    start_date: dt.date
    cases: np.ndarray
    deaths: np.ndarray

    def __post_init__(self):
        cases = np.asarray(self.cases, dtype=np.int64)
        deaths = np.asarray(self.deaths, dtype=np.int64)
        if cases.ndim != 1 or deaths.shape != cases.shape:
            raise ValueError("cases and deaths must be 1-d arrays of equal length")
        if cases.size < 1:
            raise ValueError("series must contain at least one day")
        if np.any(cases < 0) or np.any(deaths < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "cases", cases)
        object.__setattr__(self, "deaths", deaths)

    def __len__(self) -> int:
        return int(self.cases.size)

    def date_of(self, index: int) -> dt.date:
        return self.start_date + dt.timedelta(days=int(index))

    @property
    def dates(self) -> list[dt.date]:
        return [self.date_of(i) for i in range(len(self))]

    def slice(self, start: int, stop: int) -> "EpidemicSeries":
        if not (0 <= start < stop <= len(self)):
            raise ValueError(f"invalid slice [{start}, {stop}) for series of length {len(self)}")
        return EpidemicSeries(
            start_date=self.date_of(start),
            cases=self.cases[start:stop],
            deaths=self.deaths[start:stop],
        )


def expected_deaths(traj: Trajectory) -> np.ndarray:
    """Per-day expected death counts: first differences of cumulative D."""
    return np.diff(traj.states[:, epimodel.D])


def expected_cases(traj: Trajectory, p: EpiParams) -> np.ndarray:
    """Per-day expected case counts: trapezoid of the arrival flux f*(2 sigma1)*E2."""
    integrand = epimodel.case_inflow_rate(traj.quad_states[:, :, epimodel.E2], p)
    return trapezoid_day_integral(integrand)


def nb_logpmf(y: int, mean: float, cfg: ObsConfig) -> float:
    """Log-pmf of the count distribution with reporting-scaled mean.

    Parameterised by mean m = p_report * mean (floored at MEAN_FLOOR) and
    variance omega_over * m + theta_over * m^2.
    """
    if y < 0 or y != int(y):
        raise ValueError(f"count must be a non-negative integer, got {y}")
    y = float(y)
    m = cfg.p_report * float(mean)
    if m < MEAN_FLOOR:
        m = MEAN_FLOOR
    v = cfg.omega_over * m + cfg.theta_over * m * m
    if v - m < _POISSON_SWITCH * m:
        return y * math.log(m) - m - math.lgamma(y + 1.0)
    r = m * m / (v - m)
    q = m / v
    return (
        math.lgamma(y + r)
        - math.lgamma(r)
        - math.lgamma(y + 1.0)
        + r * math.log(q)
        + y * math.log1p(-q)
    )


def log_likelihood(series: EpidemicSeries, traj: Trajectory, p: EpiParams, cfg: ObsConfig) -> float:
    """Joint log-likelihood of a daily series against a trajectory's expected counts.

    Day i of the series is scored against the trajectory's day interval i.
    Compensated summation keeps the result independent of term order.
    """
    n = len(series)
    if n > traj.n_days:
        raise ValueError(f"series has {n} days but trajectory spans {traj.n_days}")
    mu_c = expected_cases(traj, p)
    mu_d = expected_deaths(traj)
    terms = []
    for i in range(n):
        terms.append(nb_logpmf(int(series.cases[i]), mu_c[i], cfg))
        terms.append(nb_logpmf(int(series.deaths[i]), mu_d[i], cfg))
    return math.fsum(terms)


def sample_counts(rng: np.random.Generator, means, cfg: ObsConfig) -> np.ndarray:
    """Draw counts around reporting-scaled means, matching nb_logpmf's branches."""
    m = np.maximum(cfg.p_report * np.asarray(means, dtype=float), MEAN_FLOOR)
    v = cfg.omega_over * m + cfg.theta_over * m * m
    out = np.empty(m.shape, dtype=np.int64)
    poisson = (v - m) < _POISSON_SWITCH * m
    if np.any(poisson):
        out[poisson] = rng.poisson(m[poisson])
    rest = ~poisson
    if np.any(rest):
        mr = m[rest]
        vr = v[rest]
        r = mr * mr / (vr - mr)
        q = mr / vr
        out[rest] = rng.negative_binomial(r, q)
    return out
