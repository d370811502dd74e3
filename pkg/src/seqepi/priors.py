"""Prior distributions over the inference vector and moment-matching fits.

The inference vector has the fixed coordinate order
(E0, O0, U0, R0, D0, beta, omega, g).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

COORDS = ("E0", "O0", "U0", "R0", "D0", "beta", "omega", "g")
DIM = len(COORDS)

_LOG_2PI = math.log(2.0 * math.pi)

# moment inversions that land at or below zero are clamped here
BETA_PARAM_FLOOR = 0.01

# sample variance below 1e-12 * mean^2 is treated as degenerate
_DEGENERATE_REL_VAR = 1e-12


class FitDegenerate(RuntimeError):
    """Samples too concentrated (or ill-placed) for a moment fit."""


@dataclass(frozen=True)
class Gamma:
    """Shape/scale parameterisation; mean = shape * scale."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0.0):
            raise ValueError(f"shape must be positive, got {self.shape}")
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")

    def logpdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        return (
            (self.shape - 1.0) * math.log(x)
            - x / self.scale
            - math.lgamma(self.shape)
            - self.shape * math.log(self.scale)
        )

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, self.scale, size=size)

    def mean(self) -> float:
        return self.shape * self.scale

    def var(self) -> float:
        return self.shape * self.scale * self.scale


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0.0):
            raise ValueError(f"a must be positive, got {self.a}")
        if not (np.isfinite(self.b) and self.b > 0.0):
            raise ValueError(f"b must be positive, got {self.b}")

    def logpdf(self, x: float) -> float:
        if x <= 0.0 or x >= 1.0:
            return -math.inf
        lbeta = math.lgamma(self.a) + math.lgamma(self.b) - math.lgamma(self.a + self.b)
        return (self.a - 1.0) * math.log(x) + (self.b - 1.0) * math.log1p(-x) - lbeta

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.a, self.b, size=size)

    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def var(self) -> float:
        s = self.a + self.b
        return self.a * self.b / (s * s * (s + 1.0))


@dataclass(frozen=True)
class LogNormal:
    """mu and sigma act on the log scale."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def logpdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        z = (math.log(x) - self.mu) / self.sigma
        return -math.log(x) - math.log(self.sigma) - 0.5 * _LOG_2PI - 0.5 * z * z

    def sample(self, rng: np.random.Generator, size=None):
        return rng.lognormal(self.mu, self.sigma, size=size)

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma * self.sigma)

    def var(self) -> float:
        s2 = self.sigma * self.sigma
        return math.expm1(s2) * math.exp(2.0 * self.mu + s2)


Distribution1D = Union[Gamma, Beta, LogNormal]


def log_density(d: Distribution1D, x: float) -> float:
    return d.logpdf(float(x))


def sample(d: Distribution1D, rng: np.random.Generator, size=None):
    return d.sample(rng, size=size)


def from_mean_var(family, mean: float, var: float) -> Distribution1D:
    """Solve family parameters so the distribution has the given mean and variance.

    Beta inversions whose parameters land at or below BETA_PARAM_FLOOR are
    clamped there, which sacrifices the exact moments at the boundary.
    """
    if not (np.isfinite(mean) and np.isfinite(var) and var > 0.0):
        raise ValueError(f"need finite mean and positive variance, got {mean}, {var}")
    if family is Gamma:
        if mean <= 0.0:
            raise ValueError(f"Gamma mean must be positive, got {mean}")
        return Gamma(shape=mean * mean / var, scale=var / mean)
    if family is Beta:
        if not (0.0 < mean < 1.0):
            raise ValueError(f"Beta mean must lie in (0, 1), got {mean}")
        nu = mean * (1.0 - mean) / var - 1.0
        a = mean * nu
        b = (1.0 - mean) * nu
        return Beta(a=max(a, BETA_PARAM_FLOOR), b=max(b, BETA_PARAM_FLOOR))
    if family is LogNormal:
        if mean <= 0.0:
            raise ValueError(f"LogNormal mean must be positive, got {mean}")
        s2 = math.log1p(var / (mean * mean))
        return LogNormal(mu=math.log(mean) - 0.5 * s2, sigma=math.sqrt(s2))
    raise TypeError(f"unknown family {family!r}")


def fit_moments(samples, family) -> Distribution1D:
    """Method-of-moments fit of one family to samples.

    Gamma and Beta invert mean/variance; LogNormal matches the mean and
    standard deviation of the log samples.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 100:
        raise ValueError(f"need a 1-d array of at least 100 samples, got shape {x.shape}")
    if family in (Gamma, LogNormal):
        if np.any(x <= 0.0):
            raise ValueError("samples must be strictly positive for this family")
    elif family is Beta:
        if np.any(x <= 0.0) or np.any(x >= 1.0):
            raise ValueError("samples must lie strictly inside (0, 1) for Beta")
    else:
        raise TypeError(f"unknown family {family!r}")

    m = float(np.mean(x))
    v = float(np.var(x, ddof=1))
    if v < _DEGENERATE_REL_VAR * m * m:
        raise FitDegenerate(f"sample variance {v:.3g} is degenerate relative to mean {m:.3g}")
    if family is Gamma and m <= 0.0:
        raise FitDegenerate(f"sample mean {m:.3g} outside Gamma support")
    if family is Beta and not (0.0 < m < 1.0):
        raise FitDegenerate(f"sample mean {m:.3g} outside Beta support")
    if family is LogNormal:
        logs = np.log(x)
        mu = float(np.mean(logs))
        sd = float(np.std(logs, ddof=1))
        if sd <= 0.0:
            raise FitDegenerate("log samples are constant")
        return LogNormal(mu=mu, sigma=sd)
    return from_mean_var(family, m, v)


def inflate_variance(d: Distribution1D, kappa: float) -> Distribution1D:
    """Re-solve the family parameters for the same mean but kappa^2 times the variance."""
    if not (np.isfinite(kappa) and kappa >= 1.0):
        raise ValueError(f"kappa must be at least 1, got {kappa}")
    if kappa == 1.0:
        return d
    return from_mean_var(type(d), d.mean(), kappa * kappa * d.var())


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors, one per inference coordinate, in the fixed order."""

    E0: Distribution1D
    O0: Distribution1D
    U0: Distribution1D
    R0: Distribution1D
    D0: Distribution1D
    beta: Distribution1D
    omega: Distribution1D
    g: Distribution1D

    def __post_init__(self):
        for name in ("E0", "O0", "U0", "R0", "D0", "beta"):
            if not isinstance(getattr(self, name), (Gamma, LogNormal)):
                raise ValueError(f"{name} needs a positive-support prior family")
        for name in ("omega", "g"):
            if not isinstance(getattr(self, name), Beta):
                raise ValueError(f"{name} needs a (0, 1)-support prior family")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in COORDS)


def default_prior() -> PriorSpec:
    """Baseline prior used for the first window."""
    return PriorSpec(
        E0=Gamma(shape=10.0, scale=1.0),
        O0=Gamma(shape=10.0, scale=1.0),
        U0=Gamma(shape=10.0, scale=1.0),
        R0=Gamma(shape=1.0, scale=1.0),
        D0=Gamma(shape=1.0, scale=1.0),
        beta=LogNormal(mu=1.0, sigma=1.0),
        omega=Beta(a=1.0 + 1.0 / 6.0, b=1.0 + 1.0 / 3.0),
        g=Beta(a=1.0 + 1.0 / 6.0, b=1.0 + 1.0 / 3.0),
    )


def prior_log_density(ps: PriorSpec, v, n_pop: float | None = None) -> float:
    """Product-form log prior density of an inference vector.

    -inf when any coordinate leaves its support, or (with n_pop given) when
    the initial masses would exceed the effective population omega * n_pop.
    """
    x = np.asarray(v, dtype=float)
    if x.shape != (DIM,):
        raise ValueError(f"expected an inference vector of shape ({DIM},), got {x.shape}")
    total = 0.0
    for d, xi in zip(ps.as_tuple(), x):
        lp = d.logpdf(float(xi))
        if lp == -math.inf:
            return -math.inf
        total += lp
    if n_pop is not None:
        if x[0] + x[1] + x[2] + x[3] > x[6] * n_pop:
            return -math.inf
    return total


def sample_vector(ps: PriorSpec, rng: np.random.Generator) -> np.ndarray:
    """One inference-vector draw from the prior, in coordinate order."""
    return np.array([d.sample(rng) for d in ps.as_tuple()], dtype=float)
