"""Compartmental epidemic model with observed and unobserved infectious classes.

Residence times in E, O (observed infectious) and U (unobserved infectious) are
Erlang with shape 2, realised as two serial sub-compartments each exiting at
twice the aggregate rate (linear chain trick).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

COMPARTMENTS = ("S", "E1", "E2", "O1", "O2", "U1", "U2", "R", "D")
N_COMPARTMENTS = len(COMPARTMENTS)

# column indices into a state array
S, E1, E2, O1, O2, U1, U2, R, D = range(N_COMPARTMENTS)


class InfeasibleParameters(ValueError):
    """Initial masses exceed the effective susceptible population."""


@dataclass(frozen=True)
class EpiParams:
    """Model parameters: (beta, omega, g) are inferred, the rest are held fixed.

    beta    contact rate (1/day)
    omega   fraction of the census population participating in the outbreak
    g       fraction of observed infectious exits that are deaths
    N       census population size
    f       fraction of exposed who become observed infectious
    k_obs   relative infectiousness of the observed class
    sigma1  1 / mean exposed residence (aggregate rate, 1/day)
    sigma2  1 / mean observed-infectious residence
    gamma   1 / mean unobserved-infectious residence
    """

    beta: float
    omega: float
    g: float
    N: float
    f: float = 0.8
    k_obs: float = 1.0
    sigma1: float = 1.0 / 5.0
    sigma2: float = 1.0 / 14.0
    gamma: float = 1.0 / 7.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"beta must be finite and positive, got {self.beta}")
        if not (0.0 < self.omega < 1.0):
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")
        if not (0.0 < self.g < 1.0):
            raise ValueError(f"g must lie in (0, 1), got {self.g}")
        if not (0.0 < self.f < 1.0):
            raise ValueError(f"f must lie in (0, 1), got {self.f}")
        if not (np.isfinite(self.k_obs) and self.k_obs >= 0.0):
            raise ValueError(f"k_obs must be non-negative, got {self.k_obs}")
        for name in ("sigma1", "sigma2", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if not (np.isfinite(self.N) and self.N >= 1.0):
            raise ValueError(f"N must be at least 1, got {self.N}")

    # Erlang shape 2: each serial sub-stage exits at twice the aggregate rate,
    # so the aggregate residence time keeps its mean (1/sigma1 etc.).
    @property
    def stage_rate_e(self) -> float:
        return 2.0 * self.sigma1

    @property
    def stage_rate_o(self) -> float:
        return 2.0 * self.sigma2

    @property
    def stage_rate_u(self) -> float:
        return 2.0 * self.gamma

    def with_inferred(self, beta: float, omega: float, g: float) -> "EpiParams":
        return dataclasses.replace(self, beta=beta, omega=omega, g=g)


@dataclass(frozen=True)
class StateVector:
    """Non-negative compartment masses at one time point."""

    S: float
    E1: float
    E2: float
    O1: float
    O2: float
    U1: float
    U2: float
    R: float
    D: float

    def __post_init__(self):
        total = 0.0
        for name in COMPARTMENTS:
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"compartment {name} is not finite: {v}")
            if v < 0.0:
                raise ValueError(f"compartment {name} is negative: {v}")
            total += v
        if not np.isfinite(total):
            raise ValueError("total mass overflows")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in COMPARTMENTS], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "StateVector":
        a = np.asarray(arr, dtype=float)
        if a.shape != (N_COMPARTMENTS,):
            raise ValueError(f"expected shape ({N_COMPARTMENTS},), got {a.shape}")
        return cls(*(float(v) for v in a))

    def total(self) -> float:
        return float(sum(getattr(self, n) for n in COMPARTMENTS))

    # aggregate masses of the staged compartments
    @property
    def E(self) -> float:
        return self.E1 + self.E2

    @property
    def O(self) -> float:
        return self.O1 + self.O2

    @property
    def U(self) -> float:
        return self.U1 + self.U2


@dataclass(frozen=True)
class InitialConditions:
    """Aggregate initial masses; each staged class is split equally over its sub-stages."""

    E0: float
    O0: float
    U0: float
    R0: float
    D0: float

    def __post_init__(self):
        for name in ("E0", "O0", "U0", "R0", "D0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.E0, self.O0, self.U0, self.R0, self.D0], dtype=float)


def _as_state_array(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.as_array()
    return np.asarray(x, dtype=float)


def force_of_infection(x, p: EpiParams):
    """Per-susceptible infection rate lambda = (U + k_obs * O) * beta / N.

    Accepts a StateVector or an array with compartments on the last axis;
    broadcasts over leading axes.
    """
    a = _as_state_array(x)
    return (a[..., U1] + a[..., U2] + p.k_obs * (a[..., O1] + a[..., O2])) * p.beta / p.N


def rhs(x, p: EpiParams) -> np.ndarray:
    """Time derivative of the staged system. Mass-conserving: components sum to 0."""
    a = _as_state_array(x)
    lam = force_of_infection(a, p)
    re, ro, ru = p.stage_rate_e, p.stage_rate_o, p.stage_rate_u
    inflow = lam * a[..., S]
    dS = -inflow
    dE1 = inflow - re * a[..., E1]
    dE2 = re * (a[..., E1] - a[..., E2])
    dO1 = p.f * re * a[..., E2] - ro * a[..., O1]
    dO2 = ro * (a[..., O1] - a[..., O2])
    dU1 = (1.0 - p.f) * re * a[..., E2] - ru * a[..., U1]
    dU2 = ru * (a[..., U1] - a[..., U2])
    dR = (1.0 - p.g) * ro * a[..., O2] + ru * a[..., U2]
    dD = p.g * ro * a[..., O2]
    return np.stack([dS, dE1, dE2, dO1, dO2, dU1, dU2, dR, dD], axis=-1)


def case_inflow_rate(e2, p: EpiParams):
    """Instantaneous rate of new observed-infectious arrivals, f * (2 sigma1) * E2."""
    return p.f * p.stage_rate_e * np.asarray(e2, dtype=float)


def assemble_initial_state(ic: InitialConditions, p: EpiParams) -> StateVector:
    """Build the day-zero state: S takes whatever the effective population leaves over.

    S(0) = omega * N - (E0 + O0 + U0 + R0); D0 does not reduce S.
    Raises InfeasibleParameters when the masses exceed omega * N.
    """
    s0 = p.omega * p.N - (ic.E0 + ic.O0 + ic.U0 + ic.R0)
    if s0 < 0.0:
        raise InfeasibleParameters(
            f"initial masses {ic.E0 + ic.O0 + ic.U0 + ic.R0:.6g} exceed "
            f"effective population {p.omega * p.N:.6g}"
        )
    return StateVector(
        S=s0,
        E1=0.5 * ic.E0,
        E2=0.5 * ic.E0,
        O1=0.5 * ic.O0,
        O2=0.5 * ic.O0,
        U1=0.5 * ic.U0,
        U2=0.5 * ic.U0,
        R=ic.R0,
        D=ic.D0,
    )
