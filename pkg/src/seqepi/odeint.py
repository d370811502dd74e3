"""Fixed-step RK4 integration with a per-day quadrature sub-grid.

States are recorded on the integer-day grid and on 10 points per day (both
endpoints included, 9 trapezoid panels of width 1/9 day). Integration steps
are chosen to land exactly on the quadrature nodes so no interpolation is
ever needed: the requested step acts as an upper bound and is rounded down
to an integer number of steps per panel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import epimodel
from .epimodel import EpiParams

QUAD_POINTS_PER_DAY = 10
_PANELS = QUAD_POINTS_PER_DAY - 1
_PANEL = 1.0 / _PANELS

# records with a negative component beyond this fraction of N abort the run
NEG_TOL_FRACTION = 1e-6

DEFAULT_STEP = 0.1


class IntegrationDiverged(RuntimeError):
    """Integration produced a non-finite or badly negative state."""

    def __init__(self, time: float, detail: str = ""):
        msg = f"integration diverged at t={time:g}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.time = time


def substeps_per_panel(step: float) -> int:
    """RK4 steps per quadrature panel; the effective step (1/9)/n never exceeds `step`."""
    if not (np.isfinite(step) and step > 0.0):
        raise ValueError(f"step must be positive, got {step}")
    return max(1, math.ceil(_PANEL / step - 1e-12))


@dataclass(frozen=True)
class Trajectory:
    """Day-grid states plus the dense per-day sub-grid used for flux quadrature.

    times        (n_days+1,) integer-day time points
    states       (n_days+1, 9) compartment masses at those times
    quad_times   (n_days, 10) per-day quadrature nodes, t_i + j/9
    quad_states  (n_days, 10, 9) states at the quadrature nodes
    """

    times: np.ndarray
    states: np.ndarray
    quad_times: np.ndarray
    quad_states: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.shape != (self.times.size, epimodel.N_COMPARTMENTS):
            raise ValueError("times/states shapes are inconsistent")
        n_days = self.times.size - 1
        if self.quad_times.shape != (n_days, QUAD_POINTS_PER_DAY):
            raise ValueError("quad_times shape is inconsistent")
        if self.quad_states.shape != (n_days, QUAD_POINTS_PER_DAY, epimodel.N_COMPARTMENTS):
            raise ValueError("quad_states shape is inconsistent")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_days(self) -> int:
        return self.times.size - 1

    @property
    def t0(self) -> float:
        return float(self.times[0])


def _record(state, t: float, neg_limit: float) -> np.ndarray:
    """Copy a raw state for recording: clamp tiny negatives, reject real divergence."""
    rec = np.array(state, dtype=float)
    if not np.all(np.isfinite(rec)):
        raise IntegrationDiverged(t, "non-finite state")
    low = rec.min()
    if low < -neg_limit:
        raise IntegrationDiverged(t, f"negative mass {low:.3g}")
    if low < 0.0:
        rec[rec < 0.0] = 0.0
    return rec


def integrate(x0, p: EpiParams, t0: float, t_end: float, step: float = DEFAULT_STEP) -> Trajectory:
    """Integrate the model over an integer number of days starting at t0.

    Deterministic: identical inputs give bit-identical trajectories.
    """
    span = float(t_end) - float(t0)
    n_days = int(round(span))
    if n_days < 1 or abs(span - n_days) > 1e-9:
        raise ValueError(f"t_end - t0 must be a positive whole number of days, got {span}")
    n_sub = substeps_per_panel(step)
    h = _PANEL / n_sub

    a = epimodel._as_state_array(x0)
    if a.shape != (epimodel.N_COMPARTMENTS,):
        raise ValueError(f"x0 must have {epimodel.N_COMPARTMENTS} components")
    state = tuple(float(v) for v in a)

    # hoist parameters; scalar arithmetic keeps the single-trajectory path fast
    beta = p.beta
    f = p.f
    k_obs = p.k_obs
    g = p.g
    n_pop = p.N
    re = p.stage_rate_e
    ro = p.stage_rate_o
    ru = p.stage_rate_u
    neg_limit = NEG_TOL_FRACTION * n_pop

    def deriv(s, e1, e2, o1, o2, u1, u2, r, d):
        lam = (u1 + u2 + k_obs * (o1 + o2)) * beta / n_pop
        inflow = lam * s
        return (
            -inflow,
            inflow - re * e1,
            re * (e1 - e2),
            f * re * e2 - ro * o1,
            ro * (o1 - o2),
            (1.0 - f) * re * e2 - ru * u1,
            ru * (u1 - u2),
            (1.0 - g) * ro * o2 + ru * u2,
            g * ro * o2,
        )

    half = 0.5 * h
    sixth = h / 6.0

    times = float(t0) + np.arange(n_days + 1, dtype=float)
    day_states = np.empty((n_days + 1, epimodel.N_COMPARTMENTS))
    quad_times = times[:-1, None] + np.arange(QUAD_POINTS_PER_DAY)[None, :] * _PANEL
    quad_states = np.empty((n_days, QUAD_POINTS_PER_DAY, epimodel.N_COMPARTMENTS))

    day_states[0] = _record(state, float(t0), neg_limit)
    for day in range(n_days):
        quad_states[day, 0] = day_states[day]
        for panel in range(_PANELS):
            for _ in range(n_sub):
                k1 = deriv(*state)
                y2 = tuple(state[i] + half * k1[i] for i in range(9))
                k2 = deriv(*y2)
                y3 = tuple(state[i] + half * k2[i] for i in range(9))
                k3 = deriv(*y3)
                y4 = tuple(state[i] + h * k3[i] for i in range(9))
                k4 = deriv(*y4)
                state = tuple(
                    state[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
                    for i in range(9)
                )
            t_here = float(quad_times[day, panel + 1])
            quad_states[day, panel + 1] = _record(state, t_here, neg_limit)
        day_states[day + 1] = quad_states[day, -1]

    return Trajectory(times=times, states=day_states, quad_times=quad_times, quad_states=quad_states)


def trapezoid_day_integral(values) -> np.ndarray:
    """Composite trapezoid over one day from exactly 10 equispaced samples (9 panels).

    Works on the last axis, so a (n_days, 10) array yields one integral per day.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != QUAD_POINTS_PER_DAY:
        raise ValueError(f"expected {QUAD_POINTS_PER_DAY} samples per day, got {v.shape[-1]}")
    return (0.5 * (v[..., 0] + v[..., -1]) + v[..., 1:-1].sum(axis=-1)) * _PANEL
