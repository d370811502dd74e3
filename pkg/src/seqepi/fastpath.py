"""Hot-path numerics.

Two performance-oriented re-implementations of the reference integration and
likelihood code, kept numerically equivalent by tests:

* window_loglik: a JIT-compiled fused RK4 + quadrature + count-likelihood
  evaluation, called once per MCMC proposal.
* integrate_batch: a vectorised RK4 over a whole matrix of posterior draws,
  used for prior propagation and forecasting.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from . import epimodel
from .epimodel import EpiParams
from .observation import MEAN_FLOOR, ObsConfig, _POISSON_SWITCH
from .odeint import NEG_TOL_FRACTION, _PANEL, _PANELS, substeps_per_panel


@njit(cache=True)
def _nb_logpmf_fast(y, mean, p_report, omega_over, theta_over):
    m = p_report * mean
    if m < MEAN_FLOOR:
        m = MEAN_FLOOR
    v = omega_over * m + theta_over * m * m
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


@njit(cache=True)
def _rhs_fill(x, dx, beta, g, f, k_obs, re, ro, ru, n_pop):
    lam = (x[5] + x[6] + k_obs * (x[3] + x[4])) * beta / n_pop
    inflow = lam * x[0]
    dx[0] = -inflow
    dx[1] = inflow - re * x[1]
    dx[2] = re * (x[1] - x[2])
    dx[3] = f * re * x[2] - ro * x[3]
    dx[4] = ro * (x[3] - x[4])
    dx[5] = (1.0 - f) * re * x[2] - ru * x[5]
    dx[6] = ru * (x[5] - x[6])
    dx[7] = (1.0 - g) * ro * x[4] + ru * x[6]
    dx[8] = g * ro * x[4]


@njit(cache=True)
def _window_loglik_core(
    e0, o0, u0, r0, d0, beta, omega, g,
    f, k_obs, sigma1, sigma2, gamma_rate, n_pop,
    cases, deaths, n_sub,
    p_report, omega_over, theta_over,
):
    s0 = omega * n_pop - (e0 + o0 + u0 + r0)
    if s0 < 0.0:
        return -np.inf

    x = np.empty(9)
    x[0] = s0
    x[1] = 0.5 * e0
    x[2] = 0.5 * e0
    x[3] = 0.5 * o0
    x[4] = 0.5 * o0
    x[5] = 0.5 * u0
    x[6] = 0.5 * u0
    x[7] = r0
    x[8] = d0

    re = 2.0 * sigma1
    ro = 2.0 * sigma2
    ru = 2.0 * gamma_rate
    h = _PANEL / n_sub
    half = 0.5 * h
    sixth = h / 6.0
    neg_limit = NEG_TOL_FRACTION * n_pop
    flux_coeff = f * re

    k1 = np.empty(9)
    k2 = np.empty(9)
    k3 = np.empty(9)
    k4 = np.empty(9)
    tmp = np.empty(9)

    n_days = cases.shape[0]
    total = 0.0
    d_prev = x[8] if x[8] > 0.0 else 0.0
    for day in range(n_days):
        e2c = x[2] if x[2] > 0.0 else 0.0
        flux_acc = 0.5 * flux_coeff * e2c
        for panel in range(_PANELS):
            for _ in range(n_sub):
                _rhs_fill(x, k1, beta, g, f, k_obs, re, ro, ru, n_pop)
                for i in range(9):
                    tmp[i] = x[i] + half * k1[i]
                _rhs_fill(tmp, k2, beta, g, f, k_obs, re, ro, ru, n_pop)
                for i in range(9):
                    tmp[i] = x[i] + half * k2[i]
                _rhs_fill(tmp, k3, beta, g, f, k_obs, re, ro, ru, n_pop)
                for i in range(9):
                    tmp[i] = x[i] + h * k3[i]
                _rhs_fill(tmp, k4, beta, g, f, k_obs, re, ro, ru, n_pop)
                for i in range(9):
                    x[i] = x[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
            for i in range(9):
                if not np.isfinite(x[i]) or x[i] < -neg_limit:
                    return -np.inf
            e2c = x[2] if x[2] > 0.0 else 0.0
            w = 1.0 if panel < _PANELS - 1 else 0.5
            flux_acc += w * flux_coeff * e2c
        mu_c = flux_acc * _PANEL
        d_now = x[8] if x[8] > 0.0 else 0.0
        mu_d = d_now - d_prev
        d_prev = d_now
        total += _nb_logpmf_fast(float(cases[day]), mu_c, p_report, omega_over, theta_over)
        total += _nb_logpmf_fast(float(deaths[day]), mu_d, p_report, omega_over, theta_over)
    return total


def window_loglik(v, base: EpiParams, cases, deaths, cfg: ObsConfig, step: float = 0.1) -> float:
    """Log-likelihood of one learning window for an inference vector.

    v = (E0, O0, U0, R0, D0, beta, omega, g). Returns -inf for infeasible
    initial masses or diverging dynamics instead of raising, so it can sit
    directly inside an MCMC target.
    """
    v = np.asarray(v, dtype=float)
    return float(
        _window_loglik_core(
            v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7],
            base.f, base.k_obs, base.sigma1, base.sigma2, base.gamma, base.N,
            np.ascontiguousarray(cases, dtype=np.int64),
            np.ascontiguousarray(deaths, dtype=np.int64),
            substeps_per_panel(step),
            cfg.p_report, cfg.omega_over, cfg.theta_over,
        )
    )


def assemble_states(draws: np.ndarray, base: EpiParams) -> np.ndarray:
    """Vectorised day-zero states for a matrix of inference vectors.

    Assumes every row is feasible (S >= 0), which holds for retained
    posterior draws.
    """
    d = np.asarray(draws, dtype=float)
    m = d.shape[0]
    x0 = np.empty((m, 9))
    x0[:, 0] = d[:, 6] * base.N - (d[:, 0] + d[:, 1] + d[:, 2] + d[:, 3])
    x0[:, 1] = 0.5 * d[:, 0]
    x0[:, 2] = 0.5 * d[:, 0]
    x0[:, 3] = 0.5 * d[:, 1]
    x0[:, 4] = 0.5 * d[:, 1]
    x0[:, 5] = 0.5 * d[:, 2]
    x0[:, 6] = 0.5 * d[:, 2]
    x0[:, 7] = d[:, 3]
    x0[:, 8] = d[:, 4]
    return x0


def integrate_batch(x0, beta, g, base: EpiParams, n_days: int, step: float = 0.1):
    """RK4 over a batch of draws, each with its own state, beta and g.

    Returns (day_states (m, n_days+1, 9), case_flux (m, n_days), ok (m,)).
    Rows flagged not-ok diverged (non-finite or badly negative) and carry
    garbage values; callers must mask them out.
    """
    x = np.array(x0, dtype=float)
    if x.ndim != 2 or x.shape[1] != epimodel.N_COMPARTMENTS:
        raise ValueError(f"x0 must be (m, {epimodel.N_COMPARTMENTS})")
    m = x.shape[0]
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (m,))
    g = np.broadcast_to(np.asarray(g, dtype=float), (m,))
    if n_days < 1:
        raise ValueError(f"n_days must be at least 1, got {n_days}")
    n_sub = substeps_per_panel(step)
    h = _PANEL / n_sub

    f = base.f
    k_obs = base.k_obs
    re = base.stage_rate_e
    ro = base.stage_rate_o
    ru = base.stage_rate_u
    n_pop = base.N
    neg_limit = NEG_TOL_FRACTION * n_pop
    flux_coeff = f * re

    def rhs(a):
        lam = (a[:, 5] + a[:, 6] + k_obs * (a[:, 3] + a[:, 4])) * beta / n_pop
        out = np.empty_like(a)
        inflow = lam * a[:, 0]
        out[:, 0] = -inflow
        out[:, 1] = inflow - re * a[:, 1]
        out[:, 2] = re * (a[:, 1] - a[:, 2])
        out[:, 3] = f * re * a[:, 2] - ro * a[:, 3]
        out[:, 4] = ro * (a[:, 3] - a[:, 4])
        out[:, 5] = (1.0 - f) * re * a[:, 2] - ru * a[:, 5]
        out[:, 6] = ru * (a[:, 5] - a[:, 6])
        out[:, 7] = (1.0 - g) * ro * a[:, 4] + ru * a[:, 6]
        out[:, 8] = g * ro * a[:, 4]
        return out

    day_states = np.empty((m, n_days + 1, epimodel.N_COMPARTMENTS))
    case_flux = np.empty((m, n_days))
    ok = np.ones(m, dtype=bool)

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        ok &= np.all(np.isfinite(x), axis=1) & np.all(x >= -neg_limit, axis=1)
        day_states[:, 0] = np.maximum(x, 0.0)
        for day in range(n_days):
            acc = 0.5 * flux_coeff * np.maximum(x[:, 2], 0.0)
            for panel in range(_PANELS):
                for _ in range(n_sub):
                    k1 = rhs(x)
                    k2 = rhs(x + (0.5 * h) * k1)
                    k3 = rhs(x + (0.5 * h) * k2)
                    k4 = rhs(x + h * k3)
                    x = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
                w = 1.0 if panel < _PANELS - 1 else 0.5
                acc += w * flux_coeff * np.maximum(x[:, 2], 0.0)
            case_flux[:, day] = acc * _PANEL
            ok &= np.all(np.isfinite(x), axis=1) & np.all(x >= -neg_limit, axis=1)
            day_states[:, day + 1] = np.maximum(x, 0.0)
        ok &= np.all(np.isfinite(case_flux), axis=1)
    return day_states, case_flux, ok
