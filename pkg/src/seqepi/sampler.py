"""Self-adjusting two-point MCMC sampler (t-walk) and chain diagnostics.

The sampler evolves a pair of points (x, x') under the product target
pi(x) pi(x'). Each iteration picks one of four scale-free kernels (walk,
traverse, blow, hop), picks which point to move, and perturbs a random
coordinate subset. No step-size tuning is required.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

WALK, TRAVERSE, BLOW, HOP = range(4)
KERNEL_PROBS = (0.4918, 0.4918, 0.0082, 0.0082)
WALK_APERTURE = 1.5
TRAVERSE_APERTURE = 6.0

_LOG_2PI = math.log(2.0 * math.pi)


class InitializationFailed(RuntimeError):
    """No finite-density starting pair could be found."""


@dataclass
class PosteriorSamples:
    """Retained draws of the primary chain point after burn-in and thinning."""

    draws: np.ndarray        # (n_kept, dim)
    log_posts: np.ndarray    # (n_kept,)
    acceptance_rate: float
    iat: np.ndarray          # (dim,) estimated on the retained chain; nan if too short

    def __post_init__(self):
        if self.draws.ndim != 2 or self.log_posts.shape != (self.draws.shape[0],):
            raise ValueError("draws/log_posts shapes are inconsistent")
        if not np.all(np.isfinite(self.log_posts)):
            raise ValueError("retained draws must all have finite log-posterior")

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])


def default_move_prob(dim: int) -> float:
    """Per-coordinate inclusion probability for the update subset, min(1, 4/dim)."""
    return min(1.0, 4.0 / dim)


def _choose_kernel(rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(KERNEL_PROBS):
        acc += p
        if u < acc:
            return i
    return len(KERNEL_PROBS) - 1


def _sim_walk(rng, cur, oth, pphi):
    phi = rng.random(cur.size) < pphi
    u = rng.random(cur.size)
    a = WALK_APERTURE
    # z has density proportional to 1/sqrt(1+z) on [-a/(1+a), a]; ratio terms cancel
    z = (a / (1.0 + a)) * (a * u * u + 2.0 * u - 1.0)
    y = cur + (cur - oth) * np.where(phi, z, 0.0)
    return y, int(phi.sum())


def _sim_beta_factor(rng) -> float:
    a = TRAVERSE_APERTURE
    if rng.random() < (a - 1.0) / (2.0 * a):
        return math.exp(math.log(rng.random()) / (a + 1.0))
    return math.exp(math.log(rng.random()) / (1.0 - a))


def _sim_traverse(rng, cur, oth, pphi, beta_factor):
    phi = rng.random(cur.size) < pphi
    y = np.where(phi, oth + beta_factor * (oth - cur), cur)
    return y, int(phi.sum())


def _sim_blow(rng, cur, oth, pphi):
    phi = rng.random(cur.size) < pphi
    sigma = np.max(np.where(phi, np.abs(oth - cur), 0.0))
    y = np.where(phi, oth + sigma * rng.standard_normal(cur.size), cur)
    return y, phi


def _blow_energy(h, cur, oth, phi):
    # minus log density of proposing h from cur: Gaussian centred at the
    # helper point oth with scale max over the subset of |oth - cur|
    nphi = int(phi.sum())
    if nphi == 0:
        return 0.0
    sigma = np.max(np.where(phi, np.abs(oth - cur), 0.0))
    sq = float(np.sum(np.where(phi, (h - oth) ** 2, 0.0)))
    return 0.5 * nphi * _LOG_2PI + nphi * math.log(sigma) + 0.5 * sq / (sigma * sigma)


def _sim_hop(rng, cur, oth, pphi):
    phi = rng.random(cur.size) < pphi
    sigma = np.max(np.where(phi, np.abs(oth - cur), 0.0)) / 3.0
    y = np.where(phi, cur + sigma * rng.standard_normal(cur.size), cur)
    return y, phi


def _hop_energy(h, cur, oth, phi):
    # minus log density of proposing h from cur: Gaussian centred at cur
    # with scale max over the subset of |oth - cur| / 3
    nphi = int(phi.sum())
    if nphi == 0:
        return 0.0
    sigma = np.max(np.where(phi, np.abs(oth - cur), 0.0)) / 3.0
    sq = float(np.sum(np.where(phi, (h - cur) ** 2, 0.0)))
    return 0.5 * nphi * _LOG_2PI + nphi * math.log(sigma) + 0.5 * sq / (sigma * sigma)


def twalk_move(rng, target, x, lpx, xp, lpxp, pphi, kernel=None, update_primary=None):
    """One product-chain transition.

    Returns (x, lpx, xp, lpxp, accepted). kernel and update_primary can be
    forced for testing; by default they are drawn here.
    """
    if kernel is None:
        kernel = _choose_kernel(rng)
    if update_primary is None:
        update_primary = rng.random() < 0.5
    if update_primary:
        cur, lp_cur, oth = x, lpx, xp
    else:
        cur, lp_cur, oth = xp, lpxp, x

    log_corr = 0.0
    valid = True
    if kernel == WALK:
        y, nphi = _sim_walk(rng, cur, oth, pphi)
        valid = bool(np.all(np.abs(y - oth) > 0.0))
    elif kernel == TRAVERSE:
        b = _sim_beta_factor(rng)
        y, nphi = _sim_traverse(rng, cur, oth, pphi, b)
        if nphi > 0:
            log_corr = (nphi - 2.0) * math.log(b)
    elif kernel == BLOW:
        y, phi = _sim_blow(rng, cur, oth, pphi)
        valid = bool(np.all(y != oth))
        if valid:
            log_corr = _blow_energy(y, cur, oth, phi) - _blow_energy(cur, y, oth, phi)
    elif kernel == HOP:
        y, phi = _sim_hop(rng, cur, oth, pphi)
        valid = bool(np.all(y != oth))
        if valid:
            log_corr = _hop_energy(y, cur, oth, phi) - _hop_energy(cur, y, oth, phi)
    else:
        raise ValueError(f"unknown kernel {kernel}")

    accepted = False
    if valid:
        lp_y = float(target(y))
        if lp_y > -math.inf:
            log_a = (lp_y - lp_cur) + log_corr
            if math.log(rng.random()) < log_a:
                cur, lp_cur = y, lp_y
                accepted = True

    if update_primary:
        return cur, lp_cur, xp, lpxp, accepted
    return x, lpx, cur, lp_cur, accepted


def run_mcmc(
    target,
    init_a,
    init_b,
    iters: int = 150_000,
    burn_in: int = 50_000,
    thin: int = 100,
    *,
    rng: np.random.Generator,
    move_prob: float | None = None,
) -> PosteriorSamples:
    """Sample `target` (a log-density up to a constant) from two starting points.

    The starting points must differ in every coordinate and both must have
    finite target value. Only the primary chain point is retained, after
    burn_in iterations and keeping every thin-th.
    """
    a = np.array(init_a, dtype=float)
    b = np.array(init_b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("init_a and init_b must be 1-d arrays of equal length")
    if np.any(a == b):
        raise ValueError("starting points must differ in every coordinate")
    if not (iters > burn_in >= 0):
        raise ValueError(f"need iters > burn_in >= 0, got {iters}, {burn_in}")
    if thin < 1:
        raise ValueError(f"thin must be at least 1, got {thin}")

    lpa = float(target(a))
    lpb = float(target(b))
    if not (np.isfinite(lpa) and np.isfinite(lpb)):
        raise InitializationFailed("both starting points need finite log-density")

    dim = a.size
    pphi = default_move_prob(dim) if move_prob is None else float(move_prob)
    n_keep = (iters - burn_in) // thin
    draws = np.empty((n_keep, dim))
    lps = np.empty(n_keep)
    kept = 0
    accepted = 0

    x, lpx, xp, lpxp = a, lpa, b, lpb
    for i in range(1, iters + 1):
        x, lpx, xp, lpxp, acc = twalk_move(rng, target, x, lpx, xp, lpxp, pphi)
        if acc:
            accepted += 1
        j = i - burn_in
        if j > 0 and j % thin == 0 and kept < n_keep:
            draws[kept] = x
            lps[kept] = lpx
            kept += 1

    iat = np.full(dim, np.nan)
    if n_keep >= 1000:
        for c in range(dim):
            try:
                iat[c] = estimate_iat(draws[:, c])
            except ValueError:
                pass
    return PosteriorSamples(
        draws=draws,
        log_posts=lps,
        acceptance_rate=accepted / iters,
        iat=iat,
    )


def sample_initial_pair(target, draw_fn, max_tries: int = 1000):
    """Draw two finite-density, componentwise-distinct starting points.

    draw_fn() must return a fresh random vector (typically a prior draw).
    Returns (a, lpa, b, lpb); raises InitializationFailed after max_tries.
    """

    def find_one():
        for _ in range(max_tries):
            v = np.asarray(draw_fn(), dtype=float)
            lp = float(target(v))
            if np.isfinite(lp):
                return v, lp
        raise InitializationFailed(f"no finite-density start found in {max_tries} draws")

    a, lpa = find_one()
    for _ in range(max_tries):
        b, lpb = find_one()
        if np.all(a != b):
            return a, lpa, b, lpb
    raise InitializationFailed("could not find a componentwise-distinct pair")


def estimate_iat(chain) -> float:
    """Integrated autocorrelation time via the initial-positive-sequence rule.

    Sums empirical autocorrelations in adjacent pairs until a pair sum turns
    non-positive. Needs at least 1000 samples; raises on a degenerate chain.
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim != 1:
        raise ValueError("chain must be 1-d")
    n = x.size
    if n < 1000:
        raise ValueError(f"need at least 1000 samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("chain contains non-finite values")
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0.0:
        raise ValueError("chain has zero variance; IAT is undefined")
    rho = acov / acov[0]
    tau = -1.0
    for m in range(n // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return max(tau, 1.0)
