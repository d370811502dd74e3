"""Command-line interface: data ingestion, synthetic generation, runs, scoring.

Data files are UTF-8 CSV with header `date,cases,deaths`, ISO dates on
consecutive days, and non-negative integer counts. A run writes, per window k:
forecast_k.csv, posterior_k.csv and one SVG per observable, plus a single
summary.json for the whole run.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import assimilation, epimodel, observation, odeint, priors
from .assimilation import (
    QUANTILES,
    SamplerSettings,
    SequentialRun,
    WindowConfig,
    window_bounds,
)
from .epimodel import EpiParams, InitialConditions, assemble_initial_state
from .observation import EpidemicSeries, ObsConfig

CSV_HEADER = ("date", "cases", "deaths")
FORECAST_HEADER = ("date", "observable", "q05", "q25", "q50", "q75", "q95")
POSTERIOR_HEADER = ("e0", "o0", "u0", "r0", "d0", "beta", "omega", "g")


class SeriesFormatError(ValueError):
    """Malformed data file; carries the 1-based line number."""

    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class DateGapError(ValueError):
    """Missing calendar days in the series."""

    def __init__(self, missing: list[dt.date]):
        shown = ", ".join(d.isoformat() for d in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        super().__init__(f"series has gaps, missing dates: {shown}{more}")
        self.missing = missing


class ScoringError(ValueError):
    """Forecasts and held-out data share no dates."""


def load_series(path) -> EpidemicSeries:
    """Read and validate a daily count CSV."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if line_no == 1:
                if tuple(c.strip() for c in row) != CSV_HEADER:
                    raise SeriesFormatError(line_no, f"expected header {','.join(CSV_HEADER)}")
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise SeriesFormatError(line_no, f"expected 3 fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise SeriesFormatError(line_no, f"bad ISO date {row[0]!r}") from None
            counts = []
            for name, raw in zip(("cases", "deaths"), row[1:]):
                try:
                    value = int(raw.strip())
                except ValueError:
                    raise SeriesFormatError(line_no, f"{name} must be an integer, got {raw!r}") from None
                if value < 0:
                    raise SeriesFormatError(line_no, f"{name} must be non-negative, got {value}")
                counts.append(value)
            rows.append((line_no, date, counts[0], counts[1]))
    if not rows:
        raise SeriesFormatError(1, "no data rows")

    missing: list[dt.date] = []
    for (ln_a, da, _, _), (ln_b, db, _, _) in zip(rows, rows[1:]):
        delta = (db - da).days
        if delta <= 0:
            raise SeriesFormatError(ln_b, f"dates must be strictly increasing, got {db} after {da}")
        if delta > 1:
            missing.extend(da + dt.timedelta(days=i) for i in range(1, delta))
    if missing:
        raise DateGapError(missing)

    return EpidemicSeries(
        start_date=rows[0][1],
        cases=np.array([r[2] for r in rows], dtype=np.int64),
        deaths=np.array([r[3] for r in rows], dtype=np.int64),
    )


def write_series(series: EpidemicSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i in range(len(series)):
            writer.writerow([series.date_of(i).isoformat(),
                             int(series.cases[i]), int(series.deaths[i])])


def simulate_synthetic(params: EpiParams, ic: InitialConditions, days: int, obs_cfg: ObsConfig,
                       seed: int, beta_changes=(), noise: bool = True,
                       start_date: dt.date = dt.date(2020, 3, 1),
                       step: float = odeint.DEFAULT_STEP):
    """Generate a synthetic daily series plus a ground-truth record.

    beta_changes is a list of (day, beta) pairs at integer days; beta switches
    at each change point, integrating the pieces in sequence.
    """
    changes = sorted((int(d), float(b)) for d, b in beta_changes)
    for d, _ in changes:
        if not (0 < d < days):
            raise ValueError(f"change-point day {d} outside (0, {days})")

    bounds = [0] + [d for d, _ in changes] + [days]
    betas = [params.beta] + [b for _, b in changes]

    x = assemble_initial_state(ic, params).as_array()
    mu_c_parts, mu_d_parts = [], []
    for (seg_start, seg_end), beta in zip(zip(bounds, bounds[1:]), betas):
        seg_params = dataclasses.replace(params, beta=beta)
        traj = odeint.integrate(x, seg_params, seg_start, seg_end, step=step)
        mu_c_parts.append(observation.expected_cases(traj, seg_params))
        mu_d_parts.append(observation.expected_deaths(traj))
        x = traj.states[-1]
    mu_c = np.concatenate(mu_c_parts)
    mu_d = np.concatenate(mu_d_parts)

    rng = np.random.default_rng(seed)
    if noise:
        cases = observation.sample_counts(rng, mu_c, obs_cfg)
        deaths = observation.sample_counts(rng, mu_d, obs_cfg)
    else:
        cases = np.rint(obs_cfg.p_report * mu_c).astype(np.int64)
        deaths = np.rint(obs_cfg.p_report * mu_d).astype(np.int64)

    series = EpidemicSeries(start_date=start_date, cases=cases, deaths=deaths)
    truth = {
        "n_pop": params.N,
        "beta": params.beta,
        "omega": params.omega,
        "g": params.g,
        "f": params.f,
        "k_obs": params.k_obs,
        "sigma1": params.sigma1,
        "sigma2": params.sigma2,
        "gamma": params.gamma,
        "initial": {"E0": ic.E0, "O0": ic.O0, "U0": ic.U0, "R0": ic.R0, "D0": ic.D0},
        "beta_changes": [[d, b] for d, b in changes],
        "obs": {"p_report": obs_cfg.p_report, "omega_over": obs_cfg.omega_over,
                "theta_over": obs_cfg.theta_over},
        "seed": seed,
        "noise": noise,
        "start_date": start_date.isoformat(),
        "expected_cases": [float(v) for v in mu_c],
        "expected_deaths": [float(v) for v in mu_d],
    }
    return series, truth


@dataclass
class RunConfig:
    """Everything one `run` invocation needs; mirrored by the CLI flags."""

    data: str
    outdir: str
    n_pop: float
    locality: str = "unknown"
    t0: int = 0
    learn_days: int = 28
    delay_days: int = 7
    forecast_days: int = 14
    advance_days: int = 7
    num_windows: int | None = None
    p_report: float = 1.0
    omega_over: float = 2.0
    theta_over: float = 0.01
    f_observed: float = 0.8
    k_obs: float = 1.0
    sigma1: float = 1.0 / 5.0
    sigma2: float = 1.0 / 14.0
    gamma: float = 1.0 / 7.0
    step: float = 0.1
    iters: int = 150_000
    burn_in: int = 50_000
    thin: int = 100
    kappa: float = 1.5
    seed: int = 0

    def base_params(self) -> EpiParams:
        # beta/omega/g placeholders; they are replaced per posterior draw
        return EpiParams(beta=1.0, omega=0.5, g=0.5, N=self.n_pop, f=self.f_observed,
                         k_obs=self.k_obs, sigma1=self.sigma1, sigma2=self.sigma2,
                         gamma=self.gamma)

    def window_config(self) -> WindowConfig:
        return WindowConfig(t0=self.t0, learn_days=self.learn_days,
                            delay_days=self.delay_days, forecast_days=self.forecast_days,
                            advance_days=self.advance_days, num_windows=self.num_windows)

    def obs_config(self) -> ObsConfig:
        return ObsConfig(p_report=self.p_report, omega_over=self.omega_over,
                         theta_over=self.theta_over)

    def sampler_settings(self) -> SamplerSettings:
        return SamplerSettings(iters=self.iters, burn_in=self.burn_in, thin=self.thin)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_forecast_csv(path, fc, start_date: dt.date) -> None:
    for qmat in (fc.case_quantiles, fc.death_quantiles):
        if np.any(np.diff(qmat, axis=0) < 0.0):
            raise ValueError("quantile rows must be non-decreasing")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FORECAST_HEADER)
        for name, qmat in (("cases", fc.case_quantiles), ("deaths", fc.death_quantiles)):
            for j, day in enumerate(fc.days):
                date = start_date + dt.timedelta(days=int(day))
                writer.writerow([date.isoformat(), name] + [f"{qmat[r, j]:.6f}" for r in range(5)])


def write_posterior_csv(path, post) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POSTERIOR_HEADER)
        for row in post.draws:
            writer.writerow([repr(float(v)) for v in row])


def _plot_window(series: EpidemicSeries, result, observable: str, locality: str, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # salt the generated element ids so re-runs are byte-identical
    matplotlib.rcParams["svg.hashsalt"] = "seqepi"

    fc = result.forecast
    qmat = fc.case_quantiles if observable == "cases" else fc.death_quantiles
    counts = series.cases if observable == "cases" else series.deaths
    b = result.bounds

    fig, ax = plt.subplots(figsize=(8, 4.5))
    shown = slice(b.t_start, min(b.forecast_end, len(series)))
    obs_days = np.arange(len(series))[shown]
    ax.plot(obs_days, counts[shown], "k.", ms=4, label="observed")
    ax.plot(fc.days, qmat[2], color="red", lw=1.5, label="median forecast")
    ax.fill_between(fc.days, qmat[1], qmat[3], color="red", alpha=0.35, lw=0, label="50% band")
    ax.fill_between(fc.days, qmat[0], qmat[4], color="red", alpha=0.15, lw=0, label="90% band")
    ax.axvline(b.forecast_start, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("day")
    ax.set_ylabel(f"daily {observable}")
    ax.set_title(f"{locality}: {observable}, window {result.k}")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def summarize_run(run: SequentialRun, cfg: RunConfig, series: EpidemicSeries) -> dict:
    windows = []
    for w in run.windows:
        params = {}
        for i, name in enumerate(priors.COORDS):
            col = w.posterior.draws[:, i]
            params[name] = {
                "median": float(np.median(col)),
                "q05": float(np.quantile(col, 0.05)),
                "q95": float(np.quantile(col, 0.95)),
            }
        iat = {name: float(w.posterior.iat[i]) for i, name in enumerate(priors.COORDS)}
        windows.append({
            "k": w.k,
            "t_start": w.bounds.t_start,
            "learning": list(w.bounds.learning),
            "delay": list(w.bounds.delay),
            "forecast": list(w.bounds.forecast),
            "forecast_dates": [
                (series.start_date + dt.timedelta(days=int(d))).isoformat()
                for d in w.forecast.days
            ],
            "params": params,
            "acceptance_rate": float(w.posterior.acceptance_rate),
            "iat": iat,
            "n_draws": int(w.posterior.n_draws),
            "n_forecast_dropped": int(w.forecast.n_dropped),
            "n_propagation_dropped": int(w.n_propagation_dropped),
        })
    summary = {
        "locality": cfg.locality,
        "seed": cfg.seed,
        "coordinate_order": list(priors.COORDS),
        "config": dataclasses.asdict(cfg),
        "windows": windows,
        "failure": run.failure,
    }
    return _json_safe(summary)


def run_pipeline(cfg: RunConfig) -> tuple[SequentialRun, Path]:
    """Load data, run all windows, write every artifact. Returns (run, outdir)."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    series = load_series(cfg.data)
    rng = np.random.default_rng(cfg.seed)
    run = assimilation.run_sequential(
        series, cfg.window_config(), cfg.base_params(), cfg.obs_config(),
        cfg.sampler_settings(), rng, kappa=cfg.kappa, step=cfg.step,
    )
    for w in run.windows:
        write_forecast_csv(outdir / f"forecast_{w.k}.csv", w.forecast, series.start_date)
        write_posterior_csv(outdir / f"posterior_{w.k}.csv", w.posterior)
        for observable in ("cases", "deaths"):
            _plot_window(series, w, observable, cfg.locality,
                         outdir / f"forecast_{w.k}_{observable}.svg")
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summarize_run(run, cfg, series), fh, indent=2)
        fh.write("\n")
    if run.failure is not None:
        with open(outdir / "error.json", "w", encoding="utf-8") as fh:
            json.dump(_json_safe(run.failure), fh, indent=2)
            fh.write("\n")
    return run, outdir


def score_forecasts(forecast_dir, series: EpidemicSeries) -> dict:
    """Compare saved forecast bands against observed data on shared dates."""
    fdir = Path(forecast_dir)
    files = sorted(fdir.glob("forecast_*.csv"),
                   key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise ScoringError(f"no forecast_*.csv files under {fdir}")

    by_date = {series.date_of(i): (int(series.cases[i]), int(series.deaths[i]))
               for i in range(len(series))}

    def metrics(rows):
        inside50 = inside90 = 0
        abs_err = width50 = width90 = 0.0
        for y, q in rows:
            inside50 += int(q[1] <= y <= q[3])
            inside90 += int(q[0] <= y <= q[4])
            abs_err += abs(y - q[2])
            width50 += q[3] - q[1]
            width90 += q[4] - q[0]
        n = len(rows)
        return {
            "n_obs": n,
            "coverage50": inside50 / n,
            "coverage90": inside90 / n,
            "mae_q50": abs_err / n,
            "mean_width50": width50 / n,
            "mean_width90": width90 / n,
        }

    per_window = []
    pooled = []
    for path in files:
        k = int(path.stem.split("_")[1])
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != FORECAST_HEADER:
                raise ScoringError(f"{path}: unexpected header {header}")
            for row in reader:
                date = dt.date.fromisoformat(row[0])
                if date not in by_date:
                    continue
                observed = by_date[date][0 if row[1] == "cases" else 1]
                q = [float(v) for v in row[2:7]]
                rows.append((observed, q))
        if rows:
            per_window.append({"k": k, **metrics(rows)})
            pooled.extend(rows)
    if not pooled:
        raise ScoringError("no forecast dates overlap the provided series")
    return {"windows": per_window, "aggregate": metrics(pooled)}


@click.group()
def main():
    """Sequential epidemic assimilation and forecasting."""


@main.command("run")
@click.option("--data", required=True, type=click.Path(exists=True), help="daily count CSV")
@click.option("--outdir", required=True, type=click.Path(), help="artifact directory")
@click.option("--n-pop", required=True, type=float, help="census population size")
@click.option("--locality", default="unknown", show_default=True)
@click.option("--t0", default=0, show_default=True, type=int)
@click.option("--learn-days", default=28, show_default=True, type=int)
@click.option("--delay-days", default=7, show_default=True, type=int)
@click.option("--forecast-days", default=14, show_default=True, type=int)
@click.option("--advance-days", default=7, show_default=True, type=int)
@click.option("--num-windows", default=None, type=int)
@click.option("--p-report", default=1.0, show_default=True, type=float)
@click.option("--omega-over", default=2.0, show_default=True, type=float)
@click.option("--theta-over", default=0.01, show_default=True, type=float)
@click.option("--f-observed", default=0.8, show_default=True, type=float)
@click.option("--k-obs", default=1.0, show_default=True, type=float)
@click.option("--sigma1", default=1.0 / 5.0, show_default=True, type=float)
@click.option("--sigma2", default=1.0 / 14.0, show_default=True, type=float)
@click.option("--gamma", default=1.0 / 7.0, show_default=True, type=float)
@click.option("--step", default=0.1, show_default=True, type=float)
@click.option("--iters", default=150_000, show_default=True, type=int)
@click.option("--burn-in", default=50_000, show_default=True, type=int)
@click.option("--thin", default=100, show_default=True, type=int)
@click.option("--kappa", default=1.5, show_default=True, type=float)
@click.option("--seed", default=None, type=int, help="RNG seed; defaults to 0 and is printed")
def run_cmd(**kwargs):
    """Run sequential assimilation over a data file and write artifacts."""
    seed = kwargs.pop("seed")
    if seed is None:
        seed = 0
    cfg = RunConfig(seed=seed, **kwargs)
    click.echo(f"seed: {cfg.seed}")
    try:
        run, outdir = run_pipeline(cfg)
    except (SeriesFormatError, DateGapError, ValueError, OSError) as err:
        _emit_cli_error(kwargs.get("outdir"), err)
        sys.exit(1)
    for w in run.windows:
        betas = w.forecast.param_summary["beta"]
        click.echo(
            f"window {w.k}: days [{w.bounds.t_start}, {w.bounds.learn_end}) fitted, "
            f"beta median {betas['median']:.3f} "
            f"[{betas['q05']:.3f}, {betas['q95']:.3f}], "
            f"acceptance {w.posterior.acceptance_rate:.3f}"
        )
    if run.failure is not None:
        click.echo(f"failed at window {run.failure['window']} "
                   f"({run.failure['stage']}): {run.failure['message']}", err=True)
        sys.exit(1)
    click.echo(f"artifacts written to {outdir}")


def _emit_cli_error(outdir, err) -> None:
    payload = {"error": type(err).__name__, "message": str(err)}
    click.echo(json.dumps(payload), err=True)
    if outdir:
        try:
            Path(outdir).mkdir(parents=True, exist_ok=True)
            with open(Path(outdir) / "error.json", "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        except OSError:
            pass


@main.command("simulate")
@click.option("--out", required=True, type=click.Path(), help="output CSV path")
@click.option("--truth-out", default=None, type=click.Path(), help="ground-truth JSON path")
@click.option("--days", required=True, type=int)
@click.option("--n-pop", required=True, type=float)
@click.option("--beta", required=True, type=float)
@click.option("--omega", required=True, type=float)
@click.option("--g-frac", required=True, type=float, help="death fraction g")
@click.option("--e0", default=10.0, show_default=True, type=float)
@click.option("--o0", default=10.0, show_default=True, type=float)
@click.option("--u0", default=10.0, show_default=True, type=float)
@click.option("--r0", default=1.0, show_default=True, type=float)
@click.option("--d0", default=1.0, show_default=True, type=float)
@click.option("--f-observed", default=0.8, show_default=True, type=float)
@click.option("--k-obs", default=1.0, show_default=True, type=float)
@click.option("--sigma1", default=1.0 / 5.0, show_default=True, type=float)
@click.option("--sigma2", default=1.0 / 14.0, show_default=True, type=float)
@click.option("--gamma", default=1.0 / 7.0, show_default=True, type=float)
@click.option("--p-report", default=1.0, show_default=True, type=float)
@click.option("--omega-over", default=2.0, show_default=True, type=float)
@click.option("--theta-over", default=0.01, show_default=True, type=float)
@click.option("--beta-change", "beta_changes", multiple=True,
              help="DAY:VALUE, may repeat")
@click.option("--noise/--no-noise", default=True, show_default=True)
@click.option("--start-date", default="2020-03-01", show_default=True)
@click.option("--seed", required=True, type=int)
def simulate_cmd(out, truth_out, days, n_pop, beta, omega, g_frac, e0, o0, u0, r0, d0,
                 f_observed, k_obs, sigma1, sigma2, gamma, p_report, omega_over,
                 theta_over, beta_changes, noise, start_date, seed):
    """Generate a synthetic outbreak series (and optional truth record)."""
    changes = []
    for raw in beta_changes:
        try:
            day_str, val_str = raw.split(":")
            changes.append((int(day_str), float(val_str)))
        except ValueError:
            click.echo(f"bad --beta-change {raw!r}, expected DAY:VALUE", err=True)
            sys.exit(1)
    params = EpiParams(beta=beta, omega=omega, g=g_frac, N=n_pop, f=f_observed,
                       k_obs=k_obs, sigma1=sigma1, sigma2=sigma2, gamma=gamma)
    ic = InitialConditions(E0=e0, O0=o0, U0=u0, R0=r0, D0=d0)
    obs_cfg = ObsConfig(p_report=p_report, omega_over=omega_over, theta_over=theta_over)
    series, truth = simulate_synthetic(
        params, ic, days, obs_cfg, seed, beta_changes=changes, noise=noise,
        start_date=dt.date.fromisoformat(start_date),
    )
    write_series(series, out)
    if truth_out:
        with open(truth_out, "w", encoding="utf-8") as fh:
            json.dump(_json_safe(truth), fh, indent=2)
            fh.write("\n")
    click.echo(f"wrote {len(series)} days to {out}")


@main.command("score")
@click.option("--forecast-dir", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True),
              help="held-out daily count CSV")
@click.option("--out", default=None, type=click.Path(), help="write the report JSON here")
def score_cmd(forecast_dir, data, out):
    """Score saved forecast bands against observed data."""
    try:
        series = load_series(data)
        report = score_forecasts(forecast_dir, series)
    except (SeriesFormatError, DateGapError, ScoringError) as err:
        click.echo(json.dumps({"error": type(err).__name__, "message": str(err)}), err=True)
        sys.exit(1)
    text = json.dumps(_json_safe(report), indent=2)
    click.echo(text)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


if __name__ == "__main__":
    main()
