"""CSV ingestion, synthetic generation, the CLI surface and its artifacts."""
import datetime as dt
import json

import numpy as np
import pytest
from click.testing import CliRunner

from seqepi import cli
from seqepi.assimilation import ForecastResult, window_bounds, WindowConfig
from seqepi.cli import (
    DateGapError,
    RunConfig,
    SeriesFormatError,
    load_series,
    run_pipeline,
    score_forecasts,
    simulate_synthetic,
    write_forecast_csv,
    write_series,
)
from seqepi.epimodel import EpiParams, InitialConditions
from seqepi.observation import EpidemicSeries, ObsConfig

START = dt.date(2020, 3, 1)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadSeries:
    def test_well_formed(self, tmp_path):
        p = write_csv(tmp_path / "d.csv",
                      "date,cases,deaths\n2020-03-01,5,1\n2020-03-02,8,0\n2020-03-03,13,2\n")
        s = load_series(p)
        assert s.start_date == START
        np.testing.assert_array_equal(s.cases, [5, 8, 13])
        np.testing.assert_array_equal(s.deaths, [1, 0, 2])

    def test_whitespace_and_blank_lines_tolerated(self, tmp_path):
        p = write_csv(tmp_path / "d.csv",
                      "date,cases,deaths\n 2020-03-01 , 5 , 1 \n\n2020-03-02,8,0\n")
        s = load_series(p)
        assert len(s) == 2

    def test_negative_count_names_the_line(self, tmp_path):
        p = write_csv(tmp_path / "d.csv",
                      "date,cases,deaths\n2020-03-01,5,1\n2020-03-02,-8,0\n")
        with pytest.raises(SeriesFormatError, match="line 3"):
            load_series(p)

    def test_non_integer_count(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "date,cases,deaths\n2020-03-01,5.5,1\n")
        with pytest.raises(SeriesFormatError, match="cases"):
            load_series(p)

    def test_bad_date(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "date,cases,deaths\n03/01/2020,5,1\n")
        with pytest.raises(SeriesFormatError, match="date"):
            load_series(p)

    def test_wrong_field_count(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "date,cases,deaths\n2020-03-01,5\n")
        with pytest.raises(SeriesFormatError, match="3 fields"):
            load_series(p)

    def test_header_mismatch(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "day,cases,deaths\n2020-03-01,5,1\n")
        with pytest.raises(SeriesFormatError, match="line 1"):
            load_series(p)

    def test_no_data_rows(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "date,cases,deaths\n")
        with pytest.raises(SeriesFormatError, match="no data rows"):
            load_series(p)

    def test_decreasing_dates(self, tmp_path):
        p = write_csv(tmp_path / "d.csv",
                      "date,cases,deaths\n2020-03-02,5,1\n2020-03-01,1,0\n")
        with pytest.raises(SeriesFormatError, match="strictly increasing"):
            load_series(p)

    def test_gap_names_missing_dates(self, tmp_path):
        p = write_csv(tmp_path / "d.csv",
                      "date,cases,deaths\n2020-03-01,5,1\n2020-03-04,1,0\n")
        with pytest.raises(DateGapError, match="2020-03-02, 2020-03-03"):
            load_series(p)

    def test_round_trip(self, tmp_path):
        series = EpidemicSeries(START, np.array([3, 1, 4, 1, 5]), np.array([0, 0, 1, 0, 2]))
        p = tmp_path / "out.csv"
        write_series(series, p)
        back = load_series(p)
        assert back.start_date == series.start_date
        np.testing.assert_array_equal(back.cases, series.cases)
        np.testing.assert_array_equal(back.deaths, series.deaths)
        first = p.read_bytes()
        write_series(back, p)
        assert p.read_bytes() == first


TRUTH = EpiParams(beta=1.3, omega=0.45, g=0.12, N=1e6)
IC = InitialConditions(10.0, 10.0, 10.0, 1.0, 1.0)


class TestSimulateSynthetic:
    def test_noise_free_counts_are_rounded_scaled_means(self):
        cfg = ObsConfig(p_report=0.6)
        series, truth = simulate_synthetic(TRUTH, IC, 30, cfg, seed=0, noise=False)
        mu = np.asarray(truth["expected_cases"])
        np.testing.assert_array_equal(series.cases, np.rint(0.6 * mu).astype(np.int64))
        assert len(series) == 30
        assert truth["beta"] == 1.3 and truth["noise"] is False

    def test_identity_change_point_is_seamless(self):
        cfg = ObsConfig()
        plain, _ = simulate_synthetic(TRUTH, IC, 40, cfg, seed=3, noise=False)
        split, _ = simulate_synthetic(TRUTH, IC, 40, cfg, seed=3, noise=False,
                                      beta_changes=[(17, TRUTH.beta)])
        np.testing.assert_array_equal(plain.cases, split.cases)
        np.testing.assert_array_equal(plain.deaths, split.deaths)

    def test_change_point_only_affects_later_days(self):
        cfg = ObsConfig()
        plain, t0 = simulate_synthetic(TRUTH, IC, 40, cfg, seed=3, noise=False)
        bent, t1 = simulate_synthetic(TRUTH, IC, 40, cfg, seed=3, noise=False,
                                      beta_changes=[(20, 0.5)])
        mu0, mu1 = np.asarray(t0["expected_cases"]), np.asarray(t1["expected_cases"])
        np.testing.assert_array_equal(mu0[:20], mu1[:20])
        assert np.all(mu1[25:] < mu0[25:])

    def test_change_point_outside_span_rejected(self):
        with pytest.raises(ValueError):
            simulate_synthetic(TRUTH, IC, 40, ObsConfig(), seed=0, beta_changes=[(40, 1.0)])
        with pytest.raises(ValueError):
            simulate_synthetic(TRUTH, IC, 40, ObsConfig(), seed=0, beta_changes=[(0, 1.0)])

    def test_noisy_draws_are_seeded(self):
        a, _ = simulate_synthetic(TRUTH, IC, 30, ObsConfig(), seed=11)
        b, _ = simulate_synthetic(TRUTH, IC, 30, ObsConfig(), seed=11)
        c, _ = simulate_synthetic(TRUTH, IC, 30, ObsConfig(), seed=12)
        np.testing.assert_array_equal(a.cases, b.cases)
        assert not np.array_equal(a.cases, c.cases)

    def test_prior_central_values_give_growing_outbreak(self):
        # medians of each default prior family, run at metropolitan scale
        from scipy import stats
        beta = float(np.exp(1.0))
        omega = float(stats.beta.ppf(0.5, 1 + 1 / 6, 1 + 1 / 3))
        g = float(stats.beta.ppf(0.5, 1 + 1 / 6, 1 + 1 / 3))
        m = float(stats.gamma.ppf(0.5, 10.0))
        r = float(np.log(2.0))
        params = EpiParams(beta=beta, omega=omega, g=g, N=21_942_666.0)
        series, _ = simulate_synthetic(params, InitialConditions(m, m, m, r, r),
                                       60, ObsConfig(), seed=0, noise=False)
        assert series.cases[10] > 0
        assert series.cases[50] > series.cases[10] > 0
        assert series.deaths[50] > series.deaths[10]


@pytest.fixture(scope="module")
def toy_data(tmp_path_factory):
    """35 noisy days from known truth, enough for exactly one default window."""
    d = tmp_path_factory.mktemp("toy")
    series, truth = simulate_synthetic(TRUTH, IC, 35, ObsConfig(), seed=5)
    path = d / "toy.csv"
    write_series(series, path)
    return str(path), series, truth


FAST = ["--iters", "3000", "--burn-in", "1000", "--thin", "10", "--num-windows", "1"]


class TestRunCommand:
    def test_artifacts_and_summary(self, toy_data, tmp_path):
        path, series, _ = toy_data
        outdir = tmp_path / "arts"
        result = CliRunner().invoke(cli.main, [
            "run", "--data", path, "--outdir", str(outdir), "--n-pop", "1e6", *FAST,
            "--locality", "toytown",
        ])
        assert result.exit_code == 0, result.output
        assert "seed: 0" in result.output
        assert "window 0" in result.output

        names = sorted(p.name for p in outdir.iterdir())
        assert names == ["forecast_0.csv", "forecast_0_cases.svg",
                         "forecast_0_deaths.svg", "posterior_0.csv", "summary.json"]

        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["locality"] == "toytown"
        assert summary["seed"] == 0
        assert summary["failure"] is None
        assert summary["coordinate_order"] == [
            "E0", "O0", "U0", "R0", "D0", "beta", "omega", "g"]
        (w,) = summary["windows"]
        assert w["learning"] == [0, 28]
        assert w["forecast"] == [35, 49]
        assert len(w["forecast_dates"]) == 14
        assert w["forecast_dates"][0] == (START + dt.timedelta(days=35)).isoformat()
        assert list(w["params"]) == summary["coordinate_order"]
        for entry in w["params"].values():
            assert entry["q05"] <= entry["median"] <= entry["q95"]
        assert w["n_draws"] == 200

        # forecast rows: 14 days x 2 observables, ordered bands
        lines = (outdir / "forecast_0.csv").read_text().strip().split("\n")
        assert lines[0] == "date,observable,q05,q25,q50,q75,q95"
        assert len(lines) == 1 + 28
        for line in lines[1:]:
            fields = line.split(",")
            assert fields[1] in ("cases", "deaths")
            qs = [float(v) for v in fields[2:]]
            assert qs == sorted(qs) and qs[0] >= 0.0

        # posterior draws round-trip through repr; medians match the summary
        rows = (outdir / "posterior_0.csv").read_text().strip().split("\n")
        assert rows[0] == "e0,o0,u0,r0,d0,beta,omega,g"
        draws = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        assert draws.shape == (200, 8)
        assert float(np.median(draws[:, 5])) == w["params"]["beta"]["median"]

    def test_rerun_is_byte_identical(self, toy_data, tmp_path):
        path, _, _ = toy_data
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for outdir in (out_a, out_b):
            result = CliRunner().invoke(cli.main, [
                "run", "--data", path, "--outdir", str(outdir), "--n-pop", "1e6", *FAST,
                "--seed", "42",
            ])
            assert result.exit_code == 0, result.output
        for name in ("forecast_0.csv", "posterior_0.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        sa = json.loads((out_a / "summary.json").read_text())
        sb = json.loads((out_b / "summary.json").read_text())
        assert sa["windows"] == sb["windows"]

    def test_bad_data_exits_nonzero_with_error_artifact(self, tmp_path):
        p = write_csv(tmp_path / "bad.csv",
                      "date,cases,deaths\n2020-03-01,5,1\n2020-03-04,1,0\n")
        outdir = tmp_path / "arts"
        result = CliRunner().invoke(cli.main, [
            "run", "--data", p, "--outdir", str(outdir), "--n-pop", "1e6", *FAST,
        ])
        assert result.exit_code == 1
        payload = json.loads((outdir / "error.json").read_text())
        assert payload["error"] == "DateGapError"
        assert "2020-03-02" in payload["message"]

    def test_missing_data_file_is_a_usage_error(self, tmp_path):
        result = CliRunner().invoke(cli.main, [
            "run", "--data", str(tmp_path / "nope.csv"), "--outdir", str(tmp_path / "o"),
            "--n-pop", "1e6",
        ])
        assert result.exit_code != 0


class TestSimulateCommand:
    def test_deterministic_and_loadable(self, tmp_path):
        args = ["simulate", "--days", "25", "--n-pop", "1e6", "--beta", "1.3",
                "--omega", "0.45", "--g-frac", "0.12", "--seed", "9"]
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert CliRunner().invoke(cli.main, args + ["--out", str(out_a)]).exit_code == 0
        assert CliRunner().invoke(cli.main, args + ["--out", str(out_b)]).exit_code == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        assert len(load_series(out_a)) == 25

    def test_truth_record_matches_noise_free_counts(self, tmp_path):
        out, truth_out = tmp_path / "d.csv", tmp_path / "t.json"
        result = CliRunner().invoke(cli.main, [
            "simulate", "--days", "20", "--n-pop", "1e6", "--beta", "1.3",
            "--omega", "0.45", "--g-frac", "0.12", "--seed", "1", "--no-noise",
            "--p-report", "0.7", "--out", str(out), "--truth-out", str(truth_out),
        ])
        assert result.exit_code == 0, result.output
        series = load_series(out)
        truth = json.loads(truth_out.read_text())
        mu = np.asarray(truth["expected_cases"])
        np.testing.assert_array_equal(series.cases, np.rint(0.7 * mu).astype(np.int64))
        assert truth["obs"]["p_report"] == 0.7

    def test_beta_change_flag(self, tmp_path):
        out, truth_out = tmp_path / "d.csv", tmp_path / "t.json"
        result = CliRunner().invoke(cli.main, [
            "simulate", "--days", "30", "--n-pop", "1e6", "--beta", "1.3",
            "--omega", "0.45", "--g-frac", "0.12", "--seed", "1",
            "--beta-change", "10:0.9", "--beta-change", "20:0.6",
            "--out", str(out), "--truth-out", str(truth_out),
        ])
        assert result.exit_code == 0, result.output
        truth = json.loads(truth_out.read_text())
        assert truth["beta_changes"] == [[10, 0.9], [20, 0.6]]

    def test_malformed_beta_change_rejected(self, tmp_path):
        result = CliRunner().invoke(cli.main, [
            "simulate", "--days", "30", "--n-pop", "1e6", "--beta", "1.3",
            "--omega", "0.45", "--g-frac", "0.12", "--seed", "1",
            "--beta-change", "ten=0.9", "--out", str(tmp_path / "d.csv"),
        ])
        assert result.exit_code == 1
        assert "beta-change" in result.output


def fabricated_forecast(window, days, case_value, death_value, width=0.0):
    n = len(days)
    offsets = np.array([-width, -width / 2, 0.0, width / 2, width])

    def bands(value):
        return np.clip(value + offsets[:, None] * np.ones((1, n)), 0.0, None)

    return ForecastResult(window=window, days=np.asarray(days),
                          case_quantiles=bands(case_value),
                          death_quantiles=bands(death_value),
                          param_summary={}, n_dropped=0)


class TestScoring:
    def _series(self, n, cases, deaths):
        return EpidemicSeries(START, np.full(n, cases, dtype=np.int64),
                              np.full(n, deaths, dtype=np.int64))

    def test_degenerate_bands_on_the_truth(self, tmp_path):
        days = np.arange(5, 10)
        fc = fabricated_forecast(0, days, case_value=7.0, death_value=2.0)
        write_forecast_csv(tmp_path / "forecast_0.csv", fc, START)
        report = score_forecasts(tmp_path, self._series(20, 7, 2))
        agg = report["aggregate"]
        assert agg["n_obs"] == 10
        assert agg["coverage50"] == 1.0 and agg["coverage90"] == 1.0
        assert agg["mae_q50"] == 0.0
        assert agg["mean_width50"] == 0.0 and agg["mean_width90"] == 0.0

    def test_never_covering_bands(self, tmp_path):
        days = np.arange(5, 10)
        fc = fabricated_forecast(0, days, case_value=100.0, death_value=50.0, width=3.0)
        write_forecast_csv(tmp_path / "forecast_0.csv", fc, START)
        report = score_forecasts(tmp_path, self._series(20, 7, 2))
        agg = report["aggregate"]
        assert agg["coverage50"] == 0.0 and agg["coverage90"] == 0.0
        assert agg["mae_q50"] == pytest.approx((93 + 48) / 2)
        assert agg["mean_width90"] == pytest.approx(6.0)

    def test_windows_sorted_numerically(self, tmp_path):
        for k in (0, 2, 10):
            fc = fabricated_forecast(k, np.arange(k, k + 3), 5.0, 1.0)
            write_forecast_csv(tmp_path / f"forecast_{k}.csv", fc, START)
        report = score_forecasts(tmp_path, self._series(20, 5, 1))
        assert [w["k"] for w in report["windows"]] == [0, 2, 10]

    def test_partial_overlap_uses_shared_dates_only(self, tmp_path):
        days = np.arange(15, 25)
        fc = fabricated_forecast(0, days, 5.0, 1.0)
        write_forecast_csv(tmp_path / "forecast_0.csv", fc, START)
        report = score_forecasts(tmp_path, self._series(20, 5, 1))
        assert report["aggregate"]["n_obs"] == 10  # days 15..19, two observables

    def test_cli_score_and_report_file(self, tmp_path):
        days = np.arange(3, 8)
        fc = fabricated_forecast(0, days, 4.0, 1.0, width=2.0)
        fdir = tmp_path / "fc"
        fdir.mkdir()
        write_forecast_csv(fdir / "forecast_0.csv", fc, START)
        data = tmp_path / "held.csv"
        write_series(self._series(12, 4, 1), data)
        out = tmp_path / "report.json"
        result = CliRunner().invoke(cli.main, [
            "score", "--forecast-dir", str(fdir), "--data", str(data), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert report["aggregate"]["coverage90"] == 1.0
        assert json.loads(result.output) == report

    def test_no_overlap_fails(self, tmp_path):
        days = np.arange(100, 105)
        fc = fabricated_forecast(0, days, 5.0, 1.0)
        fdir = tmp_path / "fc"
        fdir.mkdir()
        write_forecast_csv(fdir / "forecast_0.csv", fc, START)
        data = tmp_path / "held.csv"
        write_series(self._series(12, 4, 1), data)
        result = CliRunner().invoke(cli.main, [
            "score", "--forecast-dir", str(fdir), "--data", str(data),
        ])
        assert result.exit_code == 1
        assert "ScoringError" in result.output

    def test_empty_dir_fails(self, tmp_path):
        fdir = tmp_path / "fc"
        fdir.mkdir()
        data = tmp_path / "held.csv"
        write_series(self._series(5, 4, 1), data)
        result = CliRunner().invoke(cli.main, [
            "score", "--forecast-dir", str(fdir), "--data", str(data),
        ])
        assert result.exit_code == 1


class TestRunPipelineLibrary:
    def test_returns_run_and_outdir(self, toy_data, tmp_path):
        path, _, _ = toy_data
        cfg = RunConfig(data=path, outdir=str(tmp_path / "o"), n_pop=1e6,
                        iters=3000, burn_in=1000, thin=10, seed=3)
        run, outdir = run_pipeline(cfg)
        assert run.completed
        assert outdir == tmp_path / "o"
        assert (outdir / "summary.json").exists()

    def test_config_window_bounds_agree_with_module(self):
        cfg = RunConfig(data="x", outdir="y", n_pop=1e6, t0=3, learn_days=20,
                        delay_days=5, forecast_days=10, advance_days=4)
        b = window_bounds(cfg.window_config(), 2)
        assert b.t_start == 3 + 8
        assert b.learning == (11, 31)
        assert b.forecast == (36, 46)
