import json
import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from rstools.errors import ParameterError, InsufficientDataError, ReplicationError
from rstools.functionals import TestFunction, parse_function
from rstools import harness
from rstools.harness import (ExperimentConfig, ExperimentReport, derive_seed, ks_test, rate_fit,
                             clt_hypothesis_holds, run_experiment, run_lln, run_clt, run_coverage, run_m_ratio,
                             STREAM_GRID, STREAM_PATH)
from rstools.pathsim import ModelSpec
from rstools.sampling import SamplingScheme


def make_config(**overrides):
    settings = dict(
        scheme=SamplingScheme("exponential", 1.0),
        model=ModelSpec(sigma=1.0),
        f=parse_function("x^2"),
        n_grid=(100, 200, 400),
        replications=20,
        master_seed=42,
        mode="lln",
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(42, 1000, 3, STREAM_PATH) == derive_seed(42, 1000, 3, STREAM_PATH)
    seeds = {derive_seed(42, n, rep, stream) for n in (100, 200) for rep in range(5)
             for stream in (STREAM_GRID, STREAM_PATH)}
    assert len(seeds) == 20


def test_ks_test_accepts_normal_samples():
    samples = np.random.default_rng(0).standard_normal(2000)
    d, p = ks_test(samples)
    assert d == pytest.approx(stats.kstest(samples, "norm").statistic)
    assert p > 0.01


def test_ks_test_rejects_shifted_samples():
    samples = np.random.default_rng(1).standard_normal(2000) + 0.5
    _, p = ks_test(samples)
    assert p < 1e-6


def test_ks_test_on_exact_quantiles():
    samples = stats.norm.ppf((np.arange(1, 10_001) - 0.5) / 10_000)
    d, p = ks_test(samples)
    assert d < 1e-3
    assert p > 0.999


def test_ks_test_on_point_mass():
    d, p = ks_test(np.zeros(2000))
    assert d == pytest.approx(0.5)
    assert p < 1e-10


def test_ks_test_needs_samples():
    with pytest.raises(InsufficientDataError):
        ks_test([0.1, 0.2])


def test_rate_fit_recovers_power_law():
    pairs = [(h, 3.0 * h ** 0.5) for h in (0.1, 0.01, 0.001, 0.0001)]
    slope, intercept, r2 = rate_fit(pairs)
    assert slope == pytest.approx(0.5)
    assert intercept == pytest.approx(math.log(3.0))
    assert r2 == pytest.approx(1.0)


@pytest.mark.parametrize("pairs", [
    [(0.1, 1.0), (0.01, 0.5)],
    [(0.1, 1.0), (0.01, 0.0), (0.001, 0.1)],
    [(0.1, 1.0), (0.1, 0.5), (0.001, 0.1)],
])
def test_rate_fit_rejects(pairs):
    with pytest.raises(ParameterError):
        rate_fit(pairs)


@pytest.mark.parametrize("text, expected", [
    ("x^2", True),
    ("x1^2*x2^2", True),
    ("|x|^3", True),
    ("x1*x2", True),
    ("|x1|*x2", False),
    ("x^3", False),
])
def test_clt_hypothesis(text, expected):
    assert clt_hypothesis_holds(parse_function(text)) == expected


@pytest.mark.parametrize("overrides", [
    {"mode": "bootstrap"},
    {"replications": 0},
    {"horizon": 0.0},
    {"n_grid": ()},
    {"n_grid": (200, 100)},
    {"max_step_frac": 0.0},
    {"ucp_checkpoints": -1},
])
def test_invalid_config(overrides):
    with pytest.raises(ParameterError):
        make_config(**overrides)


def test_lln_report_structure():
    report = run_lln(make_config(ucp_checkpoints=4), threads=2)
    body = report.body()
    assert list(body) == ["config", "per_n", "ks", "rate_fit", "warnings"]
    assert [s["n"] for s in body["per_n"]] == [100, 200, 400]
    assert all(len(s["values"]) == 20 for s in body["per_n"])
    assert all(s["sup_rms"] >= 0 for s in body["per_n"])
    assert set(report.rate_fit) == {"slope", "intercept", "r2"}
    assert body["config"]["scheme"]["M"] == 1.0


def test_lln_error_shrinks():
    report = run_lln(make_config(n_grid=(100, 10000), replications=40), threads=2)
    assert report.per_n[1].rms < report.per_n[0].rms
    # sqrt(3 / n) at n = 10000
    assert report.per_n[1].rms < 0.05


def test_report_is_independent_of_thread_count():
    config = make_config(mode="clt", n_grid=(200,), replications=30)
    assert run_clt(config, threads=1).to_json() == run_clt(config, threads=4).to_json()


def test_clt_report_carries_limit_statistics():
    report = run_clt(make_config(mode="clt", n_grid=(300,), replications=40), threads=2)
    stats_n = report.per_n[0]
    assert report.ks == stats_n.ks
    assert sum(stats_n.histogram["counts"]) <= 40
    assert len(stats_n.histogram["edges"]) == 41
    assert stats_n.mean_rprime_integral == pytest.approx(3.0, rel=0.1)
    assert report.warnings == []


def test_clt_warns_outside_hypotheses():
    report = run_clt(make_config(mode="clt", f=parse_function("x^3"), n_grid=(100,), replications=10), 1)
    assert len(report.warnings) == 1


def test_bypass_mode_draws_standard_normals():
    report = run_clt(make_config(mode="clt", bypass=True, n_grid=(1000,), replications=500), threads=2)
    stats_n = report.per_n[0]
    assert stats_n.ks["p_value"] > 0.001
    assert stats_n.variance == pytest.approx(1.0, rel=0.2)


def test_coverage_run():
    report = run_coverage(make_config(mode="coverage", n_grid=(500,), replications=40), threads=2)
    assert 0.0 <= report.per_n[0].coverage <= 1.0
    assert report.per_n[0].coverage > 0.75


def test_m_ratio_limit():
    result = run_m_ratio(make_config(mode="clt", n_grid=(200,), replications=20), threads=2)
    assert result["expected_ratio"] == pytest.approx(1.5, rel=0.02)
    assert result["ratio"] > 0


def test_mode_mismatch():
    with pytest.raises(ParameterError):
        run_clt(make_config(mode="lln"))
    with pytest.raises(ParameterError):
        run_lln(make_config(mode="coverage"))


def test_replication_failure_carries_coordinates():
    def explode(x):
        raise ParameterError("bad evaluation")

    f = TestFunction.general(explode, k=1, growth_p=1.0, even_each=True)
    with pytest.raises(ReplicationError) as info:
        run_experiment(make_config(f=f, n_grid=(100,), replications=3), threads=1)
    assert info.value.n == 100
    assert info.value.rep == 0
    assert info.value.grid_seed == derive_seed(42, 100, 0, STREAM_GRID)
    assert info.value.path_seed == derive_seed(42, 100, 0, STREAM_PATH)
    assert str(info.value.grid_seed) in str(info.value)


def test_report_files(tmp_path):
    report = run_lln(make_config(n_grid=(100,), replications=5), threads=1)
    report.write_json(tmp_path / "report.json")
    report.write_stats_csv(tmp_path / "stats.csv")
    with open(tmp_path / "report.json") as f:
        body = json.load(f)
    assert set(body) == {"config", "per_n", "ks", "rate_fit", "warnings"}
    frame = pd.read_csv(tmp_path / "stats.csv")
    assert list(frame.columns) == ["n", "rep", "value"]
    assert frame["rep"].tolist() == [0, 1, 2, 3, 4]
    np.testing.assert_allclose(frame["value"], report.per_n[0].values)


def test_non_finite_values_become_null():
    report = ExperimentReport(config={"x": float("nan")}, per_n=[], ks={"D": float("inf"), "p_value": 0.0})
    body = json.loads(report.to_json())
    assert body["config"]["x"] is None
    assert body["ks"]["D"] is None


def test_limit_warnings_reach_the_report(monkeypatch):
    real = harness.limit_integrals

    def flagged(f, path, M):
        lq = real(f, path, M)
        return replace(lq, warnings=lq.warnings + ["R' integrand below -1e-10 at 3 fine points"])

    monkeypatch.setattr(harness, "limit_integrals", flagged)
    report = run_clt(make_config(mode="clt", n_grid=(100,), replications=10), threads=2)
    assert len(report.warnings) == 10
    assert report.warnings[0] == "n=100 rep=0: R' integrand below -1e-10 at 3 fine points"
    assert report.warnings[-1].startswith("n=100 rep=9: ")
    assert report.body()["warnings"] == report.warnings
    lln = run_lln(make_config(n_grid=(100, 200, 400), replications=2), threads=1)
    assert [w.split(":")[0] for w in lln.warnings] == [f"n={n} rep={rep}" for n in (100, 200, 400)
                                                       for rep in (0, 1)]


def test_grid_and_path_draw_from_separate_streams(monkeypatch):
    seen = {"grid": [], "path": []}
    real_grid, real_path = harness.gen_sampling_times, harness.simulate_path

    def grid_spy(scheme, horizon, rng_seed):
        seen["grid"].append(rng_seed)
        return real_grid(scheme, horizon, rng_seed)

    def path_spy(model, grid, max_step, rng_seed):
        seen["path"].append(rng_seed)
        return real_path(model, grid, max_step, rng_seed)

    monkeypatch.setattr(harness, "gen_sampling_times", grid_spy)
    monkeypatch.setattr(harness, "simulate_path", path_spy)
    run_lln(make_config(n_grid=(100,), replications=4), threads=1)
    assert seen["grid"] == [derive_seed(42, 100, rep, STREAM_GRID) for rep in range(4)]
    assert seen["path"] == [derive_seed(42, 100, rep, STREAM_PATH) for rep in range(4)]
    assert not set(seen["grid"]) & set(seen["path"])


def test_bypass_p_values_are_uniform():
    p_values = []
    for master_seed in range(200):
        config = make_config(mode="clt", bypass=True, n_grid=(1000,), replications=200, master_seed=master_seed)
        p_values.append(run_clt(config, threads=1).ks["p_value"])
    assert stats.kstest(p_values, "uniform").pvalue > 0.01


def test_timings_are_written_beside_the_report(tmp_path):
    report = run_lln(make_config(n_grid=(100, 200, 400), replications=3), threads=1)
    report.write_timings(tmp_path / "report.timings.json")
    with open(tmp_path / "report.timings.json") as f:
        timings = json.load(f)["timings"]
    assert list(timings) == ["100", "200", "400"]
    assert all(seconds >= 0 for seconds in timings.values())
    assert "timings" not in report.body()


@pytest.mark.slow
def test_lln_acceptance():
    config = make_config(n_grid=(500, 1000, 2000, 4000, 8000), replications=200)
    report = run_lln(config)
    assert 0.35 <= report.rate_fit["slope"] <= 0.65
    at_5000 = run_lln(make_config(n_grid=(5000,), replications=200)).per_n[0]
    assert at_5000.rms <= 0.05


@pytest.mark.slow
def test_clt_acceptance():
    report = run_clt(make_config(mode="clt", n_grid=(2000,), replications=2000))
    assert report.ks["p_value"] > 0.01
    assert 0.85 <= report.per_n[0].variance <= 1.15


@pytest.mark.slow
def test_two_increment_variance():
    config = make_config(mode="clt", scheme=SamplingScheme("deterministic", 1.0), f=parse_function("x1^2*x2^2"),
                         n_grid=(2000,), replications=5000)
    stats_n = run_clt(config).per_n[0]
    assert stats_n.scaled_error_variance == pytest.approx(12.0, rel=0.15)


@pytest.mark.slow
def test_m_ratio_acceptance():
    result = run_m_ratio(make_config(mode="clt", n_grid=(2000,), replications=5000))
    assert result["ratio"] == pytest.approx(1.5, rel=0.10)


@pytest.mark.slow
def test_cir_clt_acceptance():
    model = ModelSpec(vol_kind="cir", kappa=2.0, theta=1.0, xi=0.5, v0=1.0)
    report = run_clt(make_config(mode="clt", model=model, n_grid=(2000,), replications=2000))
    assert report.ks["p_value"] > 0.01


@pytest.mark.slow
def test_coverage_acceptance():
    report = run_coverage(make_config(mode="coverage", n_grid=(5000,), replications=2000))
    assert 0.93 <= report.per_n[0].coverage <= 0.97
