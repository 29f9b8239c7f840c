import json
import math
import subprocess
import sys

import numpy as np
import pytest

import cso_saa as cso
from cso_saa.experiments import (RAW_HEADER, SUMMARY_HEADER, ExperimentConfig,
                                 ExperimentError, FixedBudgetVaryN, OracleConfig,
                                 emit_csv, huber1d_error_study, run_experiment)
from cso_saa.solve import SolverConfig


from cso_saa.sampling import parse_strategy


def tiny_config(**overrides):
    base = dict(
        instance=cso.Huber1D(gamma=0.5, sigma_eta2=1.0),
        schemes=("conditional",),
        budgets=(100, 400),
        strategies=(parse_strategy("1/2"),),
        replications=2,
        master_seed=99,
        solver=SolverConfig(max_iters=300, tolerance=1e-8),
        oracle=OracleConfig(kind="closed_form"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_report_structure_counts():
    report = run_experiment(tiny_config(), threads=1)
    assert len(report.records) == 2 * 1 * 2   # budgets x strategies x reps
    assert len(report.summaries) == 2
    for summary in report.summaries:
        rows = [r for r in report.records
                if (r.scheme, r.total, r.strategy) ==
                   (summary.scheme, summary.total, summary.strategy)]
        errors = np.array([r.error for r in rows if not r.failed])
        assert summary.count == errors.size and summary.failures == 0
        assert summary.mean_error == float(np.mean(errors))


def test_errors_nonnegative_for_analytic_optimum():
    config = tiny_config(
        instance=cso.LavRegression(d=3, sigma_eta2=1.0, smoothing=0.1),
        budgets=(200,),
        replications=3,
        solver=SolverConfig(max_iters=500, tolerance=1e-8),
    )
    report = run_experiment(config, threads=1)
    assert report.f_star == 0.0
    for record in report.records:
        assert record.error >= -1e-12


def test_vary_n_mode_enumerates_outer_counts():
    config = ExperimentConfig(
        instance=cso.IndependentLogistic(d=3, sigma_eta2=1.0),
        schemes=("independent", "conditional"),
        replications=2,
        master_seed=4,
        solver=SolverConfig(max_iters=200, tolerance=1e-6),
        oracle=OracleConfig(kind="closed_form"),
        mode=FixedBudgetVaryN(total=60, n_list=(5, 10, 20)),
    )
    report = run_experiment(config, threads=1, cache_dir=None,
                            reference_samples=2000)
    assert len(report.summaries) == 6
    labels = {s.strategy for s in report.summaries}
    assert labels == {"n=5", "n=10", "n=20"}
    indep = [s for s in report.summaries if s.scheme == "independent"]
    assert all(s.total == 60 for s in indep)


def test_config_validation():
    with pytest.raises(ExperimentError):
        tiny_config(replications=0)
    with pytest.raises(ExperimentError):
        tiny_config(budgets=(400, 100))
    with pytest.raises(ExperimentError):
        tiny_config(schemes=("bogus",))
    with pytest.raises(ExperimentError):
        # instance/scheme compatibility is checked when the problem is built
        run_experiment(tiny_config(instance=cso.LavRegression(d=2),
                                   schemes=("independent",)), threads=1)
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_json({"budgets": [100]})
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_json({
            "instance": {"kind": "huber1d"}, "bogus_field": 1})


def test_config_json_round_trip():
    config = ExperimentConfig.from_json({
        "instance": {"kind": "robust_logistic", "d": 3, "sigma_eta2": 5.0},
        "schemes": ["conditional"],
        "budgets": [100, 1000],
        "strategies": ["1/2", {"n": 10}],
        "replications": 4,
        "master_seed": 7,
        "solver": {"method": "projected_gradient", "max_iters": 50},
        "oracle": {"kind": "monte_carlo", "draws": 1000},
        "mode": {"kind": "budget_sweep"},
    })
    assert config.replications == 4
    assert config.strategies[1].label == "n=10"
    assert config.oracle.draws == 1000


def test_emit_csv_layout_and_determinism(tmp_path):
    report = run_experiment(tiny_config(), threads=1)
    paths = emit_csv(report, tmp_path / "out")
    raw = (tmp_path / "out" / "raw.csv").read_text().splitlines()
    summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert raw[0] == RAW_HEADER
    assert summary[0] == SUMMARY_HEADER
    assert len(raw) == 1 + len(report.records)
    assert len(summary) == 1 + len(report.summaries)

    first_bytes = (tmp_path / "out" / "raw.csv").read_bytes()
    emit_csv(report, tmp_path / "out")
    assert (tmp_path / "out" / "raw.csv").read_bytes() == first_bytes

    # summary mean recomputed from raw rows matches the printed precision
    for line in summary[1:]:
        cells = line.split(",")
        key = tuple(cells[1:4])
        errors = [float(r.split(",")[9]) for r in raw[1:]
                  if tuple(r.split(",")[1:4]) == key]
        assert float(cells[4]) == pytest.approx(float(np.mean(errors)), rel=1e-15)


def test_determinism_across_thread_counts(tmp_path):
    config = tiny_config(replications=4, budgets=(100, 300))
    single = run_experiment(config, threads=1)
    pooled = run_experiment(config, threads=8)
    p1 = emit_csv(single, tmp_path / "one")
    p8 = emit_csv(pooled, tmp_path / "eight")
    assert (tmp_path / "one" / "raw.csv").read_bytes() == \
        (tmp_path / "eight" / "raw.csv").read_bytes()
    assert (tmp_path / "one" / "summary.csv").read_bytes() == \
        (tmp_path / "eight" / "summary.csv").read_bytes()


def test_timings_flag_changes_output(tmp_path):
    report = run_experiment(tiny_config(), threads=1)
    emit_csv(report, tmp_path / "a", include_timings=True)
    raw = (tmp_path / "a" / "raw.csv").read_text().splitlines()
    wall = [float(line.split(",")[11]) for line in raw[1:]]
    assert any(w > 0 for w in wall)


def test_reference_value_cached_on_disk(tmp_path):
    config = tiny_config(
        instance=cso.RobustLogistic(d=2, sigma_eta2=0.5),
        budgets=(60,), replications=1,
        solver=SolverConfig(max_iters=400, tolerance=1e-6),
        oracle=OracleConfig(kind="closed_form"),
    )
    from cso_saa import experiments as exp
    exp._REFERENCE_MEMO.clear()
    report = run_experiment(config, cache_dir=tmp_path, threads=1,
                            reference_samples=2000)
    caches = list(tmp_path.glob("fstar_*.json"))
    assert len(caches) == 1
    payload = json.loads(caches[0].read_text())
    assert payload["f_star"] == pytest.approx(report.f_star)
    # second run must reuse the cache even with a cold memo
    exp._REFERENCE_MEMO.clear()
    again = run_experiment(config, cache_dir=tmp_path, threads=1,
                           reference_samples=2000)
    assert again.f_star == report.f_star


def test_huber1d_error_study_matches_plain_loop():
    study = huber1d_error_study(0.2, 1.0, 7, replications=5000, seed=3)
    assert study.replications == 5000
    assert 0 < study.mean < 1.0
    assert study.se < 0.02


def test_thread_resolution_env_fallback(monkeypatch):
    from cso_saa.experiments import resolve_threads
    monkeypatch.delenv("CSO_SAA_THREADS", raising=False)
    assert resolve_threads(3) == 3
    monkeypatch.setenv("CSO_SAA_THREADS", "7")
    assert resolve_threads(None) == 7
    assert resolve_threads(2) == 2  # explicit argument wins
    monkeypatch.delenv("CSO_SAA_THREADS")
    assert resolve_threads(None) >= 1


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def run_cli(*args, **kwargs):
    return subprocess.run([sys.executable, "-m", "cso_saa.cli", *args],
                          capture_output=True, text=True, **kwargs)


def test_cli_allocate_exact_output():
    proc = run_cli("allocate", "--budget", "10000", "--alpha", "0.5", "--scheme", "cond")
    assert proc.returncode == 0
    assert proc.stdout.strip() == '{"n":100,"m":99,"leftover":0}'


def test_cli_allocate_fraction_string():
    proc = run_cli("allocate", "--budget", "1000000", "--alpha", "1/3",
                   "--scheme", "indep")
    assert proc.returncode == 0
    assert json.loads(proc.stdout) == {"n": 100, "m": 999900, "leftover": 0}


def test_cli_huber1d_value():
    proc = run_cli("huber1d", "--gamma", "0", "--sigma2", "1", "--m", "100")
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert payload["main"] == pytest.approx(0.049894, abs=1e-6)
    with_mc = run_cli("huber1d", "--gamma", "0.1", "--sigma2", "1", "--m", "50",
                      "--mc", "2000")
    data = json.loads(with_mc.stdout)
    assert data["mc_mean"] == pytest.approx(data["main"], abs=10 * data["mc_se"] + 0.05)


def test_cli_bounds(tmp_path):
    config = tmp_path / "bounds.json"
    config.write_text(json.dumps({
        "sample_complexity": {
            "regime": "cond_heb_smooth", "accuracy": 0.1, "confidence_slack": 0.1,
            "outer_smoothness": 1.0, "growth_rate": 1.0, "growth_exponent": 1.0},
        "large_deviation": {"variant": "sub_gaussian", "n": 200, "eps": 0.5,
                            "sigma2": 1.0},
    }))
    proc = run_cli("bounds", "--config", str(config))
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert payload["sample_complexity"] == {"n_min": 400, "m_min": 200,
                                            "total": 80400}
    assert payload["large_deviation"]["probability"] == pytest.approx(math.exp(-25))


def test_cli_mse_probe(tmp_path):
    config = tmp_path / "probe.json"
    config.write_text(json.dumps({
        "instance": {"kind": "huber1d", "gamma": 0.5, "sigma_eta2": 1.0},
        "x": [0.0], "n": 1, "m": 20, "scheme": "cond",
        "replications": 200, "seed": 1}))
    proc = run_cli("mse-probe", "--config", str(config))
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert payload["replications"] == 200
    assert "bias_hat" in payload


def test_cli_run_and_failure_modes(tmp_path):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({
        "instance": {"kind": "huber1d", "gamma": 0.5, "sigma_eta2": 1.0},
        "budgets": [100], "strategies": ["1/2"], "replications": 2,
        "master_seed": 1, "solver": {"max_iters": 200},
        "oracle": {"kind": "closed_form"}}))
    proc = run_cli("run", "--config", str(config), "--out", str(tmp_path / "out"),
                   "--threads", "2")
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    assert (tmp_path / "out" / "raw.csv").exists()
    assert payload["f_star"] == 0.0

    missing = run_cli("run", "--config", str(tmp_path / "nope.json"),
                      "--out", str(tmp_path / "o2"))
    assert missing.returncode == 1

    unknown_flag = run_cli("allocate", "--budget", "100", "--alpha", "0.5",
                           "--scheme", "cond", "--bogus")
    assert unknown_flag.returncode == 1
    assert "usage" in unknown_flag.stderr.lower()

    bad_budget = run_cli("allocate", "--budget", "4", "--alpha", "0.5",
                         "--scheme", "cond")
    assert bad_budget.returncode == 1

    blocked = tmp_path / "blocked"
    blocked.write_text("a plain file where the output directory should go")
    runtime_failure = run_cli("run", "--config", str(config), "--out", str(blocked))
    assert runtime_failure.returncode == 2


def test_cli_run_seed_override(tmp_path):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({
        "instance": {"kind": "huber1d", "gamma": 0.5, "sigma_eta2": 1.0},
        "budgets": [100], "strategies": ["1/2"], "replications": 2,
        "master_seed": 1, "solver": {"max_iters": 200},
        "oracle": {"kind": "closed_form"}}))
    a = run_cli("run", "--config", str(config), "--out", str(tmp_path / "a"))
    b = run_cli("run", "--config", str(config), "--out", str(tmp_path / "b"),
                "--seed", "2")
    assert a.returncode == 0 and b.returncode == 0
    assert (tmp_path / "a" / "raw.csv").read_text() != \
        (tmp_path / "b" / "raw.csv").read_text()


def test_error_decay_for_lav_regression():
    config = ExperimentConfig(
        instance=cso.LavRegression(d=5, sigma_eta2=10.0),
        budgets=(1000, 100_000),
        strategies=(parse_strategy("1/2"),),
        replications=5,
        master_seed=17,
        solver=SolverConfig(method="projected_subgradient", max_iters=4000,
                            step_constant=0.05, stall_window=500, tolerance=1e-9),
        oracle=OracleConfig(kind="closed_form"),
    )
    report = run_experiment(config, threads=2)
    small = report.summary_for("conditional", 1000, "T^1/2")
    large = report.summary_for("conditional", 100_000, "T^1/2")
    assert large.mean_error < small.mean_error
