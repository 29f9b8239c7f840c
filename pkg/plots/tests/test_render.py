import importlib.machinery
import importlib.util
import json
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent.parent
RENDER = ROOT / "plots" / "render"

SUMMARY_HEADER = ("instance,scheme,T,strategy,mean_error,std_error_of_mean,"
                  "std_dev,count,failures")


def load_render_module():
    loader = importlib.machinery.SourceFileLoader("render_script", str(RENDER))
    spec = importlib.util.spec_from_loader("render_script", loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


render_mod = load_render_module()


def write_summary(path, rows):
    lines = [SUMMARY_HEADER] + rows
    path.write_text("\n".join(lines) + "\n")


def budget_sweep_csv(path, strategies=4, budgets=(1000, 10000, 100000)):
    rows = []
    for i in range(strategies):
        label = f"T^{i + 1}/4"
        for j, total in enumerate(budgets):
            mean = 1.0 / (total ** 0.5) * (1 + 0.1 * i)
            rows.append(f"demo,conditional,{total},{label},{mean},"
                        f"{mean / 10},{mean / 3},30,0")
    write_summary(path, rows)


def vary_n_csv(path):
    rows = []
    for scheme in ("independent", "conditional"):
        for n in (10, 100, 1000):
            mean = 0.5 / n + n / 5000.0
            rows.append(f"demo,{scheme},10000,n={n},{mean},{mean / 8},"
                        f"{mean / 3},30,0")
    write_summary(path, rows)


def run_render(spec_path):
    return subprocess.run([sys.executable, str(RENDER), "--spec", str(spec_path)],
                          capture_output=True, text=True, cwd=ROOT)


def test_budget_sweep_renders_expected_series(tmp_path):
    csv_path = tmp_path / "summary.csv"
    budget_sweep_csv(csv_path, strategies=4, budgets=(1000, 3162, 10000, 31623,
                                                      100000, 316228, 1000000))
    spec = {"inputs": [str(csv_path)], "output": str(tmp_path / "fig.png"),
            "x": "T", "series": "strategy"}
    out, counts = render_mod.render(spec)
    assert out.exists()
    assert len(counts) == 4
    assert all(c == 7 for c in counts.values())


def test_single_row_series_survives(tmp_path):
    csv_path = tmp_path / "summary.csv"
    write_summary(csv_path, ["demo,conditional,1000,T^1/2,0.5,0.05,0.1,30,0"])
    spec = {"inputs": [str(csv_path)], "output": str(tmp_path / "one.png"),
            "x": "T", "series": "strategy"}
    out, counts = render_mod.render(spec)
    assert out.exists() and counts == {"T^1/2": 1}


def test_scheme_comparison_over_outer_counts(tmp_path):
    csv_path = tmp_path / "summary.csv"
    vary_n_csv(csv_path)
    spec = {"inputs": [str(csv_path)], "output": str(tmp_path / "cmp.png"),
            "x": "n", "series": "scheme", "x_scale": "log"}
    out, counts = render_mod.render(spec)
    assert counts == {"independent": 3, "conditional": 3}


def test_cli_reports_series_counts(tmp_path):
    csv_path = tmp_path / "summary.csv"
    budget_sweep_csv(csv_path)
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "inputs": [str(csv_path)], "output": str(tmp_path / "fig.png"),
        "x": "T", "series": "strategy"}))
    proc = run_render(spec_path)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert len(payload["series"]) == 4


def test_render_is_byte_stable(tmp_path):
    csv_path = tmp_path / "summary.csv"
    budget_sweep_csv(csv_path)
    spec = {"inputs": [str(csv_path)], "output": str(tmp_path / "a.png"),
            "x": "T", "series": "strategy", "timestamp": False}
    render_mod.render(spec)
    first = (tmp_path / "a.png").read_bytes()
    spec["output"] = str(tmp_path / "b.png")
    render_mod.render(spec)
    assert first == (tmp_path / "b.png").read_bytes()


def test_malformed_inputs_exit_nonzero(tmp_path):
    missing_cols = tmp_path / "bad.csv"
    missing_cols.write_text("instance,scheme\nfoo,bar\n")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    header_only = tmp_path / "header.csv"
    write_summary(header_only, [])

    for bad in (missing_cols, empty, header_only, tmp_path / "absent.csv"):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({
            "inputs": [str(bad)], "output": str(tmp_path / "x.png"),
            "x": "T", "series": "strategy"}))
        proc = run_render(spec_path)
        assert proc.returncode == 1, bad
        assert "error" in proc.stderr


def test_bad_spec_rejected(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"inputs": [], "output": "x.png"}))
    assert run_render(spec_path).returncode == 1
    spec_path.write_text(json.dumps({
        "inputs": [], "output": "x.png", "x": "bogus", "series": "strategy"}))
    assert run_render(spec_path).returncode == 1


def test_vary_n_requires_fixed_count_labels(tmp_path):
    csv_path = tmp_path / "summary.csv"
    budget_sweep_csv(csv_path)
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "inputs": [str(csv_path)], "output": str(tmp_path / "x.png"),
        "x": "n", "series": "strategy"}))
    assert run_render(spec_path).returncode == 1


SHIPPED_SPECS = sorted((ROOT / "configs" / "plots").glob("*.json"))


@pytest.mark.parametrize("spec_path", SHIPPED_SPECS, ids=lambda p: p.stem)
def test_every_shipped_plot_spec_renders(tmp_path, spec_path):
    """Each shipped figure spec renders against a schema-shaped summary CSV
    with the series/grid sizes the matching experiment config produces."""
    spec = json.loads(spec_path.read_text())
    exp_config = json.loads((ROOT / "configs" / f"{spec_path.stem}.json").read_text())
    rows = []
    if spec["x"] == "T":
        budgets = exp_config["budgets"]
        labels = [f"T^{s}" for s in exp_config["strategies"]]
        schemes = exp_config.get("schemes", ["conditional"])
        for scheme in schemes:
            for label in labels:
                for total in budgets:
                    mean = 10.0 / total ** 0.5
                    rows.append(f"demo,{scheme},{total},{label},{mean},"
                                f"{mean / 10},{mean / 3},30,0")
        expected_series = len(labels) if spec["series"] == "strategy" else len(schemes)
        expected_points = len(budgets)
    else:
        n_list = exp_config["mode"]["n_list"]
        schemes = exp_config["schemes"]
        total = exp_config["mode"]["T"]
        for scheme in schemes:
            for n in n_list:
                mean = 0.5 / n + n / (5.0 * total)
                rows.append(f"demo,{scheme},{total},n={n},{mean},{mean / 8},"
                            f"{mean / 3},30,0")
        expected_series = len(schemes)
        expected_points = len(n_list)

    input_path = tmp_path / spec["inputs"][0]
    input_path.parent.mkdir(parents=True, exist_ok=True)
    write_summary(input_path, rows)
    local_spec = tmp_path / "spec.json"
    local_spec.write_text(json.dumps(spec))
    proc = subprocess.run([sys.executable, str(RENDER), "--spec", "spec.json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert len(payload["series"]) == expected_series
    assert all(c == expected_points for c in payload["series"].values())
    assert (tmp_path / spec["output"]).exists()


def test_end_to_end_with_experiment_cli(tmp_path):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({
        "instance": {"kind": "huber1d", "gamma": 0.5, "sigma_eta2": 1.0},
        "budgets": [100, 1000],
        "strategies": ["1/3", "1/2"],
        "replications": 3,
        "master_seed": 5,
        "solver": {"max_iters": 300},
        "oracle": {"kind": "closed_form"}}))
    run = subprocess.run([sys.executable, "-m", "cso_saa.cli", "run",
                          "--config", str(config), "--out", str(tmp_path / "out")],
                         capture_output=True, text=True)
    assert run.returncode == 0, run.stderr
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "inputs": [str(tmp_path / "out" / "summary.csv")],
        "output": str(tmp_path / "fig.png"),
        "x": "T", "series": "strategy"}))
    proc = run_render(spec_path)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["series"] == {"T^1/3": 2, "T^1/2": 2}
    assert (tmp_path / "fig.png").exists()
