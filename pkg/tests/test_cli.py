"""End-to-end checks of the command-line front end and its CSV artifacts."""

import contextlib
import io
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from adasmooth.cli import RunConfig, SCHEMA_VERSION, main, parse_config
from adasmooth.core import scalar_dataset, write_dataset_csv
from adasmooth.dgps import ScalarNormalDGP
from adasmooth.errors import ConfigError


def run_cli(args):
    """Call the entry point in-process, capturing stderr."""
    err = io.StringIO()
    with contextlib.redirect_stderr(err):
        code = main([str(a) for a in args])
    return code, err.getvalue()


def write_density_csv(path, n=1500, seed=7):
    write_dataset_csv(ScalarNormalDGP().sample(n, seed=seed), path)


# ---------------------------------------------------------------------------
# configuration parsing


def test_minimal_density_config_fills_defaults(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("family=density_at_point\nx=0.0\ninput=data.csv\n")
    rc = parse_config("estimate", str(cfg))
    assert isinstance(rc, RunConfig)
    assert rc.entries["p1"] == "0.25"
    assert rc.entries["p2"] == "0.5"
    assert rc.entries["epsilon"] == "0.05"
    assert rc.entries["alpha"] == "0.05"
    assert rc.entries["kernel"] == "epanechnikov"
    assert rc.entries["kernel.order"] == "2"
    assert rc.entries["seed"] == "0"
    assert rc.entries["output"] == "adasmooth-estimate.csv"


def test_reversed_split_proportions_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("input=data.csv\np1=0.7\np2=0.3\n")
    with pytest.raises(ConfigError, match="p1"):
        parse_config("estimate", str(cfg))


def test_unknown_key_is_named(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bandwdith=0.3\ninput=data.csv\n")
    with pytest.raises(ConfigError, match="bandwdith"):
        parse_config("estimate", str(cfg))


def test_flags_override_file_entries(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("input=data.csv\nseed=3\nalpha=0.10\n")
    rc = parse_config("estimate", str(cfg), {"seed": "9", "alpha": None})
    assert rc.entries["seed"] == "9"
    assert rc.entries["alpha"] == "0.1"  # None override leaves the file entry


def test_x_and_a0_are_mutually_exclusive(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("input=data.csv\nx=0.0\na0=0.15\n")
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config("estimate", str(cfg))


def test_family_must_match_sampler(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("family=dose_response\ndgp=scalar_normal\nn=500\n")
    with pytest.raises(ConfigError, match="does not match"):
        parse_config("estimate", str(cfg))


def test_selector_grammar_rejects_bad_tokens():
    with pytest.raises(ConfigError, match="banana"):
        parse_config("simulate", overrides={"selectors": "adaptive,banana"})
    with pytest.raises(ConfigError, match="fixed:C:R"):
        parse_config("simulate", overrides={"selectors": "fixed:0.1"})


def test_oracle_requires_deltas():
    with pytest.raises(ConfigError, match="deltas"):
        parse_config("oracle")


def test_unknown_command_rejected():
    with pytest.raises(ConfigError, match="plot"):
        parse_config("plot")


def test_missing_config_file_is_a_config_error():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("estimate", "no-such-file.cfg")


# ---------------------------------------------------------------------------
# estimate


def test_estimate_emits_one_row_with_report_columns(tmp_path):
    data_path = tmp_path / "density.csv"
    write_density_csv(data_path)
    out = tmp_path / "est.csv"
    code, _ = run_cli(["estimate", "--input", data_path, "--output", out])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == f"# adasmooth-csv {SCHEMA_VERSION}"
    table = [ln for ln in lines if not ln.startswith("#")]
    assert len(table) == 2  # header plus exactly one row
    header = table[0].split(",")
    row = dict(zip(header, table[1].split(",")))
    for column in ("point", "point_at_delta_zero", "ci_low", "ci_high", "alt_ci_low",
                   "alt_ci_high", "alpha", "r_hat", "c_hat", "epsilon", "m", "delta_eps",
                   "delta_zero", "beta_hat", "gamma_hat", "nu_hat", "c_bprime", "c_sigma",
                   "c_sigmaprime", "anchor_delta1", "anchor_delta2", "anchor_delta3",
                   "anchor_gap", "se_scale", "anchor_source", "bprime_sign_flip",
                   "sigmaprime_sign_flip", "delta_clamped", "nuisance_degenerate"):
        assert column in row
    assert float(row["ci_low"]) <= float(row["point"]) <= float(row["ci_high"])
    assert row["anchor_source"] in ("scan", "default", "explicit", "fallback")
    assert row["delta_clamped"] in ("true", "false")


def test_estimate_artifact_reproduces_itself(tmp_path):
    data_path = tmp_path / "density.csv"
    write_density_csv(data_path)
    out = tmp_path / "est.csv"
    code, _ = run_cli(["estimate", "--input", data_path, "--output", out, "--seed", "11"])
    assert code == 0
    first = out.read_bytes()
    code, _ = run_cli(["estimate", "--config", out])
    assert code == 0
    assert out.read_bytes() == first


def test_missing_input_file_exits_3(tmp_path):
    code, err = run_cli(["estimate", "--input", tmp_path / "nope.csv"])
    assert code == 3
    assert "nope.csv" in err


def test_unknown_key_exits_2(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bandwdith=0.3\n")
    code, err = run_cli(["estimate", "--config", cfg])
    assert code == 2
    assert "bandwdith" in err


def test_degenerate_data_exits_4_with_stage_label(tmp_path):
    const = tmp_path / "const.csv"
    write_dataset_csv(scalar_dataset(np.ones(600)), const)
    out = tmp_path / "o.csv"
    code, err = run_cli(["estimate", "--input", const, "--output", out])
    assert code == 4
    assert "error: [" in err
    assert not out.exists()


def test_explicit_anchors_are_honored(tmp_path):
    data_path = tmp_path / "density.csv"
    write_density_csv(data_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "input={}\nanchors.delta1=1.0\nanchors.delta2=0.5\nanchors.delta3=0.25\n".format(data_path)
    )
    out = tmp_path / "est.csv"
    code, _ = run_cli(["estimate", "--config", cfg, "--output", out])
    assert code == 0
    lines = out.read_text().splitlines()
    assert "# cfg anchors=explicit" in lines
    table = [ln for ln in lines if not ln.startswith("#")]
    row = dict(zip(table[0].split(","), table[1].split(",")))
    assert row["anchor_source"] == "explicit"
    assert float(row["anchor_delta1"]) == 1.0
    assert float(row["anchor_delta2"]) == 0.5


# ---------------------------------------------------------------------------
# select


def test_select_writes_grid_table_and_rate_lines(tmp_path):
    out = tmp_path / "sel.csv"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dgp=scalar_normal\nn=2000\n")
    code, _ = run_cli(["select", "--config", cfg, "--output", out])
    assert code == 0
    lines = out.read_text().splitlines()
    out_keys = {ln.split()[2].split("=")[0] for ln in lines if ln.startswith("# out")}
    for key in ("anchor_source", "beta_hat", "gamma_hat", "nu_hat", "r_hat", "delta_eps"):
        assert key in out_keys
    table = [ln for ln in lines if not ln.startswith("#")]
    assert table[0] == "delta,bprime_hat,sigma_hat,sigmaprime_hat"
    assert len(table) == 1 + 10  # default grid has ten points
    deltas = [float(ln.split(",")[0]) for ln in table[1:]]
    assert deltas == sorted(deltas)

    first = out.read_bytes()
    code, _ = run_cli(["select", "--config", out])
    assert code == 0
    assert out.read_bytes() == first


# ---------------------------------------------------------------------------
# simulate


def test_simulate_smoke_config_is_fast_and_reproduces(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dgp=dose_smooth\nselectors=adaptive\nn_list=500\nreps=2\n")
    out = tmp_path / "sim.csv"
    start = time.monotonic()
    code, _ = run_cli(["simulate", "--config", cfg, "--output", out])
    elapsed = time.monotonic() - start
    assert code == 0
    assert elapsed < 10.0
    records = tmp_path / "sim-records.csv"
    assert records.exists()

    rows_before = out.read_bytes()
    records_before = records.read_bytes()
    code, _ = run_cli(["simulate", "--config", out])
    assert code == 0
    assert out.read_bytes() == rows_before
    assert records.read_bytes() == records_before

    table = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    header = table[0].split(",")
    assert header == ["selector", "n", "replicates", "mse", "mse_se",
                      "coverage", "mean_delta", "mean_r_hat"]
    row = dict(zip(header, table[1].split(",")))
    assert row["selector"] == "adaptive"
    assert row["n"] == "500"
    assert int(row["replicates"]) == 2


def test_simulate_worker_count_does_not_change_artifacts(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dgp=scalar_normal\nselectors=adaptive\nn_list=400\nreps=3\n")
    one = tmp_path / "one.csv"
    two = tmp_path / "two.csv"
    assert run_cli(["simulate", "--config", cfg, "--output", one, "--workers", "1"])[0] == 0
    assert run_cli(["simulate", "--config", cfg, "--output", two, "--workers", "2"])[0] == 0
    strip = lambda p: [ln for ln in p.read_text().splitlines()
                       if not (ln.startswith("# cfg output") or ln.startswith("# cfg records")
                               or ln.startswith("# cfg workers") or ln.startswith("# out records"))]
    assert strip(one) == strip(two)
    rec_one = tmp_path / "one-records.csv"
    rec_two = tmp_path / "two-records.csv"
    assert strip(rec_one) == strip(rec_two)


# ---------------------------------------------------------------------------
# oracle


def test_oracle_tabulates_smoothed_truths(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dgp=scalar_normal\ndeltas=0.1,0.5\nmc=20000\n")
    out = tmp_path / "oracle.csv"
    code, _ = run_cli(["oracle", "--config", cfg, "--output", out])
    assert code == 0
    lines = out.read_text().splitlines()
    psi_line = next(ln for ln in lines if ln.startswith("# out psi_true="))
    psi_true = float(psi_line.split("=")[1])
    assert psi_true == pytest.approx(1.0 / np.sqrt(2 * np.pi), abs=1e-12)
    table = [ln for ln in lines if not ln.startswith("#")]
    assert table[0] == "delta,psi_delta,b0,sigma_inf,se_sigma"
    assert len(table) == 3
    small, large = (dict(zip(table[0].split(","), ln.split(","))) for ln in table[1:])
    # smoothing bias grows with the level; both smoothed values stay near truth
    assert abs(float(small["b0"])) < abs(float(large["b0"]))
    assert float(small["psi_delta"]) == pytest.approx(psi_true, abs=0.01)

    first = out.read_bytes()
    code, _ = run_cli(["oracle", "--config", out])
    assert code == 0
    assert out.read_bytes() == first


# ---------------------------------------------------------------------------
# bench-report


def test_bench_report_matches_benchmark_aggregates(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dgp=scalar_normal\nselectors=adaptive,fixed:0.5:0.2\nn_list=400\nreps=3\n")
    rows_path = tmp_path / "sim.csv"
    assert run_cli(["simulate", "--config", cfg, "--output", rows_path])[0] == 0
    report_path = tmp_path / "report.csv"
    code, _ = run_cli(
        ["bench-report", "--input", tmp_path / "sim-records.csv", "--output", report_path]
    )
    assert code == 0

    def data_rows(path):
        import csv as _csv

        table = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
        reader = _csv.reader(io.StringIO("\n".join(table)))
        header = next(reader)
        return [dict(zip(header, row)) for row in reader]

    rows = {(r["selector"], r["n"]): r for r in data_rows(rows_path)}
    report = {(r["selector"], r["n"]): r for r in data_rows(report_path)}
    assert rows.keys() == report.keys()
    for key, row in rows.items():
        rep = report[key]
        assert rep["failures"] == "0"
        for column in ("replicates", "mse", "mse_se", "coverage", "mean_delta", "mean_r_hat"):
            assert rep[column] == row[column]


def test_bench_report_rejects_future_major_version(tmp_path):
    bad = tmp_path / "future.csv"
    bad.write_text("# adasmooth-csv 2.0\nselector,n,rep\n")
    code, err = run_cli(["bench-report", "--input", bad, "--output", tmp_path / "r.csv"])
    assert code == 3
    assert "2.0" in err


def test_bench_report_rejects_non_records_table(tmp_path):
    data_path = tmp_path / "density.csv"
    write_density_csv(data_path, n=200)
    code, err = run_cli(["bench-report", "--input", data_path, "--output", tmp_path / "r.csv"])
    assert code == 3


# ---------------------------------------------------------------------------
# console script


def test_console_script_is_wired(tmp_path):
    data_path = tmp_path / "density.csv"
    write_density_csv(data_path, n=800)
    out = tmp_path / "est.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "adasmooth.cli", "estimate",
         "--input", str(data_path), "--output", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
