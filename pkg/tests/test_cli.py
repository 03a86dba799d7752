import csv
import json
import math
import os
import re

import numpy as np
import pytest

from yulepaint import cli, dynamics


def run(argv):
    return cli.main(argv)


def read_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def test_phase_grid(tmp_path):
    out = str(tmp_path)
    code = run(["phase", "--lam-min", "0.4", "--lam-max", "2.4",
                "--lam-steps", "6", "--p-min", "0.1", "--p-max", "0.9",
                "--p-steps", "5", "--out-dir", out])
    assert code == 0
    header, rows = read_csv(os.path.join(out, "phase.csv"))
    assert header == ["lambda", "p", "phase", "H"]
    assert len(rows) == 30
    lookup = {(float(r[0]), float(r[1])): r[2] for r in rows}
    assert lookup[(0.4, 0.5)] == "pinned"
    assert lookup[(2.4, 0.9)] == "unpinned"
    assert os.path.exists(os.path.join(out, "manifest.json"))


def test_phase_critical_row(tmp_path):
    pc = dynamics.critical_p(2.0)
    out = str(tmp_path)
    code = run(["phase", "--lam-min", "2", "--lam-max", "2", "--lam-steps", "1",
                "--p-min", f"{pc:.17g}", "--p-max", f"{pc:.17g}",
                "--p-steps", "1", "--out-dir", out])
    assert code == 0
    _, rows = read_csv(os.path.join(out, "phase.csv"))
    assert rows[0][2] == "critical"


def test_phase_empty_grid_usage_error(tmp_path):
    code = run(["phase", "--lam-steps", "0", "--out-dir", str(tmp_path)])
    assert code == 2


def test_trajectory_columns_and_h(tmp_path):
    out = str(tmp_path)
    code = run(["trajectory", "--p", "0.3", "--lam", "2.2", "--t-max", "50",
                "--out-dir", out])
    assert code == 0
    header, rows = read_csv(os.path.join(out, "trajectory.csv"))
    assert header == ["t", "p", "lambda", "rho", "H_error"]
    h_err = np.array([float(r[4]) for r in rows])
    assert np.max(h_err) < 1e-10
    p0 = float(rows[0][1])
    assert p0 == pytest.approx(0.3, abs=1e-15)


def test_trajectory_rejects_p_one(tmp_path):
    code = run(["trajectory", "--p", "1.0", "--lam", "1.0",
                "--out-dir", str(tmp_path)])
    assert code == 2


def test_free_energy_report(tmp_path):
    out = str(tmp_path)
    code = run(["free-energy", "--lam", "0.5",
                "--gaps", "0.04,0.02,0.01", "--out-dir", out])
    assert code == 0
    report = json.load(open(os.path.join(out, "fit_report.json")))
    assert report["kind"] == "loglog"
    assert report["target_slope"] == pytest.approx(2.0)
    assert abs(report["relative_slope_error"]) < 0.1


def test_free_energy_negative_gap_usage_error(tmp_path):
    code = run(["free-energy", "--lam", "2.0", "--gaps", "-0.01,0.02",
                "--out-dir", str(tmp_path)])
    assert code == 2


def test_free_energy_domain(tmp_path):
    assert run(["free-energy", "--lam", "3.5", "--out-dir", str(tmp_path)]) == 2


def test_simulate_paint_and_reproducibility(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    args = ["simulate", "--kind", "paint", "--p", "0", "--lam", "1",
            "--t", "2", "--replicas", "2000", "--seed", "9"]
    assert run(args + ["--out-dir", out1]) == 0
    assert run(args + ["--out-dir", out2]) == 0
    m1 = json.load(open(os.path.join(out1, "manifest.json")))
    m2 = json.load(open(os.path.join(out2, "manifest.json")))
    assert m1["outputs"] == m2["outputs"]
    assert m1["generator_id"] == "philox4x64-seedseq-spawnkey"
    summary = json.load(open(os.path.join(out1, "summary.json")))
    assert summary["ks"]["pass"]


def test_simulate_particles_atom_initial(tmp_path):
    out = str(tmp_path)
    code = run(["simulate", "--kind", "particles", "--pmf", "0:1.0",
                "--n-particles", "500", "--t", "1", "--out-dir", out])
    assert code == 0
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert summary["summary"]["zeros"] == summary["summary"]["count"]


def test_simulate_discrete_cegm(tmp_path):
    out = str(tmp_path)
    code = run(["simulate", "--kind", "discrete", "--pmf", "0:0.8,2:0.2",
                "--height", "5", "--replicas", "1000", "--out-dir", out])
    assert code == 0
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert summary["cegm"]["weighted_sum"] == pytest.approx(1.6)
    assert summary["cegm"]["plain_sum"] == pytest.approx(1.6)
    assert os.path.exists(os.path.join(out, "exact_pmf.csv"))


def test_redtree_svg_no_timestamp(tmp_path):
    out = str(tmp_path)
    code = run(["redtree", "--limit", "--x0", "0", "--replicas", "20",
                "--svg", "--seed", "3", "--out-dir", out])
    assert code == 0
    svg = open(os.path.join(out, "redtree.svg")).read()
    assert svg.startswith("<svg")
    # byte-stable rendering: no embedded dates or clock values
    assert "date" not in svg and "time" not in svg
    assert re.search(r"\d{4}-\d{2}-\d{2}", svg) is None
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert "redtree.svg" in manifest["outputs"]


def test_validate_unknown_suite(tmp_path):
    assert run(["validate", "--suite", "nope",
                "--out-dir", str(tmp_path)]) == 2


def test_config_file_defaults_flags_win(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('[simulate]\nkind = "discrete"\nreplicas = 50\nheight = 3\n')
    out = str(tmp_path / "out")
    code = run(["--config", str(cfg), "simulate", "--kind", "discrete",
                "--height", "4", "--out-dir", out])
    assert code == 0
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["config"]["params"]["replicas"] == 50  # from config
    assert manifest["config"]["params"]["height"] == 4     # flag wins


def test_env_var_default_out_dir(tmp_path, monkeypatch):
    out = str(tmp_path / "envout")
    monkeypatch.setenv(cli.ENV_OUT_DIR, out)
    code = run(["simulate", "--kind", "discrete", "--height", "3",
                "--replicas", "100"])
    assert code == 0
    assert os.path.exists(os.path.join(out, "manifest.json"))


def test_csv_seventeen_digit_format(tmp_path):
    out = str(tmp_path)
    run(["trajectory", "--p", "0.1", "--lam", "1.7", "--t-max", "1",
         "--out-dir", out])
    _, rows = read_csv(os.path.join(out, "trajectory.csv"))
    for row in rows:
        for cell in row:
            assert float(cell) == float(f"{float(cell):.17g}")
            assert "," not in cell
