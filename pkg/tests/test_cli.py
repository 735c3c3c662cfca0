import csv

import numpy as np
import pytest

from pmu_fdia import cli, grid_model, state_estimation
from pmu_fdia.attack_builder import read_attack_csv


def _run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def simulated(tmp_path):
    # seed 2 identifies a positive time constant on the 300 s record
    trace, z = tmp_path / "trace.csv", tmp_path / "z.csv"
    assert _run("simulate", "--seed", 2, "--out", trace, "--measurements-out", z) == 0
    return trace, z


def test_simulate_writes_trace(simulated):
    trace, z = simulated
    lines = trace.read_text().splitlines()
    assert lines[0] == "# target: 15"
    header = [l for l in lines if not l.startswith("#")][0]
    assert header == "t,delta_14,delta_15,delta_16,P_t"
    assert len(lines) - 4 == 18000
    assert len(z.read_text().splitlines()) == 86


def test_identify_attack_se_chain(tmp_path, simulated, capsys):
    trace, z = simulated
    ident, attack, report = tmp_path / "id.csv", tmp_path / "a.csv", tmp_path / "se.csv"
    assert _run("identify", "--trace", trace, "--truth", "--true-tau", 27.88, "--out", ident) == 0
    rows = list(csv.DictReader(ident.open()))
    assert [r["quantity"] for r in rows] == ["tau_15", "B_14_15", "B_16_15"]
    assert float(rows[1]["true"]) == pytest.approx(-45.768, abs=1e-3)

    assert _run("attack", "--identification", ident, "--trace", trace, "--angle", 10, "--out", attack) == 0
    meas = grid_model.build_measurement_jacobian(grid_model.ieee39())
    a = read_attack_csv(attack, meas)
    assert np.count_nonzero(a) == 5

    assert _run("se", "--measurements", z, "--attack", attack, "--gamma", 0.85, "--out", report) == 0
    rec = list(csv.DictReader(report.open()))
    assert len(rec) == 38
    zv = state_estimation.read_measurements_csv(z, meas)
    after = state_estimation.wls_estimate(meas, zv + a)
    assert float(rec[0]["residual"]) == after.residual
    assert "residual" in capsys.readouterr().out


def test_se_without_attack(tmp_path, simulated):
    _, z = simulated
    out = tmp_path / "se.csv"
    assert _run("se", "--measurements", z, "--out", out) == 0
    rec = list(csv.DictReader(out.open()))
    assert rec[0]["angle_deg_before"] == rec[0]["angle_deg_after"] and rec[0]["gamma"] == ""


def test_montecarlo_needs_seed(tmp_path):
    with pytest.raises(SystemExit):
        _run("montecarlo", "--out", tmp_path)


def test_montecarlo_small_campaign(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("trials = 2\nduration = 20\nangles_deg = 10\n")
    out = tmp_path / "mc"
    assert _run("montecarlo", "--config", cfg, "--seed", 1, "--oracle-parameters", "true", "--out", out) == 0
    assert (out / "summary.csv").read_text().splitlines()[1].startswith("10,")
    assert "gamma" in capsys.readouterr().out


def test_errors_exit_cleanly(tmp_path, capsys):
    assert _run("identify", "--trace", tmp_path / "missing.csv", "--out", tmp_path / "x.csv") == 2
    assert "pmu-fdia identify" in capsys.readouterr().err
