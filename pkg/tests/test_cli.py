import csv
import json

import numpy as np
import pytest

from cavity_tc import cli
from cavity_tc.dynamics import TrajectoryRecord

SHORT = """\
preset: paper-theory
protocol:
  ramp_time: 3.0e-3
  modulation_time: 5.0e-3
"""


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.yaml"
    path.write_text(SHORT)
    return path


def test_simulate_writes_trace_with_single_dominant_peak(tmp_path, short_config):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(short_config), "--out", str(out)]) == cli.EXIT_OK
    for name in ("trace.csv", "trace.npz", "spectrum.csv", "analysis.json", "manifest.json", "config.yaml",
                 "summary.txt", "trace.png"):
        assert (out / name).exists(), name
    rec = TrajectoryRecord.from_csv(out / "trace.csv")
    assert rec.n_photon.max() > 1000
    rows = list(csv.DictReader(open(out / "spectrum.csv")))
    mag = np.hypot([float(r["amp_re"]) for r in rows], [float(r["amp_im"]) for r in rows])
    top = np.sort(mag[1:])[::-1]
    assert top[0] > 2 * top[3]  # one dominant line (its leakage neighbours aside)
    report = json.loads((out / "analysis.json").read_text())
    assert 0.3 < report["ratio"] < 0.7


def test_analyze_reproduces_stored_spectrum(tmp_path, short_config):
    out = tmp_path / "sim"
    cli.main(["simulate", "--config", str(short_config), "--out", str(out)])
    before = (out / "trace.csv").read_bytes()
    for src in ("trace.npz", "trace.csv"):
        dest = tmp_path / f"ana_{src.replace('.', '_')}"
        assert cli.main(["analyze", str(out / src), "--out", str(dest)]) == cli.EXIT_OK
        assert (dest / "spectrum.csv").read_text() == (out / "spectrum.csv").read_text()
    assert (out / "trace.csv").read_bytes() == before


def test_tongue_three_by_three(tmp_path):
    cfg = tmp_path / "tongue.yaml"
    cfg.write_text(SHORT + "sweep:\n  omega_dr_hz: [20000, 20500, 21000]\n  f0: [0.0, 0.1, 0.2]\n")
    out = tmp_path / "tongue"
    assert cli.main(["tongue", "--config", str(cfg), "--out", str(out), "--mode", "mf"]) == cli.EXIT_OK
    lines = (out / "tongue" / "cells.ndjson").read_text().strip().splitlines()
    assert len(lines) == 9
    recs = [json.loads(x) for x in lines]
    assert max(r["S_rel_mean"] for r in recs) == 1.0
    grid = list(csv.reader(open(out / "tongue" / "S_rel_mean.csv")))
    assert len(grid) == 4 and len(grid[0]) == 4


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("protocol:\n  f0: -0.1\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert "protocol.f0" in capsys.readouterr().err


def test_unknown_preset_exit_code(tmp_path):
    assert cli.main(["simulate", "--preset", "nope", "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG


def test_numerical_fault_exit_code(tmp_path):
    cfg = tmp_path / "blowup.yaml"
    cfg.write_text(SHORT + "ensemble:\n  mf_cavity_seed: 1.0e160\n")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == cli.EXIT_FAULT


def test_partial_ensemble_exit_code(tmp_path, monkeypatch):
    from cavity_tc import ensemble

    real = ensemble._run_one

    def flaky(args):
        index, rec, redraws, err = real(args)
        return (index, None, redraws, "injected fault") if index == 1 else (index, rec, redraws, err)

    monkeypatch.setattr(ensemble, "_run_one", flaky)
    cfg = tmp_path / "ens.yaml"
    cfg.write_text(SHORT + "params:\n  mode_cutoff: 3\nensemble:\n  n_traj: 3\n")
    out = tmp_path / "ens"
    assert cli.main(["ensemble", "--config", str(cfg), "--out", str(out), "--mode", "twa"]) == cli.EXIT_PARTIAL
    manifest = json.loads((out / "ensemble" / "manifest.json").read_text())
    assert manifest["indices"] == [0, 2]
    assert manifest["aborted"][0][0] == 1


def test_manifest_reproduces_run(tmp_path, short_config):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["simulate", "--config", str(short_config), "--out", str(a)])
    assert cli.main(["simulate", "--config", str(a / "config.yaml"), "--out", str(b)]) == cli.EXIT_OK
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert json.loads((a / "manifest.json").read_text())["version"]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
    assert "cavity-tc" in capsys.readouterr().out
