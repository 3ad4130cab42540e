import csv
import json
import math
from pathlib import Path

import pytest

from impulsive_iss.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_heat_outputs(tmp_path):
    out = tmp_path / "run"
    code = main(["simulate", "--scenario", "heat", "--out", str(out)])
    assert code == 0
    assert (out / "manifest.json").exists()
    rows = read_csv(out / "trajectory.csv")
    pre = [float(r["t"]) for r in rows if r["pre_jump"] == "1"]
    assert pre == [0.5, 1.0, 1.5]
    for ti in pre:
        assert sum(1 for r in rows if float(r["t"]) == ti) == 2
    # grid systems carry per-node columns
    assert any(k.startswith("x@") for k in rows[0])


def test_simulate_rotation_rows_at_impulse_times(tmp_path):
    out = tmp_path / "rot"
    code = main(["simulate", "--scenario", "rotation2d", "--step", "1e-3", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    pre = [float(r["t"]) for r in rows if r["pre_jump"] == "1"]
    assert pre == pytest.approx([math.pi / 2.0, math.pi], abs=1e-12)


def test_simulate_missing_scenario_file(tmp_path):
    code = main(["simulate", "--scenario", str(tmp_path / "ghost.json"),
                 "--out", str(tmp_path / "o")])
    assert code == 3


def test_simulate_blow_up_exit(tmp_path):
    cfg = tmp_path / "unstable.json"
    cfg.write_text(json.dumps({
        "label": "runaway",
        "system": {"dim": 1, "flow": {"kind": "linear", "matrix": [[40.0]]},
                   "jumps": {"kind": "diagonal", "factors": [1.0]},
                   "impulses": {"periodic": 100.0}},
        "input": {"kind": "zero"},
        "x0": [1.0],
        "run": {"horizon": 5.0, "step": 0.01},
    }))
    out = tmp_path / "boom"
    code = main(["simulate", "--scenario", str(cfg), "--out", str(out)])
    assert code == 2
    man = json.loads((out / "manifest.json").read_text())
    assert "blow_up" in man and man["blow_up"]["last_finite_time"] > 0


def test_verify_heat_def3(tmp_path):
    out = tmp_path / "v3"
    code = main(["verify", "--scenario", "heat", "--which", "def3", "--out", str(out)])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdict"] == "pass"
    rows = read_csv(out / "lyapunov.csv")
    assert set(rows[0]) == {"t", "V", "chi_level", "pre_jump"}
    assert float(rows[0]["chi_level"]) == pytest.approx(5.93652636, abs=1e-6)


def test_verify_rotation_def3_and_sabotage(tmp_path):
    ok = main(["verify", "--scenario", "rotation2d", "--which", "def3",
               "--step", "1e-3", "--out", str(tmp_path / "a")])
    assert ok == 0
    sab = main(["verify", "--scenario", "rotation2d", "--which", "def3",
                "--step", "1e-3", "--drop-discount", "--out", str(tmp_path / "b")])
    assert sab == 1
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["verdict"] == "fail"
    assert rep["summary"]["flow_decay"]["failures"] > 0


def test_verify_def1_and_def2(tmp_path):
    assert main(["verify", "--scenario", "heat", "--which", "def1",
                 "--out", str(tmp_path / "d1")]) == 0
    assert main(["verify", "--scenario", "scalar_sfuj", "--which", "def2",
                 "--out", str(tmp_path / "d2")]) == 0
    # def3 without a closed-form function is a config error
    assert main(["verify", "--scenario", "scalar_sfuj", "--which", "def3",
                 "--out", str(tmp_path / "d3")]) == 3


def test_construct_commands(tmp_path):
    assert main(["construct", "--scenario", "scalar_sfuj",
                 "--out", str(tmp_path / "c1")]) == 0
    prov = json.loads((tmp_path / "c1" / "provenance.json").read_text())
    assert prov["method"] == "sfuj"
    assert prov["kappa_c"] == pytest.approx(0.495, abs=1e-5)
    assert main(["construct", "--scenario", "scalar_ufsj",
                 "--out", str(tmp_path / "c2")]) == 0

    # dwell failure: theta - delta below the integral ln2/2
    code = main(["construct", "--scenario", "scalar_sfuj", "--delta", "0.8",
                 "--out", str(tmp_path / "c3")])
    assert code == 4
    rep = json.loads((tmp_path / "c3" / "report.json").read_text())
    assert rep["verdict"] == "precondition_failed"
    assert "dwell" in rep["reason"]

    # ufsj with sup gap > theta
    code = main(["construct", "--scenario", "scalar_ufsj", "--theta", "0.3",
                 "--delta", "0.1", "--out", str(tmp_path / "c4")])
    assert code == 4


def test_construct_from_structural_config(tmp_path):
    assert main(["construct", "--scenario", str(CONFIGS / "scalar_ufsj.json"),
                 "--out", str(tmp_path / "cs")]) == 0
    rep = json.loads((tmp_path / "cs" / "report.json").read_text())
    assert rep["verdict"] == "pass"
    assert rep["definition3"]["verdict"] == "pass"
    assert rep["iss_estimate"]["verdict"] == "pass"


def test_sweep_region_boundary(tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--regime", "sfuj", "--rho", "linear:1", "--alpha", "linear:2",
                 "--theta-range", "0.8:1.2:41", "--delta-range", "0.3:0.3:1",
                 "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "region.csv")
    assert len(rows) == 41
    # boundary at theta - delta = ln 2 within one grid cell
    cell = 0.4 / 40.0
    flips = [i for i in range(1, len(rows))
             if rows[i]["pass"] != rows[i - 1]["pass"]]
    assert len(flips) == 1
    th = float(rows[flips[0]]["theta"])
    assert abs((th - 0.3) - math.log(2.0)) <= cell + 1e-12

    # UFSJ mirror boundary
    out2 = tmp_path / "sweep_u"
    assert main(["sweep", "--regime", "ufsj", "--rho", "linear:-1", "--alpha", "linear:0.5",
                 "--theta-range", "0.8:1.2:41", "--delta-range", "0.3:0.3:1",
                 "--out", str(out2)]) == 0
    rows2 = read_csv(out2 / "region.csv")
    flips2 = [i for i in range(1, len(rows2)) if rows2[i]["pass"] != rows2[i - 1]["pass"]]
    th2 = float(rows2[flips2[0]]["theta"])
    assert abs((th2 - 0.3) - math.log(2.0)) <= cell + 1e-12

    # degenerate single-point sweep
    out3 = tmp_path / "one"
    assert main(["sweep", "--regime", "sfuj", "--rho", "linear:1", "--alpha", "linear:2",
                 "--theta-range", "1.0", "--delta-range", "0.2",
                 "--out", str(out3)]) == 0
    assert len(read_csv(out3 / "region.csv")) == 1


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--scenario", "scalar_sfuj", "--out", str(out)]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_manifest_replayable(tmp_path):
    out = tmp_path / "m"
    main(["verify", "--scenario", "heat", "--which", "def3", "--step", "0.002",
          "--out", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "verify"
    assert man["scenario"] == "heat"
    assert man["step"] == 0.002
    assert man["which"] == "def3"
    assert man["deterministic"] is True
    assert man["tool"] == "impulsive-iss"
