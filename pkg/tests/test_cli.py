import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from tdenclosure.cli import EXIT_CODES, EXIT_VALIDATION_FAILED, main
from tdenclosure.errors import (InsufficientDataError, RecordMismatchError, ScenarioError,
                                SizingError)
from tdenclosure.solver import RunRecord

from conftest import SCENARIOS

QUICK = SCENARIOS / "quick_sphere.json"


def write_scenario(tmp_path, name="s.json", **edits):
    d = json.loads(QUICK.read_text())
    for key, val in edits.items():
        node = d
        *path, last = key.split(".")
        for k in path:
            node = node[k] if not k.isdigit() else node[int(k)]
        node[last] = val
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scenario", str(QUICK), "--out", str(out), "--variant", "exact"]) == 0
    return out


def test_simulate_file_counts(tmp_path, sim_dir):
    recs = sorted(p.name for p in sim_dir.glob("record_*.csv"))
    assert recs == ["record_free_0.csv", "record_free_1.csv",
                    "record_obstacle_0.csv", "record_obstacle_1.csv"]
    assert main(["simulate", "--scenario", str(QUICK), "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("record_*.csv"))) == 2
    meta = json.loads((tmp_path / "simulate.json").read_text())
    assert meta["variant"] == "tilde" and len(meta["records"]) == 2
    side = json.loads((tmp_path / "record_obstacle_0.json").read_text())
    assert side["scenario_hash"] == meta["scenario_hash"]


def test_simulate_noise_statistics(tmp_path, sim_dir):
    # one record holds ~400 samples (std known to ~3.5%), so pool several seeds
    clean = [RunRecord.from_csv(sim_dir / f"record_obstacle_{j}.csv").values for j in range(2)]
    resid = []
    for seed in (7, 17, 27):
        d = tmp_path / f"n{seed}"
        assert main(["simulate", "--scenario", str(QUICK), "--out", str(d),
                     "--noise", "1e-6", "--seed", str(seed)]) == 0
        for j in range(2):
            noisy = RunRecord.from_csv(d / f"record_obstacle_{j}.csv")
            assert noisy.meta["noise_std"] == 1e-6
            assert np.array_equal(noisy.values[0], clean[j][0])  # t = 0 left untouched
            resid.append((noisy.values - clean[j])[1:].ravel())
    pooled = np.concatenate(resid)
    assert abs(pooled.std() / 1e-6 - 1.0) < 0.05
    assert abs(pooled.mean()) < 4e-6 / np.sqrt(pooled.size)
    # distinct records carry independent noise
    assert abs(np.corrcoef(resid[0], resid[1])[0, 1]) < 4 / np.sqrt(resid[0].size)


def test_overlapping_ball_rejected(tmp_path, capsys):
    p = write_scenario(tmp_path, **{"obstacle.shape.center": [0.3, 0.0, 0.0]})
    code = main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")])
    assert code == EXIT_CODES[ScenarioError]
    assert "B̄∩D̄=∅" in capsys.readouterr().err


def test_sizing_error_hint(tmp_path, capsys):
    p = write_scenario(tmp_path, **{"grid.box": {"lo": [-0.5] * 3, "hi": [1.5, 0.5, 0.5]}})
    code = main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")])
    assert code == EXIT_CODES[SizingError]
    assert "hint: set grid.box" in capsys.readouterr().err


def test_cfl_hint(tmp_path, capsys):
    p = write_scenario(tmp_path, **{"time.dt": 0.05})
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == \
        EXIT_CODES[ScenarioError]
    assert "CFL" in capsys.readouterr().err


def test_missing_records_is_insufficient_data(tmp_path):
    assert main(["indicator", "--scenario", str(QUICK), "--out", str(tmp_path)]) == \
        EXIT_CODES[InsufficientDataError]


def test_hash_mismatch_rejected(tmp_path, sim_dir):
    p = write_scenario(tmp_path, **{"obstacle.impedance.value": 0.5})
    code = main(["indicator", "--scenario", str(p), "--out", str(tmp_path / "o"),
                 "--records", str(sim_dir), "--variant", "exact"])
    assert code == EXIT_CODES[RecordMismatchError]


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["indicator"])
    assert exc.value.code == 2


def test_indicator_outputs(tmp_path, sim_dir):
    assert main(["indicator", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact"]) == 0
    rows = list(csv.reader(open(tmp_path / "indicator.csv")))
    assert rows[0] == ["tau", "I1", "I2", "sum", "log_abs_sum", "scaled_sum"]
    assert len(rows) == 14
    meta = json.loads((tmp_path / "indicator.json").read_text())
    assert len(meta["noise_floor"]) == 13


def test_tau_override(tmp_path, sim_dir):
    assert main(["indicator", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact",
                 "--tau-min", "4", "--tau-max", "12", "--tau-count", "5"]) == 0
    taus = [float(r[0]) for r in list(csv.reader(open(tmp_path / "indicator.csv")))[1:]]
    np.testing.assert_allclose(taus, np.geomspace(4, 12, 5))


def test_classify_above(tmp_path, sim_dir, capsys):
    assert main(["classify", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact"]) == 0
    assert capsys.readouterr().out.strip() == "above"
    assert json.loads((tmp_path / "classify.json").read_text())["verdict"] == "above"


def test_distance_within_band(tmp_path, sim_dir):
    assert main(["distance", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact"]) == 0
    rows = list(csv.reader(open(tmp_path / "distance.csv")))
    assert rows[0] == ["tau_lo", "tau_hi", "slope", "dist", "residual"]
    assert abs(float(rows[1][3]) - 0.6) / 0.6 < 0.15


def test_sweep_t(tmp_path, sim_dir):
    assert main(["sweep-t", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact"]) == 0
    rows = list(csv.reader(open(tmp_path / "tsweep.csv")))
    assert rows[0] == ["T", "verdict", "trend_stat"] and len(rows) == 13
    assert {r[1] for r in rows[1:]} <= {"zero", "above", "below", "indeterminate"}
    assert main(["sweep-t", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact", "--t-grid", "0.5,1.0,1.5"]) == 0
    assert len(list(csv.reader(open(tmp_path / "tsweep.csv")))) == 4
    assert main(["sweep-t", "--scenario", str(QUICK), "--out", str(tmp_path),
                 "--records", str(sim_dir), "--variant", "exact", "--refinement-floor"]) == 0
    assert json.loads((tmp_path / "tsweep.json").read_text())["floor"] == "refinement"


def test_proxies(tmp_path):
    assert main(["proxies", "--scenario", str(QUICK), "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "proxies.csv")))
    assert rows[0] == ["tau", "je", "je_plus"]
    assert all(float(r[1]) > 0 for r in rows[1:])  # lambda = 2 sqrt(eps/mu)


def test_proxies_zero_pulse(tmp_path):
    p = write_scenario(tmp_path, **{"sources.0.pulse.amplitude": 0.0,
                                    "sources.1.pulse.amplitude": 0.0})
    assert main(["proxies", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader(open(tmp_path / "o" / "proxies.csv")))[1:]
    assert all(float(r[1]) == 0 and float(r[2]) == 0 for r in rows)


def test_proxies_need_sphere(tmp_path):
    p = write_scenario(tmp_path, **{"obstacle.shape": {"kind": "box", "lo": [0.7, -0.3, -0.3],
                                                       "hi": [1.3, 0.3, 0.3]}})
    from tdenclosure.errors import UnsupportedGeometryError

    assert main(["proxies", "--scenario", str(p), "--out", str(tmp_path / "o")]) == \
        EXIT_CODES[UnsupportedGeometryError]


def test_rerun_is_byte_identical(tmp_path, sim_dir):
    outs = []
    for k in range(2):
        rec = tmp_path / f"rec{k}"
        out = tmp_path / f"out{k}"
        assert main(["simulate", "--scenario", str(QUICK), "--out", str(rec),
                     "--variant", "exact", "--noise", "1e-14", "--seed", "3"]) == 0
        for cmd in ("indicator", "distance", "classify", "sweep-t"):
            assert main([cmd, "--scenario", str(QUICK), "--out", str(out), "--records", str(rec),
                         "--variant", "exact"]) == 0
        outs.append((rec, out))
    (r0, o0), (r1, o1) = outs
    for a in sorted(list(r0.iterdir()) + list(o0.iterdir())):
        twin = (r1 if a.parent == r0 else o1) / a.name
        assert a.read_bytes() == twin.read_bytes(), a.name


def test_validate_all_pass(tmp_path):
    assert main(["validate", "--scenario", str(QUICK), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert rep["schema"] == "tdenclosure.validate/1"
    assert all(c["pass"] for c in rep["checks"])
    for c in rep["checks"]:
        assert set(c) == {"name", "measured", "tolerance", "pass", "detail"}
    # stable across runs
    shutil.copy(tmp_path / "validate.json", tmp_path / "first.json")
    assert main(["validate", "--scenario", str(QUICK), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "validate.json").read_bytes() == (tmp_path / "first.json").read_bytes()


def test_validate_cfl_fail_entry(tmp_path):
    p = write_scenario(tmp_path, **{"time.dt": 0.05})
    assert main(["validate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == \
        EXIT_VALIDATION_FAILED
    rep = json.loads((tmp_path / "o" / "validate.json").read_text())
    fail = [c for c in rep["checks"] if not c["pass"]]
    assert fail and fail[0]["name"] == "scenario_valid" and "CFL" in fail[0]["detail"]


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "tdenclosure.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
    exe = shutil.which("tdenclosure")
    if exe:
        assert subprocess.run([exe, "--help"], capture_output=True).returncode == 0
