import csv
import json

import numpy as np
import pytest

from adjwalk.cli import ExperimentManifest, main, run
from adjwalk.streams import seed_stream


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        rows = list(csv.reader(fh))
    return first, rows[0], rows[1:]


def test_manifest_roundtrip_and_hash():
    m = ExperimentManifest(kind="simulate", n=8, lam=0.3, t_grid=[1.0, 2.0],
                           trajectories=5, seed=42)
    m2 = ExperimentManifest.from_json(m.to_json())
    assert m2 == m
    assert m2.hash == m.hash
    m3 = ExperimentManifest.from_json(m.to_json())
    m3.seed = 43
    assert m3.hash != m.hash


def test_simulate_outputs(tmp_path):
    m = ExperimentManifest(kind="simulate", n=4, lam=0.3, t_grid=[0.5, 1.0],
                           trajectories=3, seed=7)
    assert run(m, out_dir=str(tmp_path)) == 0
    first, header, rows = read_csv(tmp_path / "trajectory.csv")
    assert first == f"# manifest: {m.hash}\r\n"
    assert header == ["t", "k", "x_k"]
    assert len(rows) == 2 * 5  # two times, N+1 sites
    for t, k, v in rows:
        assert 0.0 <= float(v) <= 4.0
    summary = json.loads((tmp_path / "simulate_summary.json").read_text())
    assert summary["manifest_hash"] == m.hash
    assert summary["status"] == "pass"
    assert len(summary["mean_heights"]) == 2


def test_cli_flags_override_manifest(tmp_path):
    base = ExperimentManifest(kind="simulate", n=4, lam=0.3, t_grid=[1.0],
                              trajectories=2, seed=1)
    mf = tmp_path / "m.json"
    mf.write_text(base.to_json())
    rc = main(["simulate", "--manifest", str(mf), "--seed", "9",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "simulate_summary.json").read_text())
    assert summary["manifest"]["seed"] == 9
    assert summary["manifest"]["n"] == 4


def test_usage_errors(tmp_path):
    # invalid model parameters are a usage error, not an assertion failure
    assert main(["simulate", "--n", "1", "--lambda", "0.3", "--t", "1.0",
                 "--out-dir", str(tmp_path)]) == 2
    assert main(["simulate", "--n", "4", "--lambda", "1.5", "--t", "1.0",
                 "--out-dir", str(tmp_path)]) == 2
    assert main(["cutoff-sweep", "--out-dir", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["not-a-command"])


def test_stationary_test_passes(tmp_path):
    rc = main(["stationary-test", "--n", "8", "--lambda", "0.3",
               "--samples", "2000", "--seed", "3", "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "stationary_test.json").read_text())
    assert rep["status"] == "pass"
    assert all(r["p_value"] > 0.01 for r in rep["tests"])


def test_decay_writes_report(tmp_path):
    rc = main(["decay", "--n", "8", "--lambda", "0.3", "--t-grid",
               ",".join(str(v) for v in np.arange(1.0, 9.0)),
               "--trajectories", "800", "--seed", "5", "--out-dir", str(tmp_path)])
    rep = json.loads((tmp_path / "decay.json").read_text())
    assert rep["slope"] < 0.0
    assert (rc == 0) == (rep["ci_low"] <= rep["gamma_N"] <= rep["ci_high"])


def test_coupling_csv_sentinel(tmp_path):
    m = ExperimentManifest(kind="coupling", n=4, lam=0.3, t_grid=[0.01],
                           trajectories=20, seed=11)
    assert run(m, out_dir=str(tmp_path)) == 0
    _, header, rows = read_csv(tmp_path / "coalescence.csv")
    assert header == ["trajectory", "seed", "merge_time", "merged"]
    for _, _, mt, merged in rows:
        if merged == "false":
            assert float(mt) == -1.0  # sentinel for "not merged by t_end"
        else:
            assert 0.0 <= float(mt) <= 0.01


def test_mixing_experiment_and_thread_determinism(tmp_path):
    m = ExperimentManifest(kind="mixing", n=4, lam=0.3, epsilon=0.25,
                           t_grid=np.linspace(1.0, 40.0, 6).tolist(),
                           trajectories=150, seed=13)
    d1 = tmp_path / "one"
    d8 = tmp_path / "eight"
    assert run(m, out_dir=str(d1), threads=1) == 0
    assert run(m, out_dir=str(d8), threads=8) == 0
    b1 = (d1 / "mixing_window.json").read_bytes()
    b8 = (d8 / "mixing_window.json").read_bytes()
    assert b1 == b8


def test_failure_report_written(tmp_path):
    # lax regime gate: hydro-transformed requires lam >= 4 log N / N
    rc = main(["hydro-transformed", "--n", "64", "--lambda", "0.05",
               "--t", "1.0", "--trajectories", "5", "--seed", "1",
               "--out-dir", str(tmp_path)])
    assert rc == 2


def test_cutoff_sweep_csv(tmp_path):
    rc = main(["cutoff-sweep", "--schedule", "2:0.6:vanishing",
               "--trajectories", "400", "--seed", "5", "--eps", "0.25",
               "--out-dir", str(tmp_path), "--threads", "1"])
    assert rc == 0
    _, header, rows = read_csv(tmp_path / "cutoff_sweep.csv")
    assert header[:3] == ["N", "lambda", "regime"]
    assert rows[0][0] == "2" and rows[0][2] == "vanishing"
    assert float(rows[0][4]) <= float(rows[0][5])


def test_seed_stream_contract():
    a = seed_stream(5, 0).random(4)
    b = seed_stream(5, 0).random(4)
    c = seed_stream(5, 1).random(4)
    d = seed_stream(6, 0).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
