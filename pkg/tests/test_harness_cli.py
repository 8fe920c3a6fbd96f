import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from beable_lab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from beable_lab.harness import (
    SEED_ENV,
    TABLE_HEADER,
    ConfigError,
    ExperimentConfig,
    resolve_system,
    run_experiment,
)


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


BELL = {"kind": "bell", "seed": 3, "n_runs": 4000, "t_end": 2.0, "record_times": [0.5, 1.0, 2.0], "check": {"tv_max": 0.03}}


def test_bell_run_writes_reports(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, BELL)), "--out", str(out), "--check"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 3 and summary["config"]["n_runs"] == 4000 and summary["passed"]
    with open(out / "table.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TABLE_HEADER and len(rows) == 1 + 3 * 2
    for t, per in zip([0.5, 1.0, 2.0], summary["results"]["per_time"]):
        assert per["time"] == t
    born = [float(r[4]) for r in rows[1:] if r[1] == "1"]
    np.testing.assert_allclose(born, np.sin([0.5, 1.0, 2.0]) ** 2, atol=1e-12)


def test_repeat_runs_are_bit_identical(tmp_path):
    path = _write(tmp_path, BELL)
    run_experiment(ExperimentConfig.load(path), tmp_path / "a")
    run_experiment(ExperimentConfig.load(path), tmp_path / "b")
    assert (tmp_path / "a" / "table.csv").read_bytes() == (tmp_path / "b" / "table.csv").read_bytes()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_seed_precedence(tmp_path, monkeypatch):
    path = _write(tmp_path, BELL)
    assert ExperimentConfig.load(path).seed == 3
    monkeypatch.setenv(SEED_ENV, "17")
    assert ExperimentConfig.load(path).seed == 17
    assert ExperimentConfig.load(path, seed_override=5).seed == 5
    monkeypatch.setenv(SEED_ENV, "abc")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


@pytest.mark.parametrize(
    "cfg",
    [
        {"kind": "teleport", "seed": 1},
        {"kind": "bell", "n_runs": 10, "t_end": 1.0},
        {"kind": "bell", "seed": 1, "t_end": 1.0},
        {"kind": "bell", "seed": 1, "n_runs": 10},
        {"kind": "bell", "seed": 1, "n_runs": 10, "t_end": 1.0, "system": {"preset": "moon"}},
        {"kind": "bell", "seed": 1, "n_runs": 10, "t_end": 1.0, "system": {"hamiltonian": [[0, 1], [0, 0]]}},
        {"kind": "bell", "seed": 1, "n_runs": 10, "t_end": 1.0, "system": {"preset": "rabi"}, "q0": 7},
        {"kind": "bell", "seed": 1, "n_runs": 10, "t_end": 1.0, "controls": {"warp": 2}},
        {"kind": "two-state", "seed": 1, "n_runs": 10, "steps": 3, "system": {"preset": "haar", "dim": 3}},
        {"kind": "circuit", "seed": 1, "n_runs": 10, "circuit": "missing.txt"},
    ],
)
def test_config_errors_exit_2(tmp_path, cfg):
    assert main(["run", str(_write(tmp_path, cfg))]) == EXIT_CONFIG


def test_unreadable_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == EXIT_CONFIG


def test_numerical_failure_exit_3(tmp_path):
    # Rabi from config 0 must jump twice before t = 3.5; one jump is allowed
    cfg = dict(BELL, t_end=3.5, record_times=[3.5], q0=0, controls={"max_jumps": 1})
    assert main(["run", str(_write(tmp_path, cfg))]) == EXIT_NUMERIC


def test_check_failure_exit_4(tmp_path):
    cfg = {"kind": "violation-scan", "seed": 0, "n_samples": 100, "check": {"fraction_range": [0.5, 0.6]}}
    out = tmp_path / "out"
    assert main(["run", str(_write(tmp_path, cfg)), "--check", "--out", str(out)]) == EXIT_CHECK
    assert not json.loads((out / "summary.json").read_text())["passed"]
    # without --check the same breach is reported but not fatal
    assert main(["run", str(_write(tmp_path, cfg))]) == EXIT_OK


def test_scan_command(tmp_path):
    out = tmp_path / "scan"
    assert main(["scan", "--samples", "300", "--out", str(out), "--check"]) == EXIT_OK
    res = json.loads((out / "summary.json").read_text())["results"]
    assert res["n_samples"] == 300 and res["tallies"]["cond4"] == 0
    assert res["entry_count"] <= res["violation_count"] <= res["any_count"]


def test_scan_identity_unitary_no_violations(tmp_path):
    cfg = {"kind": "violation-scan", "seed": 2, "n_samples": 50, "identity_unitary": True}
    summary = run_experiment(ExperimentConfig.from_dict(cfg))
    assert summary["results"]["any_count"] == 0


def test_circuit_command(tmp_path):
    circ = tmp_path / "bell.txt"
    circ.write_text("qubits 2\ng H q 0\ncnot 0 1\ng T q 1\n")
    out = tmp_path / "c"
    assert main(["circuit", str(circ), "--runs", "5000", "--tv-max", "0.03", "--out", str(out), "--check"]) == EXIT_OK
    per_gate = json.loads((out / "summary.json").read_text())["results"]["per_gate"]
    assert len(per_gate) == 4


def test_circuit_format_error_exit_2(tmp_path):
    circ = tmp_path / "bad.txt"
    circ.write_text("qubits 2\nswap 0 1\n")
    assert main(["circuit", str(circ)]) == EXIT_CONFIG


def test_circuit_config_relative_path(tmp_path):
    (tmp_path / "x.txt").write_text("qubits 1\ng X q 0\n")
    cfg = {"kind": "circuit", "seed": 0, "n_runs": 100, "circuit": "x.txt", "q0": 0}
    summary = run_experiment(ExperimentConfig.load(_write(tmp_path, cfg)))
    assert summary["results"]["per_gate"][-1]["tv_distance"] == 0


@pytest.mark.parametrize(
    "cfg",
    [
        {"kind": "restricted", "seed": 1, "n_runs": 3000, "tau": 0.3, "steps": 4, "check": {"tv_max": 0.04}},
        {"kind": "two-state", "seed": 1, "n_runs": 3000, "steps": 5, "tau": 0.3, "check": {"tv_max": 0.04}},
        {"kind": "iid", "seed": 1, "n_runs": 1, "steps": 5000, "tau": 0.1},
        {"kind": "convergence", "taus": [0.2, 0.1, 0.05]},
    ],
)
def test_other_kinds_pass_checks(tmp_path, cfg):
    assert main(["run", str(_write(tmp_path, cfg)), "--check"]) == EXIT_OK


def test_unitary_system_with_blocks():
    U = np.linalg.qr(np.arange(16).reshape(4, 4) + 1j * np.eye(4))[0]
    spec = {"unitary": [[[z.real, z.imag] for z in row] for row in U], "psi0": ["1", "1j", 0, 0], "blocks": [[0, 3], [1, 2]]}
    s = resolve_system(spec)
    assert s.dec.n_configs == 2
    np.testing.assert_allclose(s.psi0.amplitudes, [2**-0.5, 1j * 2**-0.5, 0, 0])
    np.testing.assert_allclose(s.hamiltonian(0.5).propagator(0.5), U, atol=1e-12)
    with pytest.raises(ConfigError):
        resolve_system(dict(spec, blocks=[[0, 1], [2]]))


def test_console_script_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "beable_lab.cli", "scan", "--samples", "20"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["kind"] == "violation-scan"
