import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gkpsim import runner
from gkpsim.cli import main
from gkpsim.runner import (
    ConfigError,
    ResultSet,
    ResultTable,
    config_from_dict,
    emit_results,
    load_config,
    read_table,
    run_process_tomography,
    run_scan,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "grid": {"l": math.sqrt(2 * math.pi), "r": 0.9, "coefficients": {-1: 1, 0: 2, 1: 1}},
    "recipes": ["0", "1", "+", "-", "phi+", "phi-"],
    "scan": {"axes": ["x", "y", "z"], "t_min": -1.2, "t_max": 1.2, "points": 13},
    "shots": 0,
    "seed": 7,
}


def make(**kw):
    d = json.loads(json.dumps(BASE))
    d.update(kw)
    return config_from_dict(d)


# ------------------------------------------------------------ validation


def test_empty_recipe_list_rejected():
    with pytest.raises(ConfigError, match="recipes"):
        make(recipes=[])


@pytest.mark.parametrize("patch, field", [
    ({"shots": -1}, "shots"),
    ({"recipes": ["nope"]}, "recipes[0]"),
    ({"colour": 3}, "colour"),
    ({"output": {"format": "xml"}}, "output.format"),
    ({"scan": {"t_min": 1.0, "t_max": 0.0}}, "scan.t_max"),
    ({"noise": {}}, "noise.gamma"),
])
def test_bad_fields_are_named(patch, field):
    with pytest.raises(ConfigError) as info:
        make(**patch)
    assert info.value.field == field


def test_physics_parameters_have_no_defaults():
    d = json.loads(json.dumps(BASE))
    del d["grid"]["r"]
    with pytest.raises(ConfigError, match="grid.r"):
        config_from_dict(d)
    d = json.loads(json.dumps(BASE))
    del d["grid"]
    with pytest.raises(ConfigError, match="grid"):
        config_from_dict(d)


def test_yaml_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("grid:\n  l: 2.5\n  r: 0.9\n  coefficients: {0: 1}\n"
                    "recipes: ['0']\nshots: many\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.field == "shots"
    assert info.value.line == 6


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = load_config(path)
        assert cfg.recipes


def test_overrides_change_hash_except_output():
    a = make()
    b = config_from_dict(runner.apply_overrides(BASE, {"seed": 8}))
    c = config_from_dict(runner.apply_overrides(BASE, {"out": "elsewhere"}))
    assert a.config_hash != b.config_hash
    assert a.config_hash == c.config_hash


# ------------------------------------------------------------ scans


@pytest.fixture(scope="module")
def exact_scan():
    return run_scan(make())


def test_scan_cardinality(exact_scan, tmp_path):
    paths = emit_results(exact_scan, tmp_path, "csv")
    scans = [p for p in paths if p.name.startswith("scan_")]
    assert len(scans) == 6 * 3
    assert len({p.name for p in scans}) == 18


def test_scan_columns(exact_scan):
    t = exact_scan.tables[0]
    assert t.columns[:6] == ("t", "axis", "re_estimate", "im_estimate", "stderr", "shots")
    assert len(t.rows) == 13


def test_z_scan_revivals():
    cfg = make(recipes=["0"], scan={"axes": ["z"], "t_min": 0.0, "t_max": 1.2, "points": 121})
    rows = run_scan(cfg).tables[0].rows
    t = np.array([r[0] for r in rows])
    re = np.array([r[2] for r in rows])
    peaks = [i for i in range(1, len(t) - 1) if re[i] > re[i - 1] and re[i] > re[i + 1]]
    # the decaying envelope pulls each revival slightly towards t = 0
    assert any(abs(t[i] - 0.5) <= 0.03 for i in peaks)
    assert any(abs(t[i] - 1.0) <= 0.03 for i in peaks)
    at = lambda x: re[np.argmin(abs(t - x))]  # noqa: E731
    assert at(0.25) < at(0.5) - 0.3
    assert at(0.75) < at(1.0) - 0.3


def test_sampled_within_three_sigma():
    cfg = make(recipes=["0", "+"], shots=200, seed=3)
    res = run_scan(cfg)
    n_out = 0
    total = 0
    for table in res.tables:
        for row in table.rows:
            t, axis, re, im, se, shots, se_im, ex_re, ex_im = row
            sigma = math.sqrt(max(1 - ex_re**2, 1e-12) / shots)
            total += 1
            if abs(re - ex_re) > 3 * sigma + 1e-12:
                n_out += 1
    # 3 sigma on roughly 80 points: allow at most one statistical excursion
    assert n_out <= 1, f"{n_out}/{total} points outside 3 sigma"


def test_bootstrap_error_matches_binomial():
    res = run_scan(make(recipes=["0"], shots=400, scan={"axes": ["x"], "points": 9}))
    for row in res.tables[0].rows:
        binom = 2 * math.sqrt(max((1 - row[2] ** 2) / 4, 0) / 400)
        assert row[4] == pytest.approx(binom, rel=0.25, abs=2e-3)


def test_converges_at_large_shot_count():
    shots = 100_000
    res = run_scan(make(recipes=["0", "phi+"], shots=shots, seed=11))
    for table in res.tables:
        for row in table.rows:
            assert abs(row[2] - row[7]) <= 3 / math.sqrt(shots)
            assert abs(row[3] - row[8]) <= 3 / math.sqrt(shots)


def test_workers_do_not_change_results():
    a = run_scan(make(recipes=["0", "+"], shots=50))
    b = run_scan(make(recipes=["0", "+"], shots=50, workers=4))
    assert [t.rows for t in a.tables] == [t.rows for t in b.tables]


def test_scan_yields_are_sampled():
    res = run_scan(make(shots=50))
    y = res.summary["yields"]
    assert y["0"]["estimate"] == pytest.approx(3 / 8, abs=0.02)
    assert y["phi+"]["estimate"] == pytest.approx(3 / 16, abs=0.02)
    assert y["0"]["attempts"] > y["0"]["successes"]


# ------------------------------------------------------------ output


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(exact_scan, tmp_path, fmt):
    paths = emit_results(exact_scan, tmp_path, fmt)
    for table, path in zip(exact_scan.tables, paths):
        back = read_table(path)
        assert back.columns == table.columns
        assert len(back.rows) == len(table.rows)
        for r0, r1 in zip(table.rows, back.rows):
            for a, b in zip(r0, r1):
                if isinstance(a, str):
                    assert a == b
                else:
                    assert b == pytest.approx(a, rel=1e-11, abs=1e-300)
        assert back.metadata["config_hash"] == exact_scan.metadata["config_hash"]


def test_unknown_format_raises(tmp_path):
    res = ResultSet([ResultTable("t", ("a",), [[1.0]])], {})
    with pytest.raises(ValueError, match="format"):
        emit_results(res, tmp_path, "parquet")


def test_floats_have_twelve_digits(tmp_path):
    res = ResultSet([ResultTable("t", ("a",), [[1 / 3]])], {"config_hash": "x"})
    (path,) = emit_results(res, tmp_path, "csv")
    assert path.read_text().splitlines()[-1] == "0.333333333333"


def test_byte_identical_outputs(tmp_path):
    cfg = make(recipes=["0", "-"], shots=100)
    emit_results(run_scan(cfg), tmp_path / "a", "csv")
    emit_results(run_scan(cfg), tmp_path / "b", "csv")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


# ------------------------------------------------------------ process tomography


def test_identity_process():
    res = run_process_tomography(make(), "identity")
    assert res.fidelity >= 0.999


def test_pauli_x_process():
    cfg = config_from_dict({**BASE, "process": [{"kind": "pauli", "axis": "x"}]})
    res = run_process_tomography(cfg)
    assert res.fidelity >= 0.97


def test_hadamard_relabel_is_perfect():
    res = run_process_tomography(make(), "hadamard_relabel")
    assert abs(res.fidelity - 1) <= 1e-9


def test_hadamard_rotated_frame_close():
    res = run_process_tomography(make(), "hadamard_rotation")
    assert res.fidelity > 0.99


# ------------------------------------------------------------ CLI


def test_cli_prepare(tmp_path, capsys):
    code = main(["prepare", "--config", str(CONFIGS / "readout_scan.yaml"),
                 "--out", str(tmp_path), "--shots", "2000", "--seed", "5"])
    assert code == 0
    table = read_table(tmp_path / "prepare.csv")
    col = table.columns.index("yield_sampled")
    got = {str(r[0]): r[col] for r in table.rows}
    assert got["0"] == pytest.approx(0.375, abs=0.03)
    assert got["phi+"] == pytest.approx(0.1875, abs=0.03)


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: {l: 2.5, r: 0.9, coefficients: {0: 1}}\nrecipes: []\n")
    assert main(["scan", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "recipes" in capsys.readouterr().err


def test_cli_truncation_error(tmp_path, capsys):
    code = main(["wigner", "--config", str(CONFIGS / "readout_scan.yaml"),
                 "--out", str(tmp_path), "--fock-dim", "32"])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_tomography_state_summary(tmp_path, capsys):
    code = main(["tomography-state", "--config", str(CONFIGS / "readout_scan.yaml"),
                 "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["mean_fidelity"] == pytest.approx(0.908, abs=0.005)


def test_cli_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**BASE, "recipes": ["0"], "scan": {"axes": ["z"], "points": 5}}))
    out = subprocess.run([sys.executable, "-m", "gkpsim.cli", "scan", "--config", str(cfg),
                          "--out", str(tmp_path / "o"), "--format", "json"],
                         capture_output=True, text=True, check=True)
    assert "scan_0_z.json" in out.stdout
    assert read_table(tmp_path / "o" / "scan_0_z.json").rows
