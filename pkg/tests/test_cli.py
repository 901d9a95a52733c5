import json
import subprocess
import sys

import numpy as np
import pytest

from gapless import __version__
from gapless.cli import run
from gapless.io import read_csv_rows


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    cols, rows = read_csv_rows(text.splitlines(keepends=True))
    return cols, rows


def test_scaling_exponent(capsys):
    code, out, _ = call(capsys, "scaling", "exponent", "--z", 2, "--d", 2)
    assert code == 0
    cols, rows = csv_rows(out)
    row = dict(zip(cols, rows[0]))
    assert row["exponent"] == "1/36" and float(row["exponent_float"]) == pytest.approx(1 / 36)


def test_scaling_expected_terms(capsys):
    _, out, _ = call(capsys, "scaling", "exponent", "--z", 2, "--d", 2, "--eps", 0.1)
    cols, rows = csv_rows(out)
    assert float(dict(zip(cols, rows[0]))["expected_terms"]) == pytest.approx(1e36)


def test_pauli_ising_spectrum(capsys, tmp_path):
    spec_path = tmp_path / "ising.json"
    assert call(capsys, "ham", "pauli-chain", "--sites", 2, "--only", "J33=1", "--out", spec_path)[0] == 0
    code, out, _ = call(capsys, "spectrum", "--spec", spec_path, "--method", "dense")
    assert code == 0
    _, rows = csv_rows(out)
    assert sorted(float(r[1]) for r in rows) == pytest.approx([-1, -1, 1, 1])


def test_planted_gap(capsys, tmp_path):
    p = tmp_path / "plant.json"
    code, _, _ = call(capsys, "plant", "continuous", "--sites", 8, "--edge", "3,4", "--s", 0.01, "--eps", 0, "--seed", 7, "--out", p)
    assert code == 0
    code, out, _ = call(capsys, "gap", "--spec", p)
    cols, rows = csv_rows(out)
    row = dict(zip(cols, rows[0]))
    assert abs(float(row["gap"]) - 0.01) < 1e-9 and row["degeneracy"] == "1"
    code, out, _ = call(capsys, "certify", "--spec", p)
    cols, rows = csv_rows(out)
    assert cols == ["kind", "location", "eps", "z", "bound", "observed", "pass"]
    assert rows[0][0] == "continuous_edge" and rows[0][-1] == "1"


@pytest.mark.parametrize(
    "argv",
    [
        ["plant", "projector", "--sites", 5, "--vertex", 2, "--eps", 1e-4, "--seed", 1],
        ["plant", "discrete", "--sites", 5, "--edge", "0,1", "--k", 2, "--atoms", "0,0.3,0.7,1.1,1.6", "--seed", 2],
        ["plant", "dos-ladder", "--sites", 8, "--edges", "0,1;4,5", "--s-values", "0.01,0.02", "--seed", 3],
    ],
)
def test_other_plants_certify(capsys, tmp_path, argv):
    p = tmp_path / "p.json"
    assert call(capsys, *argv, "--out", p)[0] == 0
    code, out, _ = call(capsys, "certify", "--spec", p)
    assert code == 0
    _, rows = csv_rows(out)
    assert rows and all(r[-1] == "1" for r in rows)


def test_gap_from_spectrum_csv(capsys, tmp_path):
    spec_path, spec_csv = tmp_path / "s.json", tmp_path / "s.csv"
    call(capsys, "ham", "random", "--sites", 4, "--seed", 3, "--out", spec_path)
    call(capsys, "spectrum", "--spec", spec_path, "--out", spec_csv)
    _, direct, _ = call(capsys, "gap", "--spec", spec_path)
    _, via_csv, _ = call(capsys, "gap", "--spectrum", spec_csv)
    assert csv_rows(direct)[1] == csv_rows(via_csv)[1]


def test_lanczos_method(capsys, tmp_path):
    spec_path = tmp_path / "s.json"
    call(capsys, "ham", "random", "--sites", 6, "--seed", 4, "--out", spec_path)
    code, out, _ = call(capsys, "spectrum", "--spec", spec_path, "--method", "lanczos", "--k", 3, "--seed", 1)
    assert code == 0
    _, dense, _ = call(capsys, "spectrum", "--spec", spec_path)
    lan = [float(r[1]) for r in csv_rows(out)[1]]
    den = [float(r[1]) for r in csv_rows(dense)[1]][:3]
    assert np.allclose(lan, den, atol=1e-8)


def test_lanczos_non_convergence_exit_2(capsys, tmp_path):
    spec_path = tmp_path / "s.json"
    call(capsys, "ham", "random", "--sites", 8, "--seed", 4, "--out", spec_path)
    code, _, err = call(capsys, "spectrum", "--spec", spec_path, "--method", "lanczos", "--k", 2, "--max-iter", 4, "--seed", 1)
    assert code == 2 and "converge" in err


def test_round_trip_byte_lossless(capsys, tmp_path):
    a = tmp_path / "a.json"
    call(capsys, "plant", "continuous", "--sites", 5, "--edge", "1,2", "--s", 0.02, "--eps", 1e-3, "--seed", 11, "--out", a)
    data = json.loads(a.read_text())
    from gapless.hamiltonian import spec_from_dict, spec_to_dict

    again = spec_to_dict(spec_from_dict(data))
    for key in ("d", "sites", "edges", "terms"):
        assert json.dumps(again[key]) == json.dumps(data[key])


class TestHeaders:
    def test_csv_header(self, capsys):
        _, out, _ = call(capsys, "ensemble", "mc-exponent", "--n", 2, "--trials", 1000, "--seed", 5)
        lines = out.splitlines()
        assert lines[0] == f"# gapless {__version__}"
        assert lines[1] == "# subcommand: ensemble mc-exponent"
        assert lines[2].startswith("# config: ") and '"trials": 1000' in lines[2]
        assert lines[3] == "# seed: 5"

    def test_json_meta(self, capsys):
        _, out, _ = call(capsys, "ham", "random", "--sites", 3, "--seed", 6)
        meta = json.loads(out)["meta"]
        assert meta["tool"] == f"gapless {__version__}" and meta["seed"] == 6 and meta["subcommand"] == "ham random"


class TestMc:
    def test_slope_file(self, capsys, tmp_path):
        out = tmp_path / "mc.csv"
        code, _, _ = call(capsys, "ensemble", "mc-spacing", "--n", 2, "--trials", 20000, "--seed", 1, "--out", out)
        assert code == 0
        cols, rows = read_csv_rows(open(tmp_path / "mc.slope.csv"))
        assert cols == ["slope", "ci_lo", "ci_hi", "paper_exponent", "dimension_count_exponent"]
        assert rows[0][3] == "4"
        cols, rows = read_csv_rows(open(out))
        assert cols == ["eps", "estimate", "stderr", "trials"] and len(rows) == 4

    def test_workers_byte_identical(self, capsys, tmp_path):
        files = []
        for w in (1, 4):
            f = tmp_path / f"w{w}.csv"
            call(capsys, "ensemble", "mc-exponent", "--n", 2, "--trials", 5000, "--chunk", 1000, "--seed", 2, "--workers", w, "--out", f)
            files.append((f.read_bytes(), (tmp_path / f"w{w}.slope.csv").read_bytes()))
        assert files[0] == files[1]

    def test_random_seed_is_printed(self, capsys):
        code, out, err = call(capsys, "ensemble", "mc-exponent", "--trials", 100, "--seed", "random")
        assert code == 0
        (line,) = [ln for ln in err.splitlines() if ln.startswith("seed: ")]
        seed = int(line.split("seed: ")[1])
        assert f"# seed: {seed}" in out


class TestErrors:
    def test_seed_required(self, capsys):
        code, _, err = call(capsys, "ensemble", "sample", "--n", 2)
        assert code == 1 and "--seed" in err

    def test_bad_seed(self, capsys):
        assert call(capsys, "ham", "random", "--sites", 3, "--seed", "abc")[0] == 1

    def test_unknown_flag(self, capsys):
        code, _, err = call(capsys, "scaling", "exponent", "--zz", 2)
        assert code == 1 and "usage" in err

    def test_unknown_subcommand(self, capsys):
        assert call(capsys, "frobnicate")[0] == 1

    def test_validation_error(self, capsys):
        assert call(capsys, "ensemble", "mc-exponent", "--eps", "0.1,0.2,0.3,0.4", "--seed", 1, "--trials", 10)[0] == 1

    def test_missing_spec_file(self, capsys, tmp_path):
        assert call(capsys, "spectrum", "--spec", tmp_path / "nope.json")[0] == 1

    def test_certify_without_records(self, capsys, tmp_path):
        p = tmp_path / "s.json"
        call(capsys, "ham", "random", "--sites", 3, "--seed", 1, "--out", p)
        assert call(capsys, "certify", "--spec", p)[0] == 1

    def test_dense_cap_flag(self, capsys, tmp_path):
        p = tmp_path / "s.json"
        call(capsys, "ham", "random", "--sites", 5, "--seed", 1, "--out", p)
        assert call(capsys, "--dense-cap", 16, "spectrum", "--spec", p)[0] == 1


class TestConfig:
    def test_config_values_and_flag_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('seed = 9\n\n[scaling.exponent]\nz = 6\nd = 2\n')
        _, out, _ = call(capsys, "scaling", "exponent", "--config", cfg)
        assert csv_rows(out)[1][0][2] == "1/100"
        _, out, _ = call(capsys, "scaling", "exponent", "--config", cfg, "--z", 2)
        assert csv_rows(out)[1][0][2] == "1/36"
        # the shared top-level seed reaches subcommands that take one
        _, out, _ = call(capsys, "ham", "random", "--sites", 3, "--config", cfg)
        assert json.loads(out)["meta"]["seed"] == 9

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("[scaling.exponent]\nzz = 6\n")
        code, _, err = call(capsys, "scaling", "exponent", "--config", cfg)
        assert code == 1 and "zz" in err


def test_sweep_cli(capsys, tmp_path):
    out, summary = tmp_path / "sw.csv", tmp_path / "sum.csv"
    code, _, _ = call(capsys, "sweep", "gap-vs-size", "--sizes", "3,4", "--trials", 2, "--seed", 1, "--out", out, "--summary-out", summary)
    assert code == 0
    cols, rows = read_csv_rows(open(out))
    assert cols == ["N", "trial", "gap", "degeneracy", "converged"] and len(rows) == 4
    assert read_csv_rows(open(summary))[0][0] == "N"


def test_scan_cli(capsys, tmp_path):
    p = tmp_path / "p.json"
    call(capsys, "plant", "continuous", "--sites", 6, "--edge", "2,3", "--seed", 1, "--out", p)
    _, out, _ = call(capsys, "scan", "rare", "--spec", p, "--eps", 1e-6)
    rows = {r[0]: r for r in csv_rows(out)[1]}
    assert rows["2-3"][-1] == "1"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gapless", "scaling", "exponent", "--z", "2", "--d", "2"], capture_output=True, text=True)
    assert res.returncode == 0 and "1/36" in res.stdout
    res = subprocess.run([sys.executable, "-m", "gapless", "ensemble", "sample"], capture_output=True, text=True)
    assert res.returncode == 1


def test_dense_cap_flag_is_scoped(capsys, tmp_path):
    import os

    p = tmp_path / "s.json"
    call(capsys, "ham", "random", "--sites", 3, "--seed", 1, "--out", p)
    call(capsys, "--dense-cap", 4, "spectrum", "--spec", p)
    assert "GAPLESS_DENSE_CAP" not in os.environ
