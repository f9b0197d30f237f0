import csv
import json
import math

import numpy as np
import pytest

from eddy_ns import spectral_field as sp
from eddy_ns.cli import main
from eddy_ns.io import ConfigError, fmt, parse_config

RUN_CFG = """\
# small smoke run
nu = 0.1
N = 16
T = 0.0625
dt = 1/64
A_kind = bump
A_amplitude = 0.1
u0_kind = taylor_green
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# --- config parsing ---------------------------------------------------------

def test_parse_config_types_and_comments():
    cfg = parse_config("nu = 0.2  # viscosity\nN=8\ndt = 1/128\neps = 0.9, 0.8\nA_kind=zero\n")
    assert cfg["nu"] == 0.2 and cfg["N"] == 8 and cfg["dt"] == 1 / 128
    assert cfg["eps"] == [0.9, 0.8] and cfg["A_kind"] == "zero"
    assert cfg.given == {"nu", "N", "dt", "eps", "A_kind"}


@pytest.mark.parametrize("text", ["bogus = 1\n", "nu = -1\n", "N = x\n", "A_kind = cone\n",
                                  "u0_kind = vortex\n", "no equals sign\n", "dt = 1/0\n"])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_fmt_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(math.pi)) == math.pi
    assert fmt(3) == "3" and fmt(True) == "true"


# --- exit codes -------------------------------------------------------------

def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG + "colour = blue\n")
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_missing_u0_kind_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, "N = 16\n")
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert main(["nse-run", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_eps_below_guard_exit_2(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG + "eps = 0.1\n")
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_sweep_requires_decreasing_eps(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG + "eps = 0.8, 1.6\n")
    assert main(["nse-sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_picard_failure_exit_1(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG + "picard_max = 1\n")
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 1


# --- nse-run outputs ----------------------------------------------------------

@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg = write_cfg(d, RUN_CFG)
    assert main(["nse-run", "--config", str(cfg), "--out", str(d / "out"), "--quiet"]) == 0
    return d / "out"


def test_run_outputs_exist(run_dir):
    for name in ("diagnostics.csv", "hm.csv", "summary.json", "u_initial.bin", "u_final.bin", "p_final.bin"):
        assert (run_dir / name).is_file()


def test_diagnostics_csv(run_dir):
    rows = read_csv(run_dir / "diagnostics.csv")
    assert rows[0] == ["t", "W", "J", "K_Aeps", "V", "balance_residual", "tail_R2"]
    assert len(rows) == 1 + 5
    W = [float(r[1]) for r in rows[1:]]
    assert all(b < a for a, b in zip(W, W[1:]))
    # full-precision floats round-trip
    for r in rows[1:]:
        for v in r:
            if v not in ("0", "nan"):
                assert float(fmt(float(v))) == float(v)
    assert float(rows[1][5]) == 0.0


def test_hm_csv(run_dir):
    rows = read_csv(run_dir / "hm.csv")
    assert rows[0] == ["t", "m", "Hm_norm", "Vm"]
    ms = [int(r[1]) for r in rows[1:]]
    assert set(ms) == {0, 1, 2}


def test_summary_json(run_dir):
    s = json.loads((run_dir / "summary.json").read_text())
    assert s["passed"] is True and s["command"] == "nse-run"
    assert s["config"]["u0_kind"] == "taylor_green"
    assert all(c["passed"] for c in s["checks"].values())


def test_snapshots_readable(run_dir):
    u, g = sp.read_field(run_dir / "u_final.bin")
    assert u.shape == (3, 16, 16, 16) and g.N == 16
    p, _ = sp.read_field(run_dir / "p_final.bin")
    assert p.shape == (16, 16, 16)


def test_run_is_deterministic(tmp_path, run_dir):
    cfg = write_cfg(tmp_path, RUN_CFG)
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "again"), "--quiet"]) == 0
    for name in ("diagnostics.csv", "hm.csv", "u_final.bin", "p_final.bin"):
        assert (tmp_path / "again" / name).read_bytes() == (run_dir / name).read_bytes()


def test_random_seed_flag(tmp_path):
    text = RUN_CFG.replace("taylor_green", "random").replace("A_amplitude = 0.1", "A_amplitude = 0.0")
    cfg = write_cfg(tmp_path, text)
    finals = []
    for seed in (1, 1, 2):
        out = tmp_path / f"s{len(finals)}"
        assert main(["nse-run", "--config", str(cfg), "--out", str(out), "--seed", str(seed), "--quiet"]) == 0
        finals.append(sp.read_field(out / "u_initial.bin")[0])
    np.testing.assert_array_equal(finals[0], finals[1])
    assert not np.array_equal(finals[0], finals[2])


def test_shear_run_heat_oracle(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "N = 16\nT = 0.25\ndt = 1/32\nu0_kind = shear\n")
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "[PASS] heat-decay oracle" in out


# --- verification commands ----------------------------------------------------

def test_volterra_demo(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "M = 1024\n")
    assert main(["volterra-demo", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("[PASS]") for line in lines)
    rows = read_csv(tmp_path / "v" / "volterra_blowup.csv")
    assert rows[0] == ["t", "f"]


def test_oseen_verify(tmp_path):
    cfg = write_cfg(tmp_path, "scan_n = 200\n")
    assert main(["oseen-verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    rows = read_csv(tmp_path / "o" / "oseen_scan.csv")
    assert rows[0] == ["m", "y", "normalized_value"]
    assert {r[0] for r in rows[1:]} == {"0", "1", "2"}


def test_mollifier_verify(tmp_path):
    cfg = write_cfg(tmp_path, "N = 32\nn_fields = 6\n")
    assert main(["mollifier-verify", "--config", str(cfg), "--out", str(tmp_path / "m"), "--quiet"]) == 0
    s = json.loads((tmp_path / "m" / "summary.json").read_text())
    assert s["passed"] is True


def test_check_keys_not_accepted_by_run(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG + "n_fields = 3\n")
    assert main(["nse-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_sweep_small(tmp_path):
    text = "nu = 0.1\nN = 16\nT = 0.0625\ndt = 1/64\nu0_kind = taylor_green\neps = 3.0, 2.0, 1.0\n"
    cfg = write_cfg(tmp_path, text)
    code = main(["nse-sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--quiet"])
    assert code in (0, 1)
    rows = read_csv(tmp_path / "s" / "sweep_distances.csv")
    assert rows[0] == ["eps_a", "eps_b", "t", "L2_distance"] and len(rows) == 1 + 2 * 3
    s = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert s["passed"] == (code == 0)
