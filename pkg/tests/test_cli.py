import math
import os

import pytest

from physchip import cli
from physchip.circuit import circuit_accuracy, half_adder
from physchip.config import build_config, read_kv


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_usage_errors(capsys):
    assert run() == 2
    assert run("frobnicate") == 2
    assert run("gate", "--kind", "AND", "--seed", "x") == 2
    assert run("filter", "--bogus") == 2


@pytest.mark.parametrize("argv", [
    ["simulate"],
    ["gate", "--kind", "AND"],
    ["circuit", "--netlist", "half_adder"],
    ["calibrate"],
    ["sense", "--chemical", "glucose"],
])
def test_stochastic_commands_need_seed(argv, tmp_path, capsys):
    assert run(*argv, "--out", tmp_path, "--trials", 100) == 2
    assert "--seed" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_config_seed_counts(tmp_path):
    cfg = tmp_path / "c.kv"
    cfg.write_text("master_seed=4\n", encoding="utf-8")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    assert run("simulate", "--seed", 4, "--out", tmp_path / "p") == 0
    assert (tmp_path / "o/trace.csv").read_bytes() == (tmp_path / "p/trace.csv").read_bytes()


def test_domain_error_prefix(tmp_path, capsys):
    assert run("analyze", "--trace", tmp_path / "missing.csv", "--out", tmp_path) == 1
    assert capsys.readouterr().err.startswith("ERROR:MISSING_FILE:")
    bad = tmp_path / "bad.kv"
    bad.write_text("sigma_rsp=0.1\n", encoding="utf-8")
    assert run("gate", "--kind", "AND", "--seed", 1, "--params", bad) == 1
    assert capsys.readouterr().err.startswith("ERROR:UNKNOWN_KEY:")


def test_simulate_then_analyze(tmp_path):
    out = tmp_path / "o"
    assert run("simulate", "--stimulus", "heat:600:1800", "--seed", 3, "--out", out) == 0
    assert run("analyze", "--trace", out / "trace.csv", "--pre", "0:600", "--post", "1200:1800",
               "--out", out) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "window_t0,window_t1,f_hat_hz,amp_hat_mv,n_cycles" and len(lines) == 4
    r = float((out / "ratio.csv").read_text().splitlines()[1].split(",")[4])
    assert 1.2 < r < 1.8


def test_chemical_stimulus_needs_delta(tmp_path, capsys):
    assert run("simulate", "--stimulus", "chemical:glucose:0:100", "--seed", 1, "--out", tmp_path) == 1
    assert capsys.readouterr().err.startswith("ERROR:UNKNOWN_STIMULUS:")


def test_calibrate_then_gate(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("calibrate", "--seed", 7, "--out", out) == 0
    kv = read_kv(out / "calibrated.kv")
    assert set(kv) == {"sigma_resp", "sigma_meas", "p_miss", "est_noise_coef"}
    assert run("gate", "--kind", "AND", "--trials", 10000, "--seed", 7,
               "--params", out / "calibrated.kv", "--out", out) == 0
    overall = float((out / "gate_AND.csv").read_text().splitlines()[-1].split(",")[4])
    assert overall == pytest.approx(0.90, abs=0.01)


def test_gate_output_is_byte_identical_across_workers(tmp_path):
    for w, d in ((1, "a"), (3, "b")):
        assert run("gate", "--kind", "XNOR", "--trials", 3000, "--seed", 11, "--workers", w,
                   "--out", tmp_path / d) == 0
    assert (tmp_path / "a/gate_XNOR.csv").read_bytes() == (tmp_path / "b/gate_XNOR.csv").read_bytes()


def test_circuit_report_matches_library(tmp_path):
    assert run("circuit", "--netlist", "half_adder.phc", "--trials", 2000, "--seed", 7, "--out", tmp_path) == 0
    text = (tmp_path / "circuit_half_adder.csv").read_text()
    cfg = build_config({})
    expected = circuit_accuracy(half_adder(), 2000, cfg.params, cfg.spec, master_seed=7).to_csv()
    assert text == expected
    row = text.splitlines()[1].split(",")
    assert row[5:] == ["1", "1200.0", "1800.0"]


def test_circuit_from_file_with_mapping(tmp_path):
    src = tmp_path / "inv.phc"
    src.write_text("circuit inv(a) -> (y)\n    y = NOT(a)\nend\n", encoding="utf-8")
    assert run("circuit", "--netlist", src, "--basis", "NOR", "--trials", 200, "--seed", 1,
               "--out", tmp_path) == 0
    assert (tmp_path / "circuit_inv_nor.csv").exists()


def test_bode(tmp_path):
    assert run("filter", "--bode", "--fc", 7500, "--out", tmp_path) == 0
    rows = [l.split(",") for l in (tmp_path / "bode.csv").read_text().splitlines()[1:]]
    gain = {float(f): float(g) for f, g, _ in rows}
    assert gain[7500.0] == pytest.approx(-3.01, abs=0.01)


def test_filter_square(tmp_path, capsys):
    assert run("filter", "--shape", "square", "--fc", 7500, "--out", tmp_path) == 0
    corr = float(capsys.readouterr().out.split("triangle correlation=")[1].split()[0])
    assert corr >= 0.99
    assert (tmp_path / "filtered.csv").read_text().startswith("time_s,volts\n")


def test_filter_needs_a_mode(tmp_path):
    assert run("filter", "--out", tmp_path) == 2


def test_sense_simulated_and_from_file(tmp_path):
    assert run("sense", "--chemical", "tryptophan", "--seed", 2, "--out", tmp_path) == 0
    row = (tmp_path / "sense.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "tryptophan" and row[3] == "false"
    assert run("sense", "--chemical", "tryptophan", "--seed", 2, "--heat", "0:700",
               "--out", tmp_path / "h") == 0
    row = (tmp_path / "h/sense.csv").read_text().splitlines()[1].split(",")
    assert row[3] == "true"


def test_sense_short_trace_fails_cleanly(tmp_path, capsys):
    assert run("simulate", "--seed", 1, "--duration", 900, "--out", tmp_path) == 0
    assert run("sense", "--trace", tmp_path / "trace.csv", "--out", tmp_path / "s") == 1
    assert capsys.readouterr().err.startswith("ERROR:INSUFFICIENT_TRACE:")
    assert not (tmp_path / "s").exists() or list((tmp_path / "s").iterdir()) == []


def test_partial_outputs_removed(tmp_path):
    files = {"one.csv": "a\n", "two.csv": None}  # writing None fails midway
    with pytest.raises(TypeError):
        cli.write_outputs(tmp_path, files)
    assert sorted(os.listdir(tmp_path)) == []
