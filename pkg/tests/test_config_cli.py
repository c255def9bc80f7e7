import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bardina import io
from bardina.cli import main
from bardina.config import ConfigError, RunConfig, load_config, parse_config
from bardina.suites import SUITES

SMALL = """
[grid]
N = 16
[physics]
nu = 0.05
alpha = 0.25
[integrator]
dt = 0.01
t_end = 0.05
[initial_data]
kind = {kind}
seed = 3
[output]
sample_every = 2
"""


def write_config(tmp_path, text=SMALL, kind="taylor-green", name="run.ini"):
    path = tmp_path / name
    path.write_text(text.format(kind=kind))
    return str(path)


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.grid.N == 32 and cfg.physics.alpha == 0.25


def test_ini_round_trip():
    cfg = parse_config(SMALL.format(kind="beltrami"))
    again = parse_config(cfg.to_ini())
    assert again == cfg
    assert again.verify.alphas == (0.2, 0.1, 0.05)


@pytest.mark.parametrize("text,needle", [
    ("[grid]\nN = 15\n", "grid.N"),
    ("[physics]\nalpha = 0.5\n", "alpha <= L/20"),
    ("[physics]\nnu = 0\n", "physics.nu"),
    ("[integrator]\nmode = euler\n", "integrator.mode"),
    ("[initial_data]\nkind = vortex\n", "initial_data.kind"),
    ("[physics]\ngamma = 1\n", "unknown key"),
    ("[solver]\nx = 1\n", "unknown section"),
    ("[grid]\nN = many\n", "cannot parse"),
    ("[picard]\nC_pic = -1\n", "C_pic"),
])
def test_invalid_configs_name_the_violation(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_readme_example_parses():
    readme = (Path(__file__).parents[1] / "README.md").read_text()
    block = readme.split("```ini\n")[1].split("```")[0]
    cfg = parse_config(block)
    assert cfg == RunConfig()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, "[physics]\nalpha = 0.5\n")
    assert main(["solve", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "alpha <= L/20" in capsys.readouterr().err


def test_filter_verify_list(capsys):
    assert main(["filter-verify", "--list"]) == 0
    assert capsys.readouterr().out.split() == list(SUITES)


def test_filter_verify_suites(tmp_path, capsys):
    cfg = write_config(tmp_path, "[grid]\nN = 16\n[verify]\nn_random = 3\nn_pairs = 3\n")
    out = tmp_path / "fv"
    assert main(["filter-verify", "--config", cfg, "--out", str(out), "--suite", "estimates",
                 "--suite", "leibniz"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split()[:2] for l in lines] == [["PASS", "estimates"], ["PASS", "leibniz"]]
    records = (out / "reports.jsonl").read_text().splitlines()
    assert json.loads(records[0]) == {"schema": io.REPORT_SCHEMA}
    assert len(records) == 1 + 3 * 6 + 3


def test_kernel_table_stdout(capsys):
    assert main(["kernel-table", "--alpha", "0.1", "--radii", "0.1,0.2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == f"# schema: {io.KERNEL_SCHEMA}"
    assert lines[1] == "r,H_alpha,cumulative_mass"
    r, H, m = map(float, lines[2].split(","))
    assert H == pytest.approx(math.exp(-1) / (4 * math.pi * 0.001))
    assert m == pytest.approx(1 - 2 * math.exp(-1))


def test_kernel_table_file(tmp_path):
    path = tmp_path / "k.csv"
    assert main(["kernel-table", "--alpha", "0.2", "--r-max", "4", "--count", "20", "--out", str(path)]) == 0
    schema, header, rows = io.read_csv(path)
    assert schema == io.KERNEL_SCHEMA and rows.shape == (20, 3)
    assert rows[-1, 2] == pytest.approx(1 - 21 * math.exp(-20), abs=1e-12)
    assert main(["kernel-table", "--alpha", "-1"]) == 2


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    assert "monotone=True" in capsys.readouterr().out
    index = json.loads((out / "index.json").read_text())
    assert index["schema"] == io.INDEX_SCHEMA
    assert [s["file"] for s in index["samples"]] == ["snap_00000.bin", "snap_00001.bin", "snap_00002.bin",
                                                     "snap_00003.bin"]
    assert [round(s["t"], 10) for s in index["samples"]] == [0.0, 0.02, 0.04, 0.05]
    schema, header, rows = io.read_csv(out / "ledger.csv")
    assert schema == io.LEDGER_SCHEMA and header[0] == "t" and len(rows) == 6
    grid, u = io.read_snapshot(out / "snap_00003.bin")
    assert grid.N == 16 and u.shape == (3, 16, 16, 16)
    assert parse_config((out / "config.ini").read_text()).grid.N == 16


def test_solve_zero_duration(tmp_path):
    cfg = write_config(tmp_path, SMALL.replace("t_end = 0.05", "t_end = 0"))
    out = tmp_path / "zero"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    index = json.loads((out / "index.json").read_text())
    assert len(index["samples"]) == 1 and index["samples"][0]["residual"] == 0.0


def test_solve_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, kind="random")
    for name in ("a", "b"):
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / name), "--seed", "11"]) == 0
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "12"]) == 0
    a, b, c = (io.read_snapshot(tmp_path / n / "snap_00003.bin")[1] for n in "abc")
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_solve_picard_mode(tmp_path):
    text = SMALL.replace("t_end = 0.05", "t_end = 0.05\nmode = picard\npanels = 8")
    out = tmp_path / "pic"
    assert main(["solve", "--config", write_config(tmp_path, text), "--out", str(out)]) == 0
    index = json.loads((out / "index.json").read_text())
    assert index["samples"][-1]["t"] >= 0.05


def test_solve_reports_instability(tmp_path, capsys):
    text = SMALL.replace("t_end = 0.05", "t_end = 50").replace("dt = 0.01", "dt = 0.5")
    text = text.replace("nu = 0.05", "nu = 0.001").replace("seed = 3", "seed = 3\namplitude = 20")
    assert main(["solve", "--config", write_config(tmp_path, text, kind="random"), "--out", str(tmp_path / "x")]) == 1
    assert "last stable time" in capsys.readouterr().err


def test_picard_report(tmp_path):
    text = SMALL.replace("t_end = 0.05", "t_end = 0.05\npanels = 8") + "[picard]\nsegments = 2\n"
    out = tmp_path / "p"
    assert main(["picard", "--config", write_config(tmp_path, text), "--out", str(out)]) == 0
    report = json.loads((out / "picard.json").read_text())
    assert report["schema"] == io.PICARD_SCHEMA
    assert len(report["segments"]) == 2 and report["T_n"][0] == 0.0
    assert report["T_n"][1] == pytest.approx(report["tau_lip"])
    assert all(r <= 0.5 for r in report["ratios"])


def test_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "bardina.cli", "filter-verify", "--list"],
                          capture_output=True, text=True, check=True)
    assert "estimates" in proc.stdout
