import csv
import json
import subprocess
import sys

import pytest

from staggered_qtt.cli import main, read_config
from staggered_qtt.simulate import DgpSpec, generate

MINIMAL = "unit,period,y,first_treated\nA,1,1.0,2\nA,2,3.0,2\nB,1,0.0,never\nB,2,1.0,never\n"


@pytest.fixture
def panel_csv(tmp_path):
    panel = generate(DgpSpec(2, 300, 4, seed=1))
    path = tmp_path / "panel.csv"
    panel.to_csv(path)
    return path


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _read(path):
    return path.read_bytes()


def test_minimal_panel_surface(tmp_path, capsys):
    src = tmp_path / "m.csv"
    src.write_text(MINIMAL)
    out = tmp_path / "out"
    code, _, _ = _run(["estimate", "--input", src, "--output", out, "--quantiles", "0.25,0.5,0.75"], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(out / "surface.csv")))
    assert [(r["r"], r["t"], r["tau"]) for r in rows] == [("2", "2", str(t)) for t in (0.25, 0.5, 0.75)]
    # one treated and one control unit: counterfactual is 1 + (1 - 0) = 2, treated is 3
    assert {float(r["estimate"]) for r in rows} == {1.0}
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["method"] == "unconditional" and meta["schema_version"] >= 1
    kendall = json.loads((out / "kendall.json").read_text())
    assert kendall["cohorts"][0]["error"] == "InsufficientPrePeriods"


def test_default_grid_row_count(panel_csv, tmp_path, capsys):
    out = tmp_path / "o"
    assert _run(["estimate", "--input", panel_csv, "--output", out], capsys)[0] == 0
    rows = list(csv.DictReader(open(out / "surface.csv")))
    assert len(rows) == 6 * 19
    assert set(rows[0]) == {"r", "t", "tau", "estimate"}


def test_ipw_without_covariates(panel_csv, capsys):
    code, _, err = _run(["estimate", "--input", panel_csv, "--method", "ipw"], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "MissingCovariates"


def test_ipw_with_covariates(panel_csv, tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = _run(["estimate", "--input", panel_csv, "--method", "ipw", "--covariates", "x",
                       "--aggregate", "event", "--output", out], capsys)
    assert code == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert len(meta["propensity"]) == 6
    agg = list(csv.DictReader(open(out / "aggregation.csv")))
    assert {row["index"] for row in agg} == {"0", "1", "2"}


def test_estimate_is_byte_identical(panel_csv, tmp_path, capsys):
    outs = []
    for i, threads in enumerate((1, 1, 3)):
        out = tmp_path / f"run{i}"
        argv = ["estimate", "--input", panel_csv, "--seed", 7, "--bootstrap", 100,
                "--quantiles", "0.25,0.5,0.75", "--aggregate", "overall", "--threads", threads,
                "--output", out]
        assert _run(argv, capsys)[0] == 0
        outs.append({p.name: _read(p) for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] == outs[2]
    assert set(outs[0]) == {"surface.csv", "aggregation.csv", "bands.json", "kendall.json",
                            "metadata.json"}


def test_config_file_precedence(panel_csv, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# settings\ninput = {panel_csv}\nquantiles = 0.5\nmethod = unconditional\n"
                   "format = json\n")
    out = tmp_path / "o"
    assert _run(["estimate", "--config", cfg, "--output", out], capsys)[0] == 0
    surface = json.loads((out / "surface.json").read_text())
    assert surface["taus"] == [0.5]
    out2 = tmp_path / "o2"
    assert _run(["estimate", "--config", cfg, "--quantiles", "0.25,0.75", "--output", out2], capsys)[0] == 0
    assert json.loads((out2 / "surface.json").read_text())["taus"] == [0.25, 0.75]


def test_config_parser(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("first-treated = g  # trailing comment\n\nseed=3\n")
    assert read_config(cfg) == {"first_treated": "g", "seed": "3"}
    cfg.write_text("bogus = 1\n")
    with pytest.raises(Exception, match="unknown setting"):
        read_config(cfg)


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("no equals sign\n")
    code, _, err = _run(["estimate", "--config", cfg], capsys)
    assert code == 2 and json.loads(err)["error"] == "UsageError"


def test_tab_separated_input(tmp_path, capsys):
    src = tmp_path / "m.tsv"
    src.write_text(MINIMAL.replace(",", "\t"))
    code, out, _ = _run(["estimate", "--input", src, "--sep", "tab", "--quantiles", "0.5"], capsys)
    assert code == 0
    assert "## surface.csv\nr,t,tau,estimate\n2,2,0.5,1.0\n" in out


def test_missing_input_file(tmp_path, capsys):
    code, _, err = _run(["estimate", "--input", tmp_path / "nope.csv"], capsys)
    assert code == 1
    assert json.loads(err)["error"] == "IOError"


def test_unwritable_output(panel_csv, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = _run(["estimate", "--input", panel_csv, "--output", blocker / "sub"], capsys)
    assert code == 1


def test_simulate_paper_table_one(tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = _run(["simulate", "--paper-table", "1", "--reps", 20, "--seed", 3, "--output", out], capsys)
    assert code == 0
    lines = (out / "mc.csv").read_text().splitlines()
    rows = list(csv.DictReader(lines[1:]))
    cells = {(r["dgp"], r["method"], r["n"], r["tau"]) for r in rows}
    assert len(rows) == len(cells) == 30
    assert ("1", "unconditional", "1000", "0.5") in cells
    assert ("3", "ipw", "100", "0.75") in cells
    meta = json.loads((out / "mc.json").read_text())
    assert meta["config"]["seed"] == 3 and len(meta["runs"]) == 6


def test_simulate_dgp4_large_violation(tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = _run(["simulate", "--dgp", 4, "--epsilon-bar", 0.5, "--n", 300, "--reps", 20,
                       "--output", out], capsys)
    assert code == 0
    rows = list(csv.DictReader((out / "mc.csv").read_text().splitlines()[1:]))
    assert {r["epsilon_bar"] for r in rows} == {"0.5"}
    assert {r["method"] for r in rows} == {"unconditional", "ipw"}
    median = [r for r in rows if r["tau"] == "0.5"][0]
    assert float(median["truth"]) == 5.0


def test_simulate_is_thread_independent(tmp_path, capsys):
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        assert _run(["simulate", "--dgp", 2, "--n", 200, "--reps", 30, "--seed", 5,
                     "--threads", threads, "--output", out], capsys)[0] == 0
        outs.append(((out / "mc.csv").read_bytes(), (out / "mc.json").read_bytes()))
    assert outs[0] == outs[1]


def test_simulate_unknown_dgp(capsys):
    code, _, err = _run(["simulate", "--dgp", 9, "--reps", 2], capsys)
    assert code == 2 and json.loads(err)["error"] == "InvalidSpec"


def test_dominance_command(panel_csv, tmp_path, capsys):
    out = tmp_path / "o"
    code, _, _ = _run(["dominance", "--input", panel_csv, "--cohort", 2, "--period", 3,
                       "--bootstrap", 100, "--seed", 2, "--output", out], capsys)
    assert code == 0
    res = json.loads((out / "dominance.json").read_text())
    assert 0 <= res["p_d"] <= 1 and res["B"] == 100 and res["seed"] == 2
    assert res["direction"] in ("treated", "counterfactual")


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "staggered_qtt.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
