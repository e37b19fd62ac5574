import csv
import json
import os
import subprocess
import sys

import pytest

from grasq.cli.config import ConfigError, from_echo, load, loads
from grasq.cli.main import EXIT_CONFIG, EXIT_FAIL, EXIT_INTERNAL, EXIT_OK, main
from grasq.cli.report import checks_csv, render_svg, use_log_axes

OU = """
[[experiment]]
name = "ou"
kind = "ou"
[experiment.params]
steps = 200
[experiment.tolerances]
closed_form = 1e-4
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ------------------------------------------------------------ descriptor validation

def test_unknown_parameter_reports_its_line():
    text = OU.replace("steps = 200", "steps = 200\nstepz = 3")
    with pytest.raises(ConfigError) as info:
        loads(text)
    assert info.value.line == 7
    assert "stepz" in str(info.value)


def test_unknown_tolerance_and_top_level_keys():
    with pytest.raises(ConfigError) as info:
        loads(OU + "wrong = 1e-3\n")
    assert info.value.line == 9
    with pytest.raises(ConfigError) as info:
        loads("title = 'x'\n" + OU)
    assert info.value.line == 1


def test_unknown_kind_and_parse_error():
    with pytest.raises(ConfigError, match="unknown kind"):
        loads('[[experiment]]\nkind = "nope"\n')
    with pytest.raises(ConfigError, match="parse error"):
        loads("[[experiment]\n")


def test_type_errors_are_config_errors():
    with pytest.raises(ConfigError, match="steps"):
        loads(OU.replace("steps = 200", "steps = 'many'"))
    with pytest.raises(ConfigError, match="non-negative"):
        loads(OU.replace("1e-4", "-1.0"))


def test_coupling_beyond_lambda0_is_rejected_with_the_bounds():
    text = '[[experiment]]\nkind = "sde"\n[experiment.params]\nlam = 10.0\n'
    with pytest.raises(ConfigError) as info:
        loads(text)
    msg = str(info.value)
    assert "exceeds lambda0" in msg and "K =" in msg and "lambda_A" in msg
    assert info.value.line == 4


def test_yukawa_needs_fermion_mass():
    with pytest.raises(ConfigError, match="m_f"):
        loads('[[experiment]]\nkind = "yukawa"\n[experiment.params]\nm_b = 1.0\n')


def test_duplicate_names_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        loads(OU + OU)


def test_echo_round_trip():
    desc = loads(OU)
    again = from_echo(desc.echo())
    assert again.echo() == desc.echo()


# ------------------------------------------------------------ report helpers

def test_log_axes_rule():
    assert use_log_axes([{"x": [1, 2], "y": [0.1, 1e-3]}])
    assert not use_log_axes([{"x": [0, 2], "y": [0.1, 1e-3]}])
    assert not use_log_axes([{"x": [1, 2], "y": [0.1, -1.0]}])
    assert not use_log_axes([])


def test_svg_records_axis_scale():
    ch = {"name": "c", "title": "t", "xlabel": "x", "ylabel": "y",
          "series": [{"label": "a", "x": [1, 10, 100], "y": [1.0, 0.1, 0.01]}]}
    assert 'data-scale="log-log"' in render_svg(ch)
    ch["series"][0]["y"] = [1.0, 0.0, -1.0]
    assert 'data-scale="linear"' in render_svg(ch)


def test_checks_csv_header_without_checks():
    body = checks_csv({"experiments": [{"name": "e", "kind": "ou", "checks": []}]})
    assert body.splitlines() == ["experiment,kind,check,value,relation,bound,passed,invariant"]


# ------------------------------------------------------------ commands and exit codes

def test_run_writes_outputs_and_passes(tmp_path, capsys):
    cfg = write(tmp_path, OU + '\n[[experiment]]\nname = "ito"\nkind = "ito"\n[experiment.params]\nsteps = [10, 20]\n')
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "pass"
    meta = json.loads((out / "meta.json").read_text())
    assert "timestamp" in meta and "timestamp" not in rep
    rows = list(csv.DictReader(open(out / "checks.csv")))
    assert rows and all(r["passed"] == "true" for r in rows)
    assert "ito.residual_vs_h.svg" in os.listdir(out)
    assert "PASS ou." in capsys.readouterr().out


def test_failing_check_exits_one(tmp_path):
    cfg = write(tmp_path, OU.replace("closed_form = 1e-4", "closed_form = 1e-30"))
    assert main(["run", cfg, "--out", str(tmp_path / "o"), "--format", "json"]) == EXIT_FAIL


def test_config_errors_exit_two(tmp_path):
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    cfg = write(tmp_path, OU)
    assert main(["run", cfg, "--format", "pdf"]) == EXIT_CONFIG
    assert main(["run", cfg, "--jobs", "0"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_unwritable_output_exits_three(tmp_path):
    cfg = write(tmp_path, OU)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", cfg, "--out", str(blocker / "sub")]) == EXIT_INTERNAL


def test_format_subset(tmp_path):
    cfg = write(tmp_path, OU)
    out = tmp_path / "o"
    main(["run", cfg, "--out", str(out), "--format", "csv"])
    files = os.listdir(out)
    assert "checks.csv" in files and "report.json" not in files
    assert not any(f.endswith(".svg") for f in files)


def test_validate_and_list_kinds(capsys):
    here = os.path.dirname(__file__)
    assert main(["validate", os.path.join(here, "..", "configs", "quick.toml")]) == EXIT_OK
    assert "ok ou" in capsys.readouterr().out
    assert main(["list-kinds", "-v"]) == EXIT_OK
    out = capsys.readouterr().out
    for kind in ("gaussian-moments", "ou", "sde", "ito", "invariant", "sq", "tree", "majorant", "yukawa"):
        assert kind in out


def test_report_is_deterministic_across_runs_and_jobs(tmp_path):
    text = OU + '\n[[experiment]]\nname = "maj"\nkind = "majorant"\n'
    cfg = write(tmp_path, text)
    main(["run", cfg, "--out", str(tmp_path / "a"), "--format", "json"])
    main(["run", cfg, "--out", str(tmp_path / "b"), "--format", "json", "--jobs", "2"])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "grasq.cli.main", "list-kinds"], capture_output=True, text=True)
    assert r.returncode == 0 and "majorant" in r.stdout
