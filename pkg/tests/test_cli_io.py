import csv
import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axongrowth import closed_loop as cl
from axongrowth.cli import main
from axongrowth.io import ConfigError, parse_config, serialize_config, write_outputs


def test_empty_document_is_preset():
    assert parse_config("") == cl.ScenarioConfig()


def test_units():
    cfg = parse_config("[run]\nl0 = 2um\nhorizon = 1.5min\n[bio]\nl_s = 10 um\n")
    assert cfg.l0 == pytest.approx(2e-6)
    assert cfg.horizon == pytest.approx(90.0)
    assert cfg.solver.t_end == pytest.approx(90.0)
    assert cfg.bio.l_s == pytest.approx(10e-6)


@pytest.mark.parametrize("text,line", [
    ("[etm]\nsigma = 1.5\n", 2),
    ("[bio]\nD = 1e-11\nbogus = 3\n", 3),
    ("\n[nowhere]\n", 2),
    ("[run]\nl0 = 1min\n", 2),
    ("[solver]\nN = 12.5\n", 2),
    ("[gains]\nk1 = abc\n", 2),
    ("x = 1\n", 1),
])
def test_errors_name_the_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        parse_config(text)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        parse_config("[run]\npreset = fig9\n")


def test_round_trip_preset():
    cfg = parse_config("")
    assert parse_config(serialize_config(cfg)) == cfg


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-13, 1e-9), st.floats(0.01, 0.99), st.floats(1.0, 1e4),
       st.integers(16, 512), st.sampled_from(cl.MODES), st.floats(2e-6, 9e-6))
def test_round_trip_property(D, sigma, eta, N, mode, l0):
    cfg = cl.ScenarioConfig()
    cfg = replace(cfg, bio=replace(cfg.bio, D=D), etm=replace(cfg.etm, sigma=sigma, eta=eta),
                  solver=replace(cfg.solver, N=N), mode=mode, l0=l0)
    assert parse_config(serialize_config(cfg)) == cfg


@pytest.fixture(scope="module")
def short_run(preset, preset_design):
    return cl.run_scenario(replace(preset, horizon=2.0), design_override=preset_design)


def test_outputs(tmp_path, short_run, preset_design):
    paths = write_outputs(short_run, tmp_path, preset_design)
    with open(paths["run"]) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cl.SERIES
    assert len(rows) == len(short_run.series["t"]) + 1
    assert "e" in rows[1][1] and len(rows[1][1].split("e")[0].replace("-", "").replace(".", "")) == 17
    with open(paths["events"]) as fh:
        ev = list(csv.reader(fh))
    assert ev[0] == ["index", "t_j", "U_tj", "gap"] and len(ev) == len(short_run.events) + 1
    summ = json.loads(paths["summary"].read_text())
    assert summ["status"] == "completed"
    assert parse_config(summ["config"]) == short_run.config
    assert summ["dwell"]["tau"] > 0


def test_cli_simulate(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nhorizon = 2\n")
    assert main(["simulate", "--config", str(cfg), "--mode", "continuous",
                 "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "summary.json").exists()


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[etm]\nsigma = 1.5\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_cli_event_cap(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nhorizon = 2\nevent_cap = 2\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_cli_numeric_failure(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nhorizon = 5\nzoh_period = 0.5\nmode = zoh\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_cli_constants_and_check(capsys):
    assert main(["constants"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["derived"]["kappa"] == pytest.approx(4.4575)
    assert main(["check"]) == 0


def test_cli_sweep(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nhorizon = 2\n")
    assert main(["sweep", "--config", str(cfg), "--param", "eta", "--values", "1,100",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 3
    assert main(["sweep", "--param", "bogus", "--values", "1"]) == 1
