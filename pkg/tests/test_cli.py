import csv

import pytest

from drivetune.cli import main


@pytest.fixture()
def tuned_log(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["tune", "--sampler", "tpe", "--budget", "14", "--seed", "4",
                 "--out", str(out)])
    assert code == 0
    capsys.readouterr()
    return out / "logs" / "tpe-b14-s4.csv"


def test_tune_writes_log_and_selection(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["tune", "--sampler", "random", "--budget", "12", "--seed", "1",
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "selected (balanced)" in printed
    log = out / "logs" / "random-b12-s1.csv"
    assert log.exists()
    rows = list(csv.DictReader(open(log)))
    assert len(rows) == 12
    selections = (out / "selections.csv").read_text().splitlines()
    assert selections[0].startswith("study_id,strategy")
    assert len(selections) == 2


def test_select_rereads_log_with_constraints(tuned_log, capsys):
    assert main(["select", "--log", str(tuned_log), "--strategy", "smooth",
                 "--max-overshoot", "0.5"]) == 0
    printed = capsys.readouterr().out
    assert "selected (smooth)" in printed


def test_validate_runs_validation_profile(tuned_log, capsys):
    assert main(["validate", "--log", str(tuned_log), "--seed", "9"]) == 0
    printed = capsys.readouterr().out
    assert "validation run: stable=True" in printed


def test_sweep_report_figures_pipeline(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sweep", "--out", str(out), "--seed", "2",
                 "--budgets", "12", "--n-seeds", "2",
                 "--samplers", "random", "tpe"]) == 0
    assert len(list((out / "logs").glob("*.csv"))) == 4

    assert main(["report", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "expert" in printed
    assert (out / "report.csv").exists()

    assert main(["figures", "--out", str(out)]) == 0
    figures = list((out / "figures").glob("*.csv"))
    # 2 hypervolume files + 4 scatter files
    assert len(figures) == 6


def test_report_without_logs_fails_cleanly(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 1
    assert "no logs" in capsys.readouterr().err


def test_config_file_overrides_plant(tmp_path, capsys):
    cfg = tmp_path / "drivetune.cfg"
    cfg.write_text("plant.noise_std = 0.0\nplant.gain_scale = 30.0\n")
    out = tmp_path / "out"
    assert main(["tune", "--config", str(cfg), "--sampler", "random",
                 "--budget", "12", "--seed", "0", "--out", str(out)]) == 0
    # noiseless plant: rerunning gives byte-identical objective columns
    rows1 = list(csv.DictReader(open(out / "logs" / "random-b12-s0.csv")))
    out2 = tmp_path / "out2"
    assert main(["tune", "--config", str(cfg), "--sampler", "random",
                 "--budget", "12", "--seed", "0", "--out", str(out2)]) == 0
    rows2 = list(csv.DictReader(open(out2 / "logs" / "random-b12-s0.csv")))
    for a, b in zip(rows1, rows2):
        assert a["iae"] == b["iae"]
