import csv

import pytest

from qlipdg import cli
from qlipdg.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, EXIT_VERIFY, main
from qlipdg.config import ConfigError, StudyConfig, build_config, read_config_file
from qlipdg.solver import NewtonDivergence
from qlipdg.study import COLUMNS
from qlipdg.verify import SuiteResult


def test_defaults_are_valid():
    c = StudyConfig()
    assert c.degrees == (1, 2) and c.levels == 3 and c.c_sigma == 10.0


@pytest.mark.parametrize(
    "field,value",
    [
        ("preset", "nope"),
        ("degrees", (0,)),
        ("degrees", ()),
        ("levels", 0),
        ("theta", 2),
        ("c_sigma", 1.0),
        ("c_sigma", float("nan")),
        ("t_final", 0.0),
        ("dt", -1e-3),
        ("jobs", 0),
    ],
)
def test_invalid_fields_named(field, value):
    with pytest.raises(ConfigError, match=f"^{field}"):
        StudyConfig(**{field: value})


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "preset = quasilinear_smooth\n"
        "p = 1, 3   # degrees\n"
        "c-sigma = 12.5\n"
        "dt = auto\n"
        "t_final = 0.05\n"
    )
    values = read_config_file(path)
    assert values == {
        "preset": "quasilinear_smooth",
        "degrees": (1, 3),
        "c_sigma": 12.5,
        "dt": None,
        "t_final": 0.05,
    }


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("levels = 2\ntheta = 1\n")
    c = build_config(path, levels="4", theta=None)
    assert c.levels == 4 and c.theta == 1


def test_config_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("levels 2\n")
    with pytest.raises(ConfigError, match="line 1"):
        read_config_file(path)
    path.write_text("colour = red\n")
    with pytest.raises(ConfigError, match="^colour"):
        read_config_file(path)
    path.write_text("levels = many\n")
    with pytest.raises(ConfigError, match="^levels"):
        read_config_file(path)
    with pytest.raises(ConfigError, match="^config"):
        read_config_file(tmp_path / "missing.cfg")


def test_solve_smoke(tmp_path, capsys):
    out = tmp_path / "solve"
    code = main(["solve", "--preset", "heat_decay", "--p", "1", "--levels", "1", "--out", str(out)])
    assert code == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert str(out / "summary.csv") in printed and str(out / "solution.csv") in printed
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["problem"] == "heat_decay" and rows[0]["level"] == "0"
    assert not list(out.glob(".*.tmp"))


def test_solve_dumps_snapshots(tmp_path):
    out = tmp_path / "snap"
    code = main(
        ["solve", "--preset", "heat_decay", "--p", "1", "--levels", "1", "--dt", "0.025", "--out", str(out), "--dump-snapshots"]
    )
    assert code == EXIT_OK
    assert len(list((out / "snapshots").glob("step_*.csv"))) == 5


def test_solve_steady(tmp_path):
    out = tmp_path / "steady"
    assert main(["solve", "--preset", "steady_quasilinear", "--p", "2", "--levels", "1", "--out", str(out)]) == EXIT_OK
    with open(out / "summary.csv", newline="") as fh:
        row = next(csv.DictReader(fh))
    assert row["mode"] == "steady" and float(row["effectivity"]) >= 1


def test_small_penalty_rejected(tmp_path, capsys):
    code = main(["solve", "--c-sigma", "0.5", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "c_sigma" in capsys.readouterr().err


def test_unknown_preset_rejected(tmp_path, capsys):
    code = main(["solve", "--preset", "wave", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "preset" in capsys.readouterr().err


def test_unknown_flag_is_config_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--bogus"])
    assert exc.value.code == EXIT_CONFIG


def test_divergence_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NewtonDivergence("residual grew", 3)

    monkeypatch.setattr(cli, "run_case", boom)
    assert main(["solve", "--out", str(tmp_path)]) == EXIT_DIVERGED
    assert "divergence" in capsys.readouterr().err


@pytest.mark.parametrize("outcomes,expected", [((True, True), EXIT_OK), ((True, False), EXIT_VERIFY)])
def test_verify_exit_code_tracks_suites(tmp_path, monkeypatch, outcomes, expected):
    fake = [SuiteResult(f"s{i}", ok) for i, ok in enumerate(outcomes)]
    monkeypatch.setattr(cli, "run_verify", lambda *a: fake)
    assert main(["verify", "--out", str(tmp_path)]) == expected
    assert (tmp_path / "verify.txt").read_text().startswith("s0: PASS")


@pytest.mark.slow
def test_verify_negative_control(tmp_path, capsys):
    code = main(["verify", "--c-sigma", "1.01", "--out", str(tmp_path)])
    report = capsys.readouterr().out
    assert code == EXIT_VERIFY
    assert "coercivity: FAIL" in report
    assert "hypotheses: PASS" in report


def test_study_columns_documented_order(tmp_path):
    out = tmp_path / "study"
    code = main(["study", "--preset", "steady_quasilinear", "--p", "1", "--levels", "2", "--out", str(out)])
    assert code == EXIT_OK
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == COLUMNS
    assert (out / "convergence.svg").read_bytes().lstrip().startswith(b"<?xml")
