import csv
import time

import pytest

from qlipdg.cli import main

# wall-clock seconds of each session study, keyed by preset
STUDY_SECONDS = {}


def run_study_csv(tmp_path_factory, preset, levels=3, degrees="1,2"):
    out = tmp_path_factory.mktemp(preset)
    start = time.perf_counter()
    code = main(["study", "--preset", preset, "--p", degrees, "--levels", str(levels), "--out", str(out)])
    STUDY_SECONDS[preset] = time.perf_counter() - start
    assert code == 0
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k not in ("problem", "mode"):
                r[k] = float(v)
    return rows


@pytest.fixture(scope="session")
def steady_rows(tmp_path_factory):
    return run_study_csv(tmp_path_factory, "steady_quasilinear")


@pytest.fixture(scope="session")
def heat_rows(tmp_path_factory):
    return run_study_csv(tmp_path_factory, "heat_decay")


@pytest.fixture(scope="session")
def quasilinear_rows(tmp_path_factory):
    return run_study_csv(tmp_path_factory, "quasilinear_smooth")
