import math

import pytest

from src.core.errors import DataFileError
from src.services.reporting import RunRecord, csv_columns, emit_report, records_to_csv


def _record(**overrides):
    base = dict(
        experiment="giant_convergence",
        n=1000,
        c=2.0,
        replica=0,
        seed=7,
        stream="0/0/0/0/0",
        c1_frac=0.8,
        c2_frac=0.01,
        nk_digest="abc",
        rho_theory=0.7968,
    )
    base.update(overrides)
    return RunRecord(**base)


def test_record_validates_fractions():
    with pytest.raises(ValueError):
        _record(c1_frac=1.5)
    with pytest.raises(ValueError):
        _record(c1_frac=0.1, c2_frac=0.2)


def test_csv_columns_exclude_wall_time():
    columns = csv_columns()
    assert "wall_time" not in columns
    assert columns[:3] == ["experiment", "n", "c"]


def test_csv_is_sorted_and_independent_of_wall_time():
    records = [_record(replica=1, wall_time=3.0), _record(replica=0, c=1.5), _record(replica=0, wall_time=9.9)]
    text = records_to_csv(records)
    lines = text.strip().splitlines()
    assert lines[0].split(",")[:4] == ["experiment", "n", "c", "replica"]
    assert [line.split(",")[2] for line in lines[1:]] == ["1.5", "2.0", "2.0"]
    assert [line.split(",")[3] for line in lines[1:]] == ["0", "0", "1"]
    reshuffled = [_record(replica=0, wall_time=0.1), _record(replica=1), _record(replica=0, c=1.5)]
    assert records_to_csv(reshuffled) == text


def test_csv_cells():
    text = records_to_csv([_record(rho_theory=None, converged=False, value=math.nan)])
    row = dict(zip(csv_columns(), text.splitlines()[1].split(",")))
    assert row["rho_theory"] == ""
    assert row["converged"] == "false"
    assert row["value"] == "nan"


def test_emit_report_writes_files(tmp_path):
    records = [_record(replica=r, c=c, alpha_theory=0.5) for r in range(2) for c in (1.5, 2.0)]
    written = emit_report(records, tmp_path / "out", "demo", ["csv", "svg"])
    assert [p.name for p in written] == ["demo.csv", "demo.svg"]
    assert written[0].read_text() == records_to_csv(records)
    assert written[1].read_text().lstrip().startswith("<?xml")


def test_emit_report_is_deterministic(tmp_path):
    records = [_record(replica=r) for r in range(3)]
    first = emit_report(records, tmp_path / "a", "demo", ["csv", "svg"])
    second = emit_report(records, tmp_path / "b", "demo", ["csv", "svg"])
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_emit_report_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path, "empty")
    with pytest.raises(ValueError):
        emit_report([_record()], tmp_path, "demo", ["pdf"])
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(DataFileError):
        emit_report([_record()], blocker, "demo")
