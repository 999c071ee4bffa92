import json

import numpy as np
import pytest

from app.config import ReportError
from app.norms import fit_exponent
from app.reports import (
    ScanReport, ScanRow, emit_report, load_report, render_partition, write_json, write_json_lines,
    write_rows_csv,
)


@pytest.fixture
def report():
    rows = [ScanRow("single", n, 0, 1.0 / n, 1.0, 1.0 / n) for n in (1, 2, 4)]
    fits = {"single": fit_exponent([(r.N, r.ratio) for r in rows])}
    return ScanReport("scan-st", rows, fits, {"d": 3.0, "p": 8.0}, "abc123def456", [0])


def test_empty_report_is_refused(tmp_path, report):
    report.rows = []
    with pytest.raises(ReportError, match="nothing to report"):
        emit_report(report, tmp_path)
    with pytest.raises(ReportError, match="nothing to report"):
        write_rows_csv([], tmp_path / "x.csv")


def test_csv_rows(tmp_path, report):
    paths = emit_report(report, tmp_path, formats=["csv"])
    assert paths[0].name == "scan-st_abc123def456.csv"
    lines = paths[0].read_text().splitlines()
    assert lines[0] == "family,N,seed,lhs,rhs,ratio"
    assert len(lines) == 4
    assert lines[2].startswith("single,2,0,0.5,")


def test_json_reloads(tmp_path, report):
    (path,) = emit_report(report, tmp_path, formats=["json"])
    back = load_report(path)
    assert back.rows == report.rows
    assert back.fits["single"].slope == pytest.approx(-1.0)
    assert back.config_hash == report.config_hash


def test_svg_plot(tmp_path, report):
    (path,) = emit_report(report, tmp_path, formats=["svg"])
    assert path.read_text().lstrip().startswith("<?xml")


def test_unknown_format(tmp_path, report):
    with pytest.raises(ReportError):
        emit_report(report, tmp_path, formats=["xlsx"])


def test_unwritable_directory(tmp_path, report):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ReportError):
        emit_report(report, blocker / "sub", formats=["csv"])


def test_identical_reports_give_identical_bytes(tmp_path, report):
    first = emit_report(report, tmp_path / "a", formats=["csv", "json"])
    second = emit_report(report, tmp_path / "b", formats=["csv", "json"])
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_load_report_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(ReportError):
        load_report(bad)


def test_write_json_sorted(tmp_path):
    path = write_json({"b": 1, "a": 2}, tmp_path / "x.json")
    assert list(json.loads(path.read_text())) == ["a", "b"]


def test_write_json_lines(tmp_path):
    path = write_json_lines([{"b": 1, "a": 2}, {"a": 3}], tmp_path / "x.jsonl")
    lines = path.read_text().splitlines()
    assert lines == ['{"a": 2, "b": 1}', '{"a": 3}']
    with pytest.raises(ReportError):
        write_json_lines([{"a": 1}], tmp_path / "missing" / "x.jsonl")


def test_partition_pgm(tmp_path):
    labels = np.array([[1, 1, 2], [1, 2, 2]])
    wall_mask = np.array([[False, True, False], [False, True, False]])
    path = render_partition(labels, wall_mask, [0, 3, 0, 2], tmp_path / "p.pgm")
    data = path.read_bytes()
    assert data.startswith(b"P5\n3 2\n255\n")
    assert len(data) == len(b"P5\n3 2\n255\n") + 6


def test_partition_svg(tmp_path):
    labels = np.array([[1, 2], [1, 2]])
    path = render_partition(labels, None, [0, 2, 0, 2], tmp_path / "p.svg")
    assert path.exists()
