import csv
import json

import numpy as np
import pytest

from app.curve_tiles import Tube, root_cube
from app.labcli import build_parser, load_config, main
from app.norms import vinogradov_count
from app.polypart import Polynomial2


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"partition_grid": 256, "n_values": [4]}))
    return path


def _run(tmp_path, *argv) -> int:
    return main(["--out", str(tmp_path / "out"), *argv])


def test_parser_overrides(tmp_path, config_file):
    args = build_parser().parse_args(["--config", str(config_file), "--seed", "9", "--threads", "2",
                                      "dump-tiles"])
    config = load_config(args)
    assert config.seed == 9
    assert config.threads == 2
    assert config.partition_grid == 256


def test_dump_tiles(capsys):
    assert main(["dump-tiles", "--N", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["N"] == 2
    assert [t["index"] for t in data["tiles"]] == [1, 2]


def test_dump_tiles_with_region(capsys):
    assert main(["dump-tiles", "--N", "2", "--region", "0", "16", "0", "16"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert all(tile["tubes"] for tile in data["tiles"])


def test_mean_value(tmp_path):
    assert _run(tmp_path, "mean-value", "--N", "3", "--d", "3", "--s", "2") == 0
    data = json.loads((tmp_path / "out" / "mean_value_N3_d3_s2.json").read_text())
    assert data["oracle"] == 15
    assert data["value"] == pytest.approx(15.0, rel=1e-9)
    assert data["relative_gap"] <= 1e-9


def test_mean_value_with_coefficients(tmp_path):
    coeffs = tmp_path / "a.csv"
    coeffs.write_text("re,im\n1.0,0.5\n-0.25,2.0\n0.75,-1.0\n0.5,0.0\n")
    assert _run(tmp_path, "mean-value", "--N", "4", "--d", "3", "--s", "2", "--coeffs", str(coeffs)) == 0
    data = json.loads((tmp_path / "out" / "mean_value_N4_d3_s2.json").read_text())
    a = np.array([1 + 0.5j, -0.25 + 2j, 0.75 - 1j, 0.5])
    assert data["oracle"] == pytest.approx(vinogradov_count(4, 2, 3, coefficients=a), rel=1e-12)
    assert data["value"] == pytest.approx(data["oracle"], rel=1e-9)


def test_mean_value_rejects_zero_s(tmp_path, capsys):
    assert _run(tmp_path, "mean-value", "--N", "3", "--s", "0") == 2
    assert "error:" in capsys.readouterr().err


def test_coefficient_count_must_match(tmp_path):
    coeffs = tmp_path / "a.csv"
    coeffs.write_text("1\n2\n")
    assert _run(tmp_path, "mean-value", "--N", "3", "--coeffs", str(coeffs)) == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert main(["--config", str(bad), "dump-tiles"]) == 2


def test_lemma_battery(tmp_path):
    assert _run(tmp_path, "--seed", "1", "lemma-battery", "--which", "segments", "--instances", "3") == 0
    lines = (tmp_path / "out" / "battery_segments_1.csv").read_text().splitlines()
    assert len(lines) == 4


def _points_csv(tmp_path, n=2000, seed=5):
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(n, 2))
    path = tmp_path / "points.csv"
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y"])
        writer.writerows(pts.tolist())
    return path


def test_partition_command(tmp_path, config_file):
    points = _points_csv(tmp_path)
    code = _run(tmp_path, "--config", str(config_file), "partition", "--points", str(points), "--degree", "2",
                "--seed", "0", "--image", "pgm")
    assert code == 0
    out = tmp_path / "out"
    data = json.loads((out / "partition_D2_seed0.json").read_text())
    assert data["points"] == 2000
    assert data["balanced"] is True
    assert data["n_cells"] <= data["cell_bound"]
    assert (out / "partition_D2_seed0.pgm").read_bytes().startswith(b"P5")
    with (out / "partition_D2_seed0_cells.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == len(data["cell_masses"])
    assert {r["cell"] for r in rows} == set(data["cell_masses"])
    assert sum(float(r["mass"]) for r in rows) + data["wall_mass"] == pytest.approx(2000.0)


def test_partition_seed_names_the_output(tmp_path, config_file):
    points = _points_csv(tmp_path, n=500)
    assert _run(tmp_path, "--config", str(config_file), "partition", "--points", str(points), "--degree", "2",
                "--seed", "7", "--image", "none") == 0
    assert json.loads((tmp_path / "out" / "partition_D2_seed7.json").read_text())["seed"] == 7


def test_partition_missing_points(tmp_path):
    assert _run(tmp_path, "partition", "--points", str(tmp_path / "nope.csv")) == 2


def test_classify_command(tmp_path, config_file):
    root = root_cube(4, 3)
    poly = tmp_path / "poly.json"
    poly.write_text(json.dumps(Polynomial2.from_terms({(0, 1): 1.0}, center=root.center, scale=64.0).to_dict()))
    tubes = tmp_path / "tubes.json"
    tubes.write_text(json.dumps({"tubes": [Tube(root.center, (1.0, 0.0), 64.0, 4.0).to_dict()]}))
    code = _run(tmp_path, "--config", str(config_file), "classify", "--poly", str(poly), "--tubes", str(tubes))
    assert code == 0
    (path,) = (tmp_path / "out").glob("classify_R4_*.json")
    data = json.loads(path.read_text())
    assert data["classes"]["xi"]["1.0"][0]["members"] == [0]
    assert data["split"]["cell"] == []


def test_classify_missing_file(tmp_path):
    assert _run(tmp_path, "classify", "--poly", str(tmp_path / "nope.json"), "--tubes", "x.json") == 2


def test_decompose_command(tmp_path, config_file):
    assert _run(tmp_path, "--config", str(config_file), "decompose") == 0
    (path,) = (tmp_path / "out").glob("decompose_*.json")
    data = json.loads(path.read_text())
    assert data["packets"] > 0
    assert data["reconstruction_residual"] <= 1e-3
    assert data["parseval"]["relative_gap"] <= 1e-9
    (lines_path,) = (tmp_path / "out").glob("decompose_*.jsonl")
    records = [json.loads(line) for line in lines_path.read_text().splitlines()]
    assert len(records) == data["packets"]
    assert {"tile", "center", "direction", "length", "width", "norm"} <= set(records[0])


def test_decompose_reads_a_saved_field(tmp_path, config_file):
    assert _run(tmp_path, "--config", str(config_file), "decompose", "--save-field") == 0
    (saved,) = (tmp_path / "out").glob("decompose_*_field.bin")
    again = main(["--config", str(config_file), "--out", str(tmp_path / "again"), "decompose", "--field", str(saved)])
    assert again == 0
    (path,) = (tmp_path / "again").glob("decompose_*.json")
    data = json.loads(path.read_text())
    assert data["packets"] > 0
    assert data["reconstruction_residual"] <= 1e-3
    assert data["parseval"]["relative_gap"] <= 1e-9
