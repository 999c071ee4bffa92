import math

import numpy as np
import pytest

from app.config import BudgetError, ConfigError, RunConfig
from app.curve_tiles import CurveParams, build_frequency_tiles, dual_tube_lattice, root_cube
from app.fields import Field
from app.geometry import Box
from app.polypart import Polynomial2, partition_from_polynomial
from app.tang_tran import compute_tang_tran, experiment_field, run_tang_tran
from app.wavepacket import single_wavepacket

R = 4


@pytest.fixture(scope="module")
def packet_setup():
    root = root_cube(R, 3)
    omega = build_frequency_tiles(CurveParams(3, R))[0]
    cx, cy = root.center
    tube = min(dual_tube_lattice(omega, root.box()), key=lambda t: math.hypot(t.center[0] - cx, t.center[1] - cy))
    window = Box(cx - 128, cx + 128, cy - 128, cy + 128)
    f = single_wavepacket((omega, tube), 1.0, spacing=1.0, window=window)
    config = RunConfig(d=3, n_values=(R,), p=8, threads=2)
    return root, omega, tube, f, config


def test_tangential_packet_lands_in_the_coarsest_class(packet_setup):
    root, omega, tube, f, config = packet_setup
    ex, ey = tube.direction
    P = Polynomial2.from_terms({(1, 0): -ey, (0, 1): ex}, center=tube.center, scale=root.side / 2)
    part = partition_from_polynomial(P, root.box(), 256)
    record = compute_tang_tran(config, f, part, R, [omega], root)
    assert record.wall_term > 0
    assert record.tang_terms[1.0] >= 0.9 * record.wall_term
    assert sum(record.tran_terms.values()) == 0.0
    assert record.split.wall_meeting <= record.split.assigned()
    assert record.relative_residual <= 0.1
    data = record.to_dict()
    assert set(data["prop_wall"]["thresholds"]) == {"p >= 2(d+1)", "p >= 2(d+2)"}
    assert data["prop_wall"]["p_admissible"]["p >= 2(d+1)"] is True


def test_variety_outside_the_ball(packet_setup):
    root, omega, tube, f, config = packet_setup
    P = Polynomial2.from_terms({(0, 1): 1.0, (0, 0): -1000.0})
    part = partition_from_polynomial(P, root.box(), 256)
    record = compute_tang_tran(config, f, part, R, [omega], root)
    assert record.wall_term == 0.0
    assert sum(record.tang_terms.values()) + sum(record.tran_terms.values()) <= 1e-6 * record.total
    assert record.cell_term == pytest.approx(record.total, rel=1e-9)
    assert not record.split.wall_meeting


def test_zero_field_is_refused(packet_setup):
    root, omega, tube, f, config = packet_setup
    zero = Field.zeros(f.origin, f.spacing, f.shape, f.carrier)
    part = partition_from_polynomial(Polynomial2.from_terms({(1, 0): 1.0}, center=root.center), root.box(), 64)
    with pytest.raises(ConfigError, match="Zero field"):
        compute_tang_tran(config, zero, part, R, [omega], root)


def test_experiment_field_grid():
    config = RunConfig(d=3, n_values=(R,))
    root = root_cube(R, 3)
    tiles = build_frequency_tiles(CurveParams(3, R))[:1]
    f = experiment_field(config, R, tiles, root)
    assert f.spacing == 1.0
    assert f.shape == (256, 256)
    assert f.box().contains(*root.center)
    assert np.abs(f.samples).max() > 0


def test_experiment_field_budget():
    config = RunConfig(d=3, n_values=(R,), memory_budget_mb=1)
    root = root_cube(R, 3)
    tiles = build_frequency_tiles(CurveParams(3, R))[:1]
    with pytest.raises(BudgetError):
        experiment_field(config, R, tiles, root)


def test_full_run(tmp_path):
    config = RunConfig(d=3, n_values=(R,), p=8, degree=1, partition_grid=256, out_dir=str(tmp_path))
    record = run_tang_tran(config)
    assert record.degree == 1
    assert record.total > 0
    assert record.n_packets > 0
    assert record.split.wall_meeting <= record.split.assigned()
    assert 0 <= record.cell_term <= record.total * (1 + 1e-9)


def test_bad_tile_index():
    config = RunConfig(d=3, n_values=(R,), extra={"tiles": [7]})
    with pytest.raises(ConfigError):
        run_tang_tran(config)
