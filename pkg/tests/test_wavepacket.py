import numpy as np
import pytest

from app.config import ResolutionError
from app.curve_tiles import CurveParams, Tube, build_frequency_tiles, dual_tube_lattice
from app.fields import Field, random_band_limited
from app.geometry import Box
from app.wavepacket import (
    JACKSON_L2_SQUARED, WavePacket, bump_l2_norm, decompose, default_window, jackson_kernel, lattice_sum, make_bump,
    reconstruct, single_wavepacket,
)


@pytest.fixture(scope="module")
def field_and_packets():
    tiles = build_frequency_tiles(CurveParams(3, 2))
    f = random_band_limited(tiles, (0.0, 0.0), 1 / 8, (256, 256), seed=3)
    return tiles, f, decompose(f, tiles, f.box())


def test_kernel_is_nonnegative_and_peaks_at_zero():
    t = np.linspace(-20, 20, 4001)
    values = jackson_kernel(t)
    assert values.min() >= 0
    assert jackson_kernel(0.0) == pytest.approx(0.75)


def test_partition_of_unity_at_random_points(rng):
    points = rng.uniform(-0.5, 0.5, 100_000)
    assert np.max(np.abs(lattice_sum(points, terms=600) - 1)) <= 1e-9


def test_few_terms_are_already_close(rng):
    points = rng.uniform(-0.5, 0.5, 1000)
    assert np.max(np.abs(lattice_sum(points) - 1)) <= 2e-4


def test_bump_norm_matches_closed_form():
    tube = Tube((0.0, 0.0), (0.6, 0.8), 16.0, 4.0)
    bump = make_bump(tube, 4, 3)
    assert bump.l2_norm() == pytest.approx(bump_l2_norm(tube), rel=1e-3)
    assert bump_l2_norm(tube) == pytest.approx(JACKSON_L2_SQUARED * 8.0)


def test_bump_rejects_coarse_grid():
    tube = Tube((0.0, 0.0), (1.0, 0.0), 16.0, 4.0)
    with pytest.raises(ResolutionError):
        make_bump(tube, 4, 3, spacing=2.0)


def test_reconstruction_residual(field_and_packets):
    _, f, packets = field_and_packets
    rebuilt = reconstruct(packets, f)
    assert (rebuilt - f).l2_norm() / f.l2_norm() <= 1e-3


def test_reconstruction_on_window_matches_full_grid(field_and_packets):
    _, f, packets = field_and_packets
    window = Box(8, 16, 8, 16)
    full = reconstruct(packets, f)
    part = reconstruct(packets, f, window)
    x, y = full.coords()
    inside = (x >= 8) & (x <= 16) & (y >= 8) & (y <= 16)
    np.testing.assert_allclose(part.samples.ravel(), full.samples[inside], atol=1e-12)


def test_packets_are_localized(field_and_packets):
    _, _, packets = field_and_packets
    biggest = max(packets, key=lambda p: p.norm)
    assert biggest.norm == pytest.approx(biggest.mass(), rel=1e-9)
    assert biggest.localization(2, 0.1, factor=4) >= 0.99


def test_packet_mass_sits_in_the_dilated_tube():
    # localization depends only on the dilation R^delta; at R = 4096, delta = 0.1 it is 2^1.2
    omega = build_frequency_tiles(CurveParams(3, 2))[0]
    tube = Tube((0.0, 0.0), (1.0, 0.0), 16.0, 4.0)
    source = Field.on_box(default_window(tube), 0.5, carrier=omega.center)
    source.samples[:] = 1.0
    packet = WavePacket(omega, tube, source)
    assert packet.localization(4096, 0.1, factor=1.0) >= 0.99
    assert packet.localization(4, 0.1, factor=1.0) < packet.localization(4096, 0.1, factor=1.0)


def test_packet_masses_add_up(field_and_packets):
    # sum_T |phi_T|^2 <= 1 pointwise, so the packet masses never exceed ||f||^2
    _, f, packets = field_and_packets
    assert sum(p.norm**2 for p in packets) <= f.l2_norm() ** 2 * (1 + 1e-9)


def test_zero_field_has_no_packets():
    tiles = build_frequency_tiles(CurveParams(3, 2))
    f = Field.zeros((0.0, 0.0), 1 / 8, (256, 256))
    assert decompose(f, tiles, f.box()) == []


def test_pure_mode_only_meets_its_own_tile():
    tiles = build_frequency_tiles(CurveParams(3, 2))
    omega = tiles[0]
    f = Field(np.ones((512, 512)), (0.0, 0.0), 1 / 16, omega.center)
    packets = decompose(f, tiles, Box(0, 8, 0, 2))
    assert packets
    assert {p.tile.index for p in packets} == {omega.index}


def test_single_wavepacket_is_the_lattice_bump():
    omega = build_frequency_tiles(CurveParams(3, 2))[1]
    tube = dual_tube_lattice(omega, Box(0, 1, 0, 1))[0]
    f = single_wavepacket((omega, tube), amplitude=2.0)
    assert f.carrier == omega.center
    assert f.l2_norm() == pytest.approx(2 * bump_l2_norm(tube), rel=1e-3)
