"""
Wave packets f_T = f_omega * phi_T.

The bumps are tensor products of the Jackson kernel
    J(t) = 3/4 * sinc(t/2)^4,
whose Fourier transform is a cubic spline supported in [-1, 1] and vanishing at
+-1. Poisson summation then gives sum_k J(t - k) = 1 exactly, J >= 0, and the
tails decay like t^-4. Scaled to an R^d x R tube the spectrum of phi_T sits in
the origin translate of 2*omega.
"""
import logging
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .config import SETTINGS, ResolutionError
from .curve_tiles import FreqRect, Tube, dual_tube_lattice
from .fields import Field, restrict_frequency
from .geometry import Box

logger = logging.getLogger(__name__)

# int J(t)^2 dt = 9/8 * int sinc^8 = 9/8 * 151/315
JACKSON_L2_SQUARED = 9.0 / 8.0 * 151.0 / 315.0


def jackson_kernel(t) -> np.ndarray:
    return 0.75 * np.sinc(np.asarray(t, dtype=float) / 2) ** 4


def lattice_sum(t, terms: int = 10) -> np.ndarray:
    """sum_{|k| <= terms} J(t - k)."""
    t = np.asarray(t, dtype=float)
    return sum(jackson_kernel(t - k) for k in range(-terms, terms + 1))


def bump_values(tube: Tube, x, y) -> np.ndarray:
    u, v = tube.local(x, y)
    return jackson_kernel(u / tube.length) * jackson_kernel(v / tube.width)


def bump_l2_norm(tube: Tube) -> float:
    return float(JACKSON_L2_SQUARED * np.sqrt(tube.length * tube.width))


def default_window(tube: Tube, factor: float = 6.0) -> Box:
    return Tube(tube.center, tube.direction, tube.length, tube.width, factor).bounding_box()


def make_bump(tube: Tube, R: float, d: float, spacing: Optional[float] = None,
              window: Optional[Box] = None) -> Field:
    """phi_T sampled on a grid over `window` (default: bounding box of 6T)."""
    spacing = spacing if spacing is not None else tube.width / 8
    # phi_T carries frequencies up to 1/W across the tube
    if spacing > tube.width / 4:
        raise ResolutionError(
            f"Grid spacing {spacing:g} cannot resolve a bump of width {tube.width:g} (need <= {tube.width / 4:g})"
        )
    f = Field.on_box(window or default_window(tube), spacing)
    x, y = f.coords()
    f.samples = bump_values(tube, x, y).astype(complex)
    logger.debug(f"Bump for tube {tube.key} at R={R:g}, d={d:g} on grid {f.shape}")
    return f


@dataclass(frozen=True)
class WavePacket:
    tile: FreqRect
    tube: Tube
    source: Field = dc_field(repr=False, compare=False)
    norm: float = 0.0

    def field(self, window: Optional[Box] = None) -> Field:
        """f_T on the source grid, cropped to window when given."""
        src = self.source if window is None else crop(self.source, window)
        x, y = src.coords()
        return Field(src.samples * bump_values(self.tube, x, y), src.origin, src.spacing, src.carrier)

    def mass(self) -> float:
        return self.field().l2_norm()

    def localization(self, R: float, delta: float, factor: float = 3.0) -> float:
        """Fraction of the packet's L^2 mass inside factor * T*."""
        values = self.field()
        x, y = values.coords()
        inside = self.tube.star(R, delta).dilate(factor).contains(x, y)
        weights = np.abs(values.samples) ** 2
        total = weights.sum()
        return float(weights[inside].sum() / total) if total > 0 else 1.0

    def to_dict(self) -> dict:
        return {"tile": self.tile.index, "k": self.tube.k, "l": self.tube.l,
                "center": [float(v) for v in self.tube.center],
                "direction": [float(v) for v in self.tube.direction],
                "length": self.tube.length, "width": self.tube.width, "norm": self.norm}


def crop(f: Field, window: Box) -> Field:
    xs, ys = f.axes()
    ix = np.nonzero((xs >= window.xmin) & (xs <= window.xmax))[0]
    iy = np.nonzero((ys >= window.ymin) & (ys <= window.ymax))[0]
    if ix.size == 0 or iy.size == 0:
        return Field.zeros((window.xmin, window.ymin), f.spacing, (1, 1), f.carrier)
    samples = f.samples[iy[0]:iy[-1] + 1, ix[0]:ix[-1] + 1]
    return Field(samples.copy(), (xs[ix[0]], ys[iy[0]]), f.spacing, f.carrier)


def _lattice_profiles(tubes: list[Tube], f: Field):
    """Per-axis kernel stacks J(u/L - k) and J(v/W - l) over the grid, one row per index."""
    ks = sorted({t.k for t in tubes})
    ls = sorted({t.l for t in tubes})
    first = tubes[0]
    x, y = f.coords()
    ex, ey = first.direction
    u = (x * ex + y * ey).ravel() / first.length
    v = (-x * ey + y * ex).ravel() / first.width
    A = np.stack([jackson_kernel(u - k) for k in ks])
    B = np.stack([jackson_kernel(v - l) for l in ls])
    return ks, ls, A, B


def _packet_masses(tubes: list[Tube], f_omega: Field) -> dict:
    ks, ls, A, B = _lattice_profiles(tubes, f_omega)
    density = np.abs(f_omega.samples.ravel()) ** 2 * f_omega.spacing**2
    # mass[k, l] = sum_x |f|^2 A_k(x)^2 B_l(x)^2
    masses = (A**2 * density) @ (B**2).T
    kpos = {k: i for i, k in enumerate(ks)}
    lpos = {l: j for j, l in enumerate(ls)}
    return {t.key: float(np.sqrt(max(masses[kpos[t.k], lpos[t.l]], 0.0))) for t in tubes}


def decompose(f: Field, tiles: list[FreqRect], region: Box, threshold: Optional[float] = None,
              margin: Optional[int] = None) -> list[WavePacket]:
    """All packets f_T = f_omega phi_T whose tube lattice cell reaches region, minus negligible ones."""
    threshold = SETTINGS.packet_threshold if threshold is None else threshold
    margin = SETTINGS.lattice_margin if margin is None else margin
    total = f.l2_norm()
    packets = []
    if total == 0:
        logger.info("Zero field: no packets")
        return packets
    for omega in tiles:
        f_omega = restrict_frequency(f, omega)
        if f_omega.l2_norm() <= threshold * total:
            continue
        tubes = dual_tube_lattice(omega, region, margin=margin)
        masses = _packet_masses(tubes, f_omega)
        kept = [WavePacket(omega, t, f_omega, masses[t.key]) for t in tubes if masses[t.key] > threshold * total]
        logger.info(f"Tile {omega.index}: kept {len(kept)} of {len(tubes)} packets")
        packets.extend(kept)
    return packets


def reconstruct(packets: list[WavePacket], template: Field, window: Optional[Box] = None) -> Field:
    """sum_T f_T on the template grid, or on its crop to window."""
    if window is not None:
        template = crop(template, window)
    out = Field.zeros(template.origin, template.spacing, template.shape, template.carrier)
    groups: dict = {}
    for packet in packets:
        groups.setdefault((packet.tile.index, id(packet.source)), []).append(packet)
    for group in groups.values():
        source = group[0].source.with_carrier(template.carrier)
        if window is not None:
            source = crop(source, window)
        tubes = [p.tube for p in group]
        ks, ls, A, B = _lattice_profiles(tubes, source)
        selector = np.zeros((len(ks), len(ls)))
        kpos = {k: i for i, k in enumerate(ks)}
        lpos = {l: j for j, l in enumerate(ls)}
        for t in tubes:
            selector[kpos[t.k], lpos[t.l]] = 1.0
        weight = np.sum((A.T @ selector) * B.T, axis=1).reshape(source.shape)
        out.samples += source.samples * weight
    return out


def sum_of_restrictions(f: Field, tiles: list[FreqRect]) -> Field:
    """sum_omega f_omega."""
    out = Field.zeros(f.origin, f.spacing, f.shape, f.carrier)
    for omega in tiles:
        out.samples += restrict_frequency(f, omega).samples
    return out


def single_wavepacket(tile: tuple, amplitude: complex = 1.0, spacing: Optional[float] = None,
                      window: Optional[Box] = None) -> Field:
    """amplitude * phi_T * e(xi_omega . x) for tile = (omega, T)."""
    omega, tube = tile
    spacing = spacing if spacing is not None else tube.width / 8
    f = Field.on_box(window or default_window(tube), spacing, carrier=omega.center)
    x, y = f.coords()
    f.samples = amplitude * bump_values(tube, x, y)
    return f
