"""
Sampled complex fields on uniform planar grids.

A Field stores demodulated samples: the function value at grid point x is
samples * e(carrier . x), where e(t) = exp(2 pi i t). Keeping the carrier
separate lets a grid resolve an N^-1 x N^-d frequency rectangle sitting at
|xi| ~ 1..8 without sampling the raw oscillation.
"""
import csv
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft

from .config import GeometryError, ReportError, ResolutionError
from .curve_tiles import FreqRect
from .geometry import Box

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<5d2q")
CSV_MAX_POINTS = 1 << 16


def plane_wave(x, y, frequency) -> np.ndarray:
    return np.exp(2j * np.pi * (frequency[0] * np.asarray(x) + frequency[1] * np.asarray(y)))


@dataclass
class Field:
    samples: np.ndarray
    origin: tuple
    spacing: float
    carrier: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 2 or min(self.samples.shape) < 1:
            raise GeometryError(f"Field needs a 2-D grid of at least 1x1 samples (got {self.samples.shape})")
        if self.spacing <= 0:
            raise GeometryError(f"Grid spacing must be positive (got {self.spacing})")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.carrier = (float(self.carrier[0]), float(self.carrier[1]))

    @classmethod
    def zeros(cls, origin, spacing: float, shape, carrier=(0.0, 0.0)) -> "Field":
        return cls(np.zeros(shape, dtype=complex), origin, spacing, carrier)

    @classmethod
    def on_box(cls, box: Box, spacing: float, carrier=(0.0, 0.0)) -> "Field":
        nx = max(1, int(round((box.xmax - box.xmin) / spacing)))
        ny = max(1, int(round((box.ymax - box.ymin) / spacing)))
        return cls.zeros((box.xmin, box.ymin), spacing, (ny, nx), carrier)

    @classmethod
    def from_function(cls, fn: Callable, origin, spacing: float, shape, carrier=(0.0, 0.0)) -> "Field":
        """fn(x, y) returns demodulated values."""
        template = cls.zeros(origin, spacing, shape, carrier)
        x, y = template.coords()
        template.samples = np.asarray(fn(x, y), dtype=complex) * np.ones(shape)
        return template

    @property
    def shape(self) -> tuple:
        return self.samples.shape

    @property
    def extent(self) -> tuple:
        ny, nx = self.shape
        return (nx * self.spacing, ny * self.spacing)

    def axes(self):
        ny, nx = self.shape
        return (self.origin[0] + self.spacing * np.arange(nx),
                self.origin[1] + self.spacing * np.arange(ny))

    def coords(self):
        xs, ys = self.axes()
        return np.meshgrid(xs, ys)

    def box(self) -> Box:
        w, h = self.extent
        return Box(self.origin[0], self.origin[0] + w, self.origin[1], self.origin[1] + h)

    def values(self) -> np.ndarray:
        """Modulated values on the grid."""
        x, y = self.coords()
        return self.samples * plane_wave(x, y, self.carrier)

    def with_carrier(self, carrier) -> "Field":
        if tuple(carrier) == self.carrier:
            return self
        x, y = self.coords()
        shift = (self.carrier[0] - carrier[0], self.carrier[1] - carrier[1])
        return Field(self.samples * plane_wave(x, y, shift), self.origin, self.spacing, carrier)

    def same_grid(self, other: "Field") -> bool:
        return (self.shape == other.shape and self.spacing == other.spacing
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.spacing))

    def __add__(self, other: "Field") -> "Field":
        if not self.same_grid(other):
            raise GeometryError("Cannot add fields sampled on different grids")
        other = other.with_carrier(self.carrier)
        return Field(self.samples + other.samples, self.origin, self.spacing, self.carrier)

    def __sub__(self, other: "Field") -> "Field":
        return self + other.scaled(-1.0)

    def scaled(self, factor: complex) -> "Field":
        return Field(self.samples * factor, self.origin, self.spacing, self.carrier)

    def copy(self) -> "Field":
        return Field(self.samples.copy(), self.origin, self.spacing, self.carrier)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2)) * self.spacing)

    def frequencies(self):
        """Frequency axes of the demodulated spectrum, shifted back by the carrier."""
        ny, nx = self.shape
        return (sfft.fftfreq(nx, self.spacing) + self.carrier[0],
                sfft.fftfreq(ny, self.spacing) + self.carrier[1])


def check_resolution(f: Field, omega: FreqRect, scale: float = 2.0) -> None:
    """The grid must resolve scale*omega: a quarter-band spatial step and 8 bins across its short side."""
    corners = omega.corners(scale) - np.asarray(f.carrier)
    reach = float(np.max(np.abs(corners)))
    if reach > 0 and f.spacing > 1.0 / (4 * reach):
        raise ResolutionError(
            f"Grid spacing {f.spacing:g} too coarse for tile {omega.index}: need <= {1 / (4 * reach):g}"
        )
    ny, nx = f.shape
    step = 1.0 / (min(nx, ny) * f.spacing)
    if step > scale * omega.short / 8:
        raise ResolutionError(
            f"Frequency step {step:g} too coarse for tile {omega.index}: "
            f"need <= {scale * omega.short / 8:g} (grid extent >= {8 / (scale * omega.short):g})"
        )


def frequency_mask(f: Field, omega: FreqRect, scale: float = 1.0) -> np.ndarray:
    kx, ky = f.frequencies()
    KX, KY = np.meshgrid(kx, ky)
    return omega.contains(KX, KY, scale=scale, slack=1e-12 * max(1.0, omega.long))


def restrict_frequency(f: Field, omega: FreqRect) -> Field:
    """f_omega: the FFT of f multiplied by the indicator of omega, transformed back."""
    check_resolution(f, omega)
    spectrum = sfft.fft2(f.samples)
    spectrum *= frequency_mask(f, omega)
    return Field(sfft.ifft2(spectrum), f.origin, f.spacing, f.carrier)


def parseval_report(f: Field, tiles: list[FreqRect]) -> dict:
    """||f||^2 against sum_omega ||f_omega||^2, with the mass outside the union of tiles as residual."""
    spectrum = sfft.fft2(f.samples)
    ny, nx = f.shape
    # Plancherel on the grid: sum |f|^2 h^2 = sum |F|^2 h^2 / (nx ny)
    weight = f.spacing**2 / (nx * ny)
    total = float(np.sum(np.abs(spectrum) ** 2) * weight)
    covered = np.zeros(f.shape, dtype=bool)
    parts = []
    for omega in tiles:
        mask = frequency_mask(f, omega)
        parts.append(float(np.sum(np.abs(spectrum[mask]) ** 2) * weight))
        covered |= mask
    residual = float(np.sum(np.abs(spectrum[~covered]) ** 2) * weight)
    gap = abs(total - sum(parts) - residual) / total if total > 0 else 0.0
    return {
        "total": total,
        "parts": parts,
        "sum_parts": float(sum(parts)),
        "residual": residual,
        "relative_gap": gap,
    }


def write_binary(f: Field, path) -> Path:
    path = Path(path)
    ny, nx = f.shape
    header = _HEADER.pack(f.origin[0], f.origin[1], f.spacing, f.carrier[0], f.carrier[1], ny, nx)
    try:
        with path.open("wb") as handle:
            handle.write(header)
            handle.write(np.ascontiguousarray(f.samples, dtype="<c16").tobytes())
    except OSError as e:
        raise ReportError(f"Could not write field to {path}: {e}") from e
    return path


def read_binary(path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ReportError(f"Field file {path} is shorter than its header")
    ox, oy, h, cx, cy, ny, nx = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != ny * nx:
        raise ReportError(f"Field file {path} is truncated: {body.size} of {ny * nx} samples")
    return Field(body.reshape(ny, nx).copy(), (ox, oy), h, (cx, cy))


def write_csv(f: Field, path, modulated: bool = True) -> Path:
    if f.samples.size > CSV_MAX_POINTS:
        raise ReportError(f"Field has {f.samples.size} samples; CSV export is limited to {CSV_MAX_POINTS}")
    path = Path(path)
    x, y = f.coords()
    values = f.values() if modulated else f.samples
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "re", "im"])
        for xi, yi, v in zip(x.ravel(), y.ravel(), values.ravel()):
            writer.writerow([repr(float(xi)), repr(float(yi)), repr(float(v.real)), repr(float(v.imag))])
    return path


def random_band_limited(tiles: list[FreqRect], origin, spacing: float, shape,
                        seed: int = 0, carrier: Optional[tuple] = None, fill: float = 0.5) -> Field:
    """Random field whose spectrum lives in the inner `fill` fraction of each tile."""
    rng = np.random.default_rng(seed)
    if carrier is None:
        carrier = tiles_carrier(tiles)
    f = Field.zeros(origin, spacing, shape, carrier)
    spectrum = np.zeros(shape, dtype=complex)
    for omega in tiles:
        mask = frequency_mask(f, omega, scale=fill)
        count = int(mask.sum())
        spectrum[mask] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    f.samples = sfft.ifft2(spectrum)
    logger.debug(f"Random band-limited field on {shape} over {len(tiles)} tiles (seed {seed})")
    return f


def tiles_carrier(tiles: list[FreqRect]) -> tuple:
    """Center of the bounding box of the tiles' centers."""
    centers = np.array([omega.center for omega in tiles])
    lo, hi = centers.min(axis=0), centers.max(axis=0)
    return (float((lo[0] + hi[0]) / 2), float((lo[1] + hi[1]) / 2))
