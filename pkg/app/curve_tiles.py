"""
Tilings attached to the curve (xi, xi^d): the frequency rectangles of Omega_N,
the dual tube lattices in physical space, and the dyadic cube hierarchies used
by the tangential/transverse bookkeeping.

R is identified with N throughout.
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import GeometryError, dyadic_ladder, is_dyadic
from .geometry import Box

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurveParams:
    d: float
    N: int

    def __post_init__(self):
        if self.d < 3:
            raise GeometryError(f"Curve exponent d must be >= 3 (got {self.d})")
        if int(self.N) != self.N or self.N < 1:
            raise GeometryError(f"N must be a positive integer (got {self.N})")

    @property
    def R(self) -> int:
        return int(self.N)


@dataclass(frozen=True)
class FreqRect:
    index: int
    xi: float
    center: tuple
    tangent: tuple
    long: float
    short: float

    @property
    def normal(self) -> tuple:
        tx, ty = self.tangent
        return (ty, -tx)

    def frame(self, kx, ky):
        """Coordinates of frequencies relative to the center: (along tangent, along normal)."""
        dx = np.asarray(kx) - self.center[0]
        dy = np.asarray(ky) - self.center[1]
        tx, ty = self.tangent
        nx, ny = self.normal
        return dx * tx + dy * ty, dx * nx + dy * ny

    def contains(self, kx, ky, scale: float = 1.0, slack: float = 0.0):
        s, t = self.frame(kx, ky)
        return (np.abs(s) <= scale * self.long / 2 + slack) & (np.abs(t) <= scale * self.short / 2 + slack)

    def corners(self, scale: float = 1.0) -> np.ndarray:
        c = np.asarray(self.center)
        t = np.asarray(self.tangent) * scale * self.long / 2
        n = np.asarray(self.normal) * scale * self.short / 2
        return np.array([c - t - n, c + t - n, c + t + n, c - t + n])

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "xi": self.xi,
            "center": list(self.center),
            "tangent": list(self.tangent),
            "long": self.long,
            "short": self.short,
        }


def build_frequency_tiles(params: CurveParams) -> list[FreqRect]:
    """The N rectangles of Omega_N on the branch 1 <= xi < 2."""
    N, d = params.N, params.d
    tiles = []
    for j in range(1, N + 1):
        xi = 1.0 + (j - 1) / N
        slope = d * xi ** (d - 1)
        norm = math.hypot(1.0, slope)
        tiles.append(
            FreqRect(
                index=j,
                xi=xi,
                center=(xi, xi**d),
                tangent=(1.0 / norm, slope / norm),
                long=1.0 / N,
                short=float(N) ** (-d),
            )
        )
    return tiles


@dataclass(frozen=True)
class Tube:
    center: tuple
    direction: tuple
    length: float
    width: float
    dilation: float = 1.0
    tile: int = 0
    k: Optional[int] = None
    l: Optional[int] = None

    def __post_init__(self):
        if self.length < self.width:
            raise GeometryError(f"Tube length {self.length} must be at least the width {self.width}")

    @property
    def key(self) -> tuple:
        return (self.tile, self.k, self.l)

    @property
    def normal(self) -> tuple:
        ex, ey = self.direction
        return (-ey, ex)

    @property
    def area(self) -> float:
        return self.length * self.width * self.dilation**2

    def local(self, x, y):
        """(along, across) offsets from the center."""
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        ex, ey = self.direction
        return dx * ex + dy * ey, -dx * ey + dy * ex

    def contains(self, x, y):
        if self.k is not None and self.dilation == 1.0:
            k, l = lattice_index(x, y, self.direction, self.length, self.width)
            return (k == self.k) & (l == self.l)
        u, v = self.local(x, y)
        return (np.abs(u) <= self.dilation * self.length / 2) & (np.abs(v) <= self.dilation * self.width / 2)

    def dilate(self, factor: float) -> "Tube":
        return Tube(self.center, self.direction, self.length, self.width,
                    self.dilation * factor, self.tile, self.k, self.l)

    def star(self, R: float, delta: float) -> "Tube":
        """T* = R^delta T, scaled about the center."""
        return self.dilate(R**delta)

    def corners(self) -> np.ndarray:
        c = np.asarray(self.center)
        e = np.asarray(self.direction) * self.dilation * self.length / 2
        n = np.asarray(self.normal) * self.dilation * self.width / 2
        return np.array([c - e - n, c + e - n, c + e + n, c - e + n])

    def bounding_box(self) -> Box:
        pts = self.corners()
        return Box(pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())

    def axis_points(self, step: float) -> np.ndarray:
        half = self.dilation * self.length / 2
        count = max(2, int(math.ceil(2 * half / step)) + 1)
        s = np.linspace(-half, half, count)
        return np.asarray(self.center) + s[:, None] * np.asarray(self.direction)

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "direction": list(self.direction),
            "length": self.length,
            "width": self.width,
            "dilation": self.dilation,
            "tile": self.tile,
            "k": self.k,
            "l": self.l,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tube":
        return cls(
            center=tuple(data["center"]),
            direction=tuple(data["direction"]),
            length=float(data["length"]),
            width=float(data["width"]),
            dilation=float(data.get("dilation", 1.0)),
            tile=int(data.get("tile", 0)),
            k=data.get("k"),
            l=data.get("l"),
        )


def lattice_index(x, y, direction, length: float, width: float):
    """Cell (k, l) of the lattice anchored at the origin; cells are half-open."""
    ex, ey = direction
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = x * ex + y * ey
    v = -x * ey + y * ex
    return np.floor(u / length + 0.5).astype(int), np.floor(v / width + 0.5).astype(int)


def dual_tube_lattice(omega: FreqRect, region: Box, margin: int = 0) -> list[Tube]:
    """Tubes of the lattice dual to omega covering region, plus `margin` extra cells per side."""
    length = 1.0 / omega.short
    width = 1.0 / omega.long
    direction = omega.normal
    corners = region.corners()
    k, l = lattice_index(corners[:, 0], corners[:, 1], direction, length, width)
    ex, ey = direction
    tubes = []
    for kk in range(int(k.min()) - margin, int(k.max()) + margin + 1):
        for ll in range(int(l.min()) - margin, int(l.max()) + margin + 1):
            u, v = kk * length, ll * width
            center = (u * ex - v * ey, u * ey + v * ex)
            tubes.append(Tube(center, direction, length, width, 1.0, omega.index, kk, ll))
    logger.debug(f"Lattice for tile {omega.index}: {len(tubes)} tubes of {length:g} x {width:g}")
    return tubes


@dataclass(frozen=True)
class Cube:
    x0: float
    y0: float
    side: float

    @property
    def center(self) -> tuple:
        return (self.x0 + self.side / 2, self.y0 + self.side / 2)

    @property
    def area(self) -> float:
        return self.side**2

    def box(self) -> Box:
        return Box(self.x0, self.x0 + self.side, self.y0, self.y0 + self.side)

    def dilate(self, factor: float) -> Box:
        return Box.square(self.center, factor * self.side)

    def contains(self, x, y):
        return self.box().contains(x, y)

    def children(self) -> list["Cube"]:
        h = self.side / 2
        return [Cube(self.x0 + a * h, self.y0 + b * h, h) for b in (0, 1) for a in (0, 1)]


@dataclass(frozen=True)
class CubeGrid:
    root: Cube
    level: int
    cubes: tuple

    @property
    def per_axis(self) -> int:
        return 2**self.level

    @property
    def side(self) -> float:
        return self.root.side / self.per_axis

    def index_of(self, x, y):
        """Integer cube coordinates (ix, iy); may fall outside [0, per_axis) for outside points."""
        ix = np.floor((np.asarray(x, dtype=float) - self.root.x0) / self.side).astype(int)
        iy = np.floor((np.asarray(y, dtype=float) - self.root.y0) / self.side).astype(int)
        return ix, iy

    def cube(self, ix: int, iy: int) -> Cube:
        return self.cubes[iy * self.per_axis + ix]


def root_cube(R: float, d: float) -> Cube:
    """Smallest dyadic cube [0, 2^k*]^2 holding the ball of radius R^d."""
    k_star = math.ceil(math.log2(2 * R**d) - 1e-12)
    return Cube(0.0, 0.0, 2.0**k_star)


def xi_ladder(R: float, d: float) -> list[float]:
    return dyadic_ladder(1.0, R ** (d - 2))


def delta_ladder(R: float, delta: float, ceiling_shift: int = 1) -> list[float]:
    # The defining range tops out at R/2^5; desk scales lift the ceiling to R/2^shift.
    return dyadic_ladder(R**delta / 2, R / 2**ceiling_shift)


def grid_at_level(root: Cube, level: int) -> CubeGrid:
    if level < 0:
        raise GeometryError(f"Cube level must be nonnegative (got {level})")
    n = 2**level
    side = root.side / n
    cubes = tuple(Cube(root.x0 + ix * side, root.y0 + iy * side, side) for iy in range(n) for ix in range(n))
    return CubeGrid(root, level, cubes)


def scale_level(scale: float, mode: str, R: float, d: float) -> int:
    divisor = scale if mode == "xi" else R ** (d - 2) * scale
    level = math.log2(divisor)
    if abs(level - round(level)) > 1e-9 or round(level) < 0:
        raise GeometryError(f"Scale {scale} in mode {mode} does not give a dyadic subdivision")
    return int(round(level))


def cube_grid(root: Cube, scale: float, mode: str, R: float, d: float,
              delta: float = 0.1, ceiling_shift: int = 1) -> CubeGrid:
    """Q*_Xi (mode "xi") or Q**_Delta (mode "delta") as a full tiling of root."""
    if mode not in ("xi", "delta"):
        raise GeometryError(f"Unknown cube mode {mode!r}")
    if not is_dyadic(scale):
        raise GeometryError(f"Scale {scale} is not dyadic")
    ladder = xi_ladder(R, d) if mode == "xi" else delta_ladder(R, delta, ceiling_shift)
    if not any(abs(scale - s) < 1e-12 * s for s in ladder):
        bounds = f"[{ladder[0]:g}, {ladder[-1]:g}]" if ladder else "empty"
        raise GeometryError(f"Scale {scale:g} outside the admissible {mode} range {bounds}")
    return grid_at_level(root, scale_level(scale, mode, R, d))


def parent_cube(cube: Cube, grid: CubeGrid) -> Cube:
    if cube.side >= grid.root.side:
        raise GeometryError("root has no parent")
    side = 2 * cube.side
    x0 = grid.root.x0 + math.floor((cube.x0 - grid.root.x0) / side + 1e-12) * side
    y0 = grid.root.y0 + math.floor((cube.y0 - grid.root.y0) / side + 1e-12) * side
    return Cube(x0, y0, side)


def tiles_to_json(params: CurveParams, region: Optional[Box] = None) -> str:
    """Debug dump of Omega_N and, when a region is given, the dual lattices over it."""
    records = []
    for omega in build_frequency_tiles(params):
        record = omega.to_dict()
        if region is not None:
            record["tubes"] = [t.to_dict() for t in dual_tube_lattice(omega, region)]
        records.append(record)
    return json.dumps({"d": params.d, "N": params.N, "tiles": records}, indent=2)
