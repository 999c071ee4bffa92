"""
Tubes against the zero set Z(P): sampled nonsingular points, tangent angles,
the Xi/Delta classes T_scale[Q], the tangential/transverse peeling, and the
incidence quantities behind the planar tube lemmas.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .config import SETTINGS, ConfigError, GeometryError
from .curve_tiles import Cube, CubeGrid, Tube, cube_grid, delta_ladder, parent_cube, root_cube, xi_ladder
from .geometry import Ball, Box, convex_intersection_area
from .polypart import Polynomial2, WallMask, zero_pixels

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VarietySample:
    points: np.ndarray
    tangents: np.ndarray
    gradient_norms: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask) -> "VarietySample":
        return VarietySample(self.points[mask], self.tangents[mask], self.gradient_norms[mask])


def sample_variety(P: Polynomial2, region: Box, resolution: int = 512,
                   singular_fraction: Optional[float] = None) -> VarietySample:
    """Zero crossings on grid edges refined by 40 bisection steps, minus near-singular points."""
    singular_fraction = SETTINGS.singular_fraction if singular_fraction is None else singular_fraction
    xs = np.linspace(region.xmin, region.xmax, resolution + 1)
    ys = np.linspace(region.ymin, region.ymax, resolution + 1)
    X, Y = np.meshgrid(xs, ys)
    values = P(X, Y)

    lo, hi = [], []
    for a_vals, b_vals, a_pts, b_pts in (
        (values[:, :-1], values[:, 1:], (X[:, :-1], Y[:, :-1]), (X[:, 1:], Y[:, 1:])),
        (values[:-1, :], values[1:, :], (X[:-1, :], Y[:-1, :]), (X[1:, :], Y[1:, :])),
    ):
        hit = np.sign(a_vals) * np.sign(b_vals) < 0
        lo.append(np.column_stack([a_pts[0][hit], a_pts[1][hit]]))
        hi.append(np.column_stack([b_pts[0][hit], b_pts[1][hit]]))
    lo, hi = np.vstack(lo), np.vstack(hi)
    f_lo = P(lo[:, 0], lo[:, 1])
    for _ in range(40):
        mid = (lo + hi) / 2
        f_mid = P(mid[:, 0], mid[:, 1])
        same = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(same[:, None], mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same[:, None], hi, mid)
    points = np.vstack([(lo + hi) / 2, np.column_stack([X[values == 0], Y[values == 0]])])

    gx_grid, gy_grid = P.gradient(X, Y)
    top = float(np.max(np.hypot(gx_grid, gy_grid))) if values.size else 0.0
    gx, gy = P.gradient(points[:, 0], points[:, 1])
    norms = np.hypot(gx, gy)
    keep = norms >= singular_fraction * top if top > 0 else np.zeros(len(points), dtype=bool)
    keep &= norms > 0
    tangents = np.column_stack([-gy[keep], gx[keep]]) / norms[keep][:, None]
    logger.debug(f"Variety sample: {int(keep.sum())} points kept of {len(points)} crossings")
    return VarietySample(points[keep], tangents, norms[keep])


def angle_to_variety(tube, tangent) -> np.ndarray:
    """Acute angle in [0, pi/2] between the line of e(T) and the tangent line(s)."""
    direction = np.asarray(tube.direction if isinstance(tube, Tube) else tube, dtype=float)
    direction = direction / np.linalg.norm(direction)
    tangent = np.asarray(tangent, dtype=float)
    cosine = np.abs(tangent @ direction) / np.linalg.norm(tangent, axis=-1)
    return np.arccos(np.clip(cosine, 0.0, 1.0))


@dataclass(frozen=True)
class TubeClass:
    """kind is "xi" or "delta" for raw classes T_scale[Q]; "tangential" or "transverse" after peeling."""

    scale: float
    kind: str
    cube: Cube
    members: frozenset

    def to_dict(self) -> dict:
        return {"scale": self.scale, "kind": self.kind,
                "cube": [self.cube.x0, self.cube.y0, self.cube.side], "members": sorted(self.members)}


def angle_threshold(scale: float, kind: str, R: float, d: float, delta: float) -> float:
    if kind == "xi":
        return scale * R ** (-d + 1 + delta)
    return scale / R


@dataclass
class Incidence:
    """Per-tube raw material shared by every scale: wall pixels in T*, nearby variety samples and their angles."""

    tubes: list
    wall_points: list
    near_points: list
    near_angles: list

    @classmethod
    def build(cls, tubes: list[Tube], wall_mask: WallMask, sample: VarietySample, R: float, delta: float):
        ny, nx = wall_mask.mask.shape
        box = wall_mask.box
        hx = (box.xmax - box.xmin) / nx
        hy = (box.ymax - box.ymin) / ny
        iy, ix = np.nonzero(wall_mask.mask)
        wx = box.xmin + hx * (ix + 0.5)
        wy = box.ymin + hy * (iy + 0.5)
        wall_points, near_points, near_angles = [], [], []
        for tube in tubes:
            star = tube.star(R, delta)
            inside = star.contains(wx, wy)
            wall_points.append(np.column_stack([wx[inside], wy[inside]]))
            if len(sample):
                near = star.dilate(5.0).contains(sample.points[:, 0], sample.points[:, 1])
                near_points.append(sample.points[near])
                near_angles.append(angle_to_variety(tube, sample.tangents[near]))
            else:
                near_points.append(np.zeros((0, 2)))
                near_angles.append(np.zeros(0))
        return cls(list(tubes), wall_points, near_points, near_angles)

    def met_cubes(self, index: int, grid: CubeGrid) -> set:
        pts = self.wall_points[index]
        if len(pts) == 0:
            return set()
        ix, iy = grid.index_of(pts[:, 0], pts[:, 1])
        n = grid.per_axis
        ok = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
        return set(zip(ix[ok].tolist(), iy[ok].tolist()))

    def violated_cubes(self, index: int, grid: CubeGrid, threshold: float) -> set:
        """Cubes Q with a sampled z in 3Q and 5T* at angle above threshold."""
        bad = self.near_points[index][self.near_angles[index] > threshold]
        if len(bad) == 0:
            return set()
        ix, iy = grid.index_of(bad[:, 0], bad[:, 1])
        cells = set(zip(ix.tolist(), iy.tolist()))
        return {(cx + a, cy + b) for cx, cy in cells for a in (-1, 0, 1) for b in (-1, 0, 1)}

    def memberships(self, grid: CubeGrid, threshold: float) -> dict:
        """{(ix, iy): set of tube indices} for T_scale[Q]."""
        out: dict = {}
        for index in range(len(self.tubes)):
            met = self.met_cubes(index, grid)
            if not met:
                continue
            for cube in met - self.violated_cubes(index, grid, threshold):
                out.setdefault(cube, set()).add(index)
        return out

    def wall_meeting(self, grid: Optional[CubeGrid] = None) -> dict:
        """Tubes with T* meeting the wall, per cube of grid (or as one set when grid is None)."""
        if grid is None:
            return {i for i, pts in enumerate(self.wall_points) if len(pts)}
        out: dict = {}
        for index in range(len(self.tubes)):
            for cube in self.met_cubes(index, grid):
                out.setdefault(cube, set()).add(index)
        return out


def default_sample(P: Polynomial2, root: Cube, tubes: list[Tube]) -> VarietySample:
    """Four points per tube width across the root cube, padded by the 5T* reach."""
    width = min(t.width for t in tubes) if tubes else root.side / 256
    reach = max((5 * t.dilation * max(t.length, t.width) for t in tubes), default=0.0)
    region = root.box().expanded(min(reach, root.side))
    resolution = int(min(4096, max(64, math.ceil((region.xmax - region.xmin) / (width / 4)))))
    return sample_variety(P, region, resolution)


def classify(tubes: list[Tube], P: Polynomial2, wall_mask: WallMask, grid: CubeGrid, scale: float,
             kind: str, R: float, d: float, delta: float = 0.1, ceiling_shift: Optional[int] = None,
             sample: Optional[VarietySample] = None, incidence: Optional[Incidence] = None) -> list[TubeClass]:
    """T_scale[Q] for every cube Q of grid that has members."""
    if kind not in ("xi", "delta"):
        raise GeometryError(f"Unknown classification kind {kind!r}")
    ceiling_shift = SETTINGS.delta_ceiling_shift if ceiling_shift is None else ceiling_shift
    # validates the scale against its admissible ladder
    expected = cube_grid(grid.root, scale, kind, R, d, delta, ceiling_shift)
    if expected.level != grid.level:
        raise GeometryError(f"Grid level {grid.level} does not match scale {scale:g} ({expected.level})")
    if incidence is None:
        sample = sample if sample is not None else default_sample(P, grid.root, tubes)
        incidence = Incidence.build(tubes, wall_mask, sample, R, delta)
    threshold = angle_threshold(scale, kind, R, d, delta)
    classes = [
        TubeClass(scale, kind, grid.cube(ix, iy), frozenset(members))
        for (ix, iy), members in sorted(incidence.memberships(grid, threshold).items(), key=lambda kv: (kv[0][1], kv[0][0]))
    ]
    logger.info(f"Classified {len(tubes)} tubes at {kind}={scale:g}: {len(classes)} cubes with members")
    return classes


@dataclass
class TangTranSplit:
    cell: frozenset
    tang: dict = field(default_factory=dict)
    tran: dict = field(default_factory=dict)
    wall_meeting: frozenset = frozenset()

    def assigned(self) -> set:
        out: set = set()
        for classes in list(self.tang.values()) + list(self.tran.values()):
            for c in classes:
                out |= c.members
        return out

    def to_dict(self) -> dict:
        return {
            "cell": sorted(self.cell),
            "tang": {str(k): [c.to_dict() for c in v] for k, v in self.tang.items()},
            "tran": {str(k): [c.to_dict() for c in v] for k, v in self.tran.items()},
        }


def _ancestor(cube: Cube, grid: CubeGrid, levels: int) -> Cube:
    for _ in range(levels):
        cube = parent_cube(cube, grid)
    return cube


def _cube_key(cube: Cube, grid: CubeGrid) -> tuple:
    ix, iy = grid.index_of(cube.x0 + cube.side / 2, cube.y0 + cube.side / 2)
    return (int(ix), int(iy))


def tang_tran_split(tubes: list[Tube], P: Polynomial2, wall_mask: WallMask, R: float, d: float,
                    delta: float = 0.1, ceiling_shift: Optional[int] = None, root: Optional[Cube] = None,
                    sample: Optional[VarietySample] = None) -> TangTranSplit:
    """Inductive peeling into tangential classes by Xi and transverse classes by Delta."""
    ceiling_shift = SETTINGS.delta_ceiling_shift if ceiling_shift is None else ceiling_shift
    root = root or root_cube(R, d)
    xis = xi_ladder(R, d)
    deltas = delta_ladder(R, delta, ceiling_shift)
    if not deltas:
        raise GeometryError(f"Empty Delta range [{R**delta / 2:g}, {R / 2**ceiling_shift:g}] at R={R:g}")
    sample = sample if sample is not None else default_sample(P, root, tubes)
    incidence = Incidence.build(tubes, wall_mask, sample, R, delta)
    grids = {("xi", s): cube_grid(root, s, "xi", R, d, delta, ceiling_shift) for s in xis}
    grids.update({("delta", s): cube_grid(root, s, "delta", R, d, delta, ceiling_shift) for s in deltas})
    # wall-meeting means T* meets W inside Q*
    meeting = set().union(*incidence.wall_meeting(grids[("xi", xis[0])]).values())
    split = TangTranSplit(cell=frozenset(set(range(len(tubes))) - meeting), wall_meeting=frozenset(meeting))
    if not meeting:
        return split
    members = {key: incidence.memberships(g, angle_threshold(key[1], key[0], R, d, delta))
               for key, g in grids.items()}

    def lookup(key, cube):
        return members[key].get(_cube_key(cube, grids[key]), set())

    def emit(target, scale, kind, grid, per_cube):
        classes = [TubeClass(scale, kind, grid.cube(ix, iy), frozenset(m))
                   for (ix, iy), m in sorted(per_cube.items(), key=lambda kv: (kv[0][1], kv[0][0])) if m]
        if classes:
            target[scale] = classes

    # tangential: T_1[Q*] at Xi = 1, then T_Xi[Q] \ T_{Xi/2}[parent]
    for xi in xis:
        grid = grids[("xi", xi)]
        per_cube = {}
        for (ix, iy), m in members[("xi", xi)].items():
            if xi == 1:
                per_cube[(ix, iy)] = set(m)
            else:
                per_cube[(ix, iy)] = m - lookup(("xi", xi / 2), parent_cube(grid.cube(ix, iy), grid))
        emit(split.tang, xi, "tangential", grid, per_cube)

    # transverse: T_Delta[Q] \ T_{Delta/2}[parent]; the bottom step compares with the finest Xi class,
    # the top step takes the complement of T_Delta[Q] among wall-meeting tubes as well
    xi_top = xis[-1]
    xi_top_level = grids[("xi", xi_top)].level
    for position, dl in enumerate(deltas):
        grid = grids[("delta", dl)]
        top = position == len(deltas) - 1
        source = incidence.wall_meeting(grid) if top else members[("delta", dl)]
        per_cube = {}
        for (ix, iy), m in source.items():
            cube = grid.cube(ix, iy)
            if position == 0:
                ancestor = _ancestor(cube, grid, grid.level - xi_top_level)
                previous = lookup(("xi", xi_top), ancestor)
            else:
                previous = lookup(("delta", deltas[position - 1]), parent_cube(cube, grid))
            per_cube[(ix, iy)] = set(m) - previous
        emit(split.tran, dl, "transverse", grid, per_cube)

    missing = meeting - split.assigned()
    if missing:
        logger.warning(f"{len(missing)} wall-meeting tubes left unclassified")
    logger.info(f"Tang/Tran split: {len(split.cell)} cell tubes, {len(meeting)} wall tubes, "
                f"{len(split.tang)} Xi scales, {len(split.tran)} Delta scales")
    return split


def _grid_distance(P: Polynomial2, domain: Box, grid: int = 1024):
    hx = (domain.xmax - domain.xmin) / grid
    hy = (domain.ymax - domain.ymin) / grid
    xs = domain.xmin + hx * (np.arange(grid) + 0.5)
    ys = domain.ymin + hy * (np.arange(grid) + 0.5)
    X, Y = np.meshgrid(xs, ys)
    seeds = zero_pixels(P(X, Y))
    if not seeds.any():
        return None
    distance = ndimage.distance_transform_edt(~seeds, sampling=(hy, hx))
    return distance, hx, hy


def distance_to_variety(P: Polynomial2, points: np.ndarray, domain: Box, iterations: int = 20) -> np.ndarray:
    """Newton projection onto Z(P); raster distance where Newton does not settle."""
    z = np.array(points, dtype=float)
    scale = max(domain.xmax - domain.xmin, domain.ymax - domain.ymin)
    for _ in range(iterations):
        value = P(z[:, 0], z[:, 1])
        gx, gy = P.gradient(z[:, 0], z[:, 1])
        g2 = gx**2 + gy**2
        step = np.where(g2 > 0, value / np.where(g2 > 0, g2, 1.0), 0.0)
        z[:, 0] -= step * gx
        z[:, 1] -= step * gy
    value = P(z[:, 0], z[:, 1])
    gx, gy = P.gradient(z[:, 0], z[:, 1])
    grad = np.hypot(gx, gy)
    distance = np.hypot(z[:, 0] - points[:, 0], z[:, 1] - points[:, 1])
    settled = np.isfinite(distance) & (grad > 0) & (np.abs(value) <= 1e-9 * np.maximum(grad, 1e-300) * scale)
    if not settled.all():
        raster = _grid_distance(P, domain)
        fallback = np.full(int((~settled).sum()), np.inf)
        if raster is not None:
            grid_dist, hx, hy = raster
            ny, nx = grid_dist.shape
            pts = points[~settled]
            ix = np.clip(((pts[:, 0] - domain.xmin) / hx).astype(int), 0, nx - 1)
            iy = np.clip(((pts[:, 1] - domain.ymin) / hy).astype(int), 0, ny - 1)
            fallback = grid_dist[iy, ix]
        distance = distance.copy()
        distance[~settled] = fallback
    return distance


def neighborhood_volume(P: Polynomial2, rho: float, domain: Box, n_samples: int = 100_000,
                        seed: int = 0) -> tuple:
    """Monte Carlo area of the rho-neighbourhood of Z(P) in domain, with its standard error."""
    if rho <= 0:
        raise GeometryError(f"Neighbourhood radius must be positive (got {rho})")
    rng = np.random.default_rng(seed)
    points = np.column_stack([rng.uniform(domain.xmin, domain.xmax, n_samples),
                              rng.uniform(domain.ymin, domain.ymax, n_samples)])
    frac = float(np.mean(distance_to_variety(P, points, domain) <= rho))
    area = domain.area
    return area * frac, area * math.sqrt(frac * (1 - frac) / n_samples)


def transverse_segments(P: Polynomial2, tube: Tube, a: float, rho: float, resolution: Optional[int] = None) -> int:
    """Segments of length rho/a along T holding a point of Z(P) in T at angle >= a."""
    if not 0 < a <= 1:
        raise ConfigError(f"Angle a must lie in (0, 1] (got {a})")
    if rho <= 0:
        raise ConfigError(f"rho must be positive (got {rho})")
    length = tube.dilation * tube.length
    seg = rho / a
    if resolution is None:
        box = tube.bounding_box()
        step = min(tube.dilation * tube.width, seg) / 16
        resolution = int(min(4096, max(64, math.ceil(max(box.xmax - box.xmin, box.ymax - box.ymin) / step))))
    sample = sample_variety(P, tube.bounding_box(), resolution)
    if not len(sample):
        return 0
    inside = tube.contains(sample.points[:, 0], sample.points[:, 1])
    steep = angle_to_variety(tube, sample.tangents) >= a
    pts = sample.points[inside & steep]
    if len(pts) == 0:
        return 0
    u, _ = tube.local(pts[:, 0], pts[:, 1])
    index = np.clip(np.floor((u + length / 2) / seg).astype(int), 0, max(0, math.ceil(length / seg) - 1))
    return len(set(index.tolist()))


def direction_key(tube: Tube) -> float:
    key = round(math.atan2(tube.direction[1], tube.direction[0]) % math.pi, 9)
    return 0.0 if key == round(math.pi, 9) else key


def _distinct_directions(tubes: list[Tube]) -> int:
    return len({direction_key(t) for t in tubes})


def _check_direction_budget(tubes: list[Tube]):
    J = _distinct_directions(tubes)
    L = max(t.length for t in tubes)
    W = min(t.width for t in tubes)
    if J > 10 * L / W:
        raise GeometryError(f"J = {J} directions exceeds 10 L / W = {10 * L / W:g}")
    return J, L, W


def direction_count(tubes: list[Tube], P: Polynomial2, ball: Ball, width: float,
                    samples_across: int = 5) -> int:
    """Distinct directions among tubes lying inside ball and inside the width-neighbourhood of Z(P)."""
    if not tubes:
        return 0
    _check_direction_budget(tubes)
    box = ball.bounding_box().expanded(width)
    step = min(width, min(t.width for t in tubes)) / 4
    resolution = int(min(4096, max(64, math.ceil((box.xmax - box.xmin) / step))))
    sample = sample_variety(P, box, resolution)
    if not len(sample):
        return 0
    tree = cKDTree(sample.points)
    directions = set()
    for tube in tubes:
        along = max(2, math.ceil(tube.length / step) + 1)
        s = np.linspace(-tube.length / 2, tube.length / 2, along)
        t = np.linspace(-tube.width / 2, tube.width / 2, samples_across)
        S, T = np.meshgrid(s, t)
        ex, ey = tube.direction
        px = tube.center[0] + S * ex - T * ey
        py = tube.center[1] + S * ey + T * ex
        if not ball.contains(px, py).all():
            continue
        dist, _ = tree.query(np.column_stack([px.ravel(), py.ravel()]))
        if np.all(dist <= width + step):
            directions.add(direction_key(tube))
    return len(directions)


def overlap_sum(tube: Tube, family: list[Tube]) -> float:
    """sum_S |S cap T| by exact convex clipping."""
    if family:
        _check_direction_budget(family)
        if _distinct_directions(family) != len(family):
            raise GeometryError("Family must hold one tube per direction")
    corners = tube.corners()
    return float(sum(convex_intersection_area(s.corners(), corners) for s in family))


def union_lower_bound(family: list[Tube]) -> float:
    """(sum |T|)^2 / sum_S sum_T |S cap T| <= |union T| (Cauchy-Schwarz)."""
    areas = sum(t.area for t in family)
    pairwise = sum(convex_intersection_area(s.corners(), t.corners()) for s in family for t in family)
    return areas**2 / pairwise if pairwise > 0 else 0.0
