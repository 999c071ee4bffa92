"""
Randomized checks of the incidence lemmas, one CSV row per generated instance.

Each battery takes a base seed and derives instance i from default_rng([seed, i]),
so rows are reproducible regardless of thread count.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ConfigError, ReportError
from .curve_tiles import (
    CurveParams, Tube, build_frequency_tiles, cube_grid, dual_tube_lattice, parent_cube, root_cube, xi_ladder,
)
from .geometry import Ball, Box
from .polypart import Polynomial2, partition_from_polynomial, wall
from .reports import write_rows_csv
from .variety import (
    Incidence, TangTranSplit, angle_threshold, default_sample, direction_count, direction_key,
    neighborhood_volume, overlap_sum, tang_tran_split, transverse_segments, union_lower_bound,
)

logger = logging.getLogger(__name__)

WONGKEW_CONSTANT = 16.0
OVERLAP_CONSTANT = 8.0
DIRECTION_CONSTANT = 8.0
UNIT_BOX = Box(-1.0, 1.0, -1.0, 1.0)


def _unit_direction(angle: float) -> tuple:
    return (math.cos(angle), math.sin(angle))


def wongkew_instance(seed: int, index: int, rho: float = 0.05, samples: int = 20_000,
                     max_degree: int = 6) -> dict:
    rng = np.random.default_rng([seed, index])
    D = int(rng.integers(1, max_degree + 1))
    P = Polynomial2.random(D, rng)
    side = UNIT_BOX.xmax - UNIT_BOX.xmin
    volume, stderr = neighborhood_volume(P, rho, UNIT_BOX, samples, seed=index)
    half, _ = neighborhood_volume(P, rho / 2, UNIT_BOX, samples, seed=index)
    return {
        "instance": index,
        "degree": D,
        "rho": rho,
        "volume": volume,
        "stderr": stderr,
        "constant": volume / (D * rho * side),
        "halving_ratio": half / volume if volume > 0 else float("nan"),
        "ok": volume <= WONGKEW_CONSTANT * D * rho * side,
    }


def segments_instance(seed: int, index: int, degree: int = 3, a: float = 0.05) -> dict:
    rng = np.random.default_rng([seed, index])
    P = Polynomial2.random(degree, rng)
    width = float(rng.uniform(0.02, 0.1))
    tube = Tube(
        (float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5))),
        _unit_direction(float(rng.uniform(0, math.pi))),
        float(rng.uniform(0.5, 2.0)),
        width,
    )
    count = transverse_segments(P, tube, a, width / 2)
    return {
        "instance": index,
        "degree": degree,
        "a": a,
        "rho": width / 2,
        "segments": count,
        "bound": 2 * degree**2,
        "ok": count <= 2 * degree**2,
    }


def bush_family(rng: np.random.Generator, length: float, width: float, J: int) -> list[Tube]:
    """J tubes through a common center (jittered by one width) at angles j * theta0, W/L <= theta0 <= pi/J."""
    theta0 = float(rng.uniform(width / length, math.pi / J))
    start = float(rng.uniform(0, math.pi))
    family = []
    for j in range(J):
        center = (float(rng.uniform(-width, width)), float(rng.uniform(-width, width)))
        family.append(Tube(center, _unit_direction(start + j * theta0), length, width))
    return family


def incidence_instance(seed: int, index: int, width: float = 1.0) -> dict:
    rng = np.random.default_rng([seed, index])
    length = float(rng.choice([10.0, 20.0, 40.0]))
    J = int(rng.integers(2, min(24, int(10 * length / width)) + 1))
    family = bush_family(rng, length, width, J)
    total = sum(t.area for t in family)
    lower = union_lower_bound(family)
    worst = max(overlap_sum(t, family) / t.area for t in family)
    return {
        "instance": index,
        "J": J,
        "L": length,
        "W": width,
        "sum_area": total,
        "union_lower": lower,
        "ratio": total / lower,
        "overlap_max": worst,
        "bound": OVERLAP_CONSTANT * math.log(J),
        "ok": total <= OVERLAP_CONSTANT * math.log(J) * lower,
    }


def directions_instance(seed: int, index: int, length: float = 40.0, width: float = 1.0,
                        J: int = 400) -> dict:
    """Tubes in J evenly spread directions through a point of Z(P), P a random line or conic through 0."""
    rng = np.random.default_rng([seed, index])
    degree = int(rng.integers(1, 3))
    phi = float(rng.uniform(0, math.pi))
    nx, ny = -math.sin(phi), math.cos(phi)
    if degree == 1:
        P = Polynomial2.from_terms({(1, 0): nx, (0, 1): ny})
    else:
        # circle of radius r tangent to the line at 0
        r = float(rng.uniform(2, 10)) * length
        P = Polynomial2.from_terms({(2, 0): 1.0, (0, 2): 1.0, (1, 0): -2 * r * nx, (0, 1): -2 * r * ny})
    tubes = [Tube((0.0, 0.0), _unit_direction(j * math.pi / J), length, width) for j in range(J)]
    count = direction_count(tubes, P, Ball((0.0, 0.0), length), width)
    return {
        "instance": index,
        "degree": degree,
        "J": J,
        "L": length,
        "W": width,
        "count": count,
        "constant": count / (degree * math.log(J)),
        "ok": count <= DIRECTION_CONSTANT * degree * math.log(J),
    }


def monotonicity_instance(seed: int, index: int, R: int = 4, d: float = 3.0, delta: float = 0.1,
                          grid: int = 256) -> dict:
    """T met at Q' and not in T_Xi[Q'] must leave T out of T_{Xi/2}[parent of Q'], for every Xi > 1."""
    rng = np.random.default_rng([seed, index])
    root = root_cube(R, d)
    domain = root.box()
    P = Polynomial2.random(int(rng.integers(1, 4)), rng, center=root.center, scale=root.side / 2)
    part = partition_from_polynomial(P, domain, grid)
    wall_mask = wall(part, R ** (1 + delta))
    tile = build_frequency_tiles(CurveParams(d, R))[0]
    L, W = 1 / tile.short, 1 / tile.long
    tube = Tube(
        (float(rng.uniform(domain.xmin, domain.xmax)), float(rng.uniform(domain.ymin, domain.ymax))),
        _unit_direction(float(rng.uniform(0, math.pi))),
        L,
        W,
    )
    sample = default_sample(P, root, [tube])
    incidence = Incidence.build([tube], wall_mask, sample, R, delta)
    checks = violations = 0
    xis = xi_ladder(R, d)
    for xi in xis[1:]:
        fine = cube_grid(root, xi, "xi", R, d, delta)
        coarse = cube_grid(root, xi / 2, "xi", R, d, delta)
        fine_members = incidence.memberships(fine, angle_threshold(xi, "xi", R, d, delta))
        coarse_members = incidence.memberships(coarse, angle_threshold(xi / 2, "xi", R, d, delta))
        for ix, iy in incidence.met_cubes(0, fine):
            if 0 in fine_members.get((ix, iy), set()):
                continue
            checks += 1
            parent = parent_cube(fine.cube(ix, iy), fine)
            pix, piy = coarse.index_of(*parent.center)
            if 0 in coarse_members.get((int(pix), int(piy)), set()):
                violations += 1
    return {"instance": index, "degree": P.degree, "checks": checks, "violations": violations,
            "ok": violations == 0}


def transverse_bounds(split: TangTranSplit, tubes: list[Tube], D: int, R: float, delta: float) -> dict:
    """Largest direction count per transverse class against D R^delta Delta, and classes per tube against D^2."""
    worst_directions = 0.0
    per_tube: dict = {}
    for scale, classes in split.tran.items():
        for cls in classes:
            J = len({direction_key(tubes[i]) for i in cls.members})
            worst_directions = max(worst_directions, J / (D * R**delta * scale))
            for i in cls.members:
                per_tube[i] = per_tube.get(i, 0) + 1
    most = max(per_tube.values(), default=0)
    return {
        "direction_constant": worst_directions,
        "max_cubes_per_tube": most,
        "cube_bound": 2 * D**2,
        "ok": most <= 2 * D**2,
    }


def classification_instance(seed: int, index: int, R: int = 4, d: float = 3.0, delta: float = 0.1,
                            grid: int = 256) -> dict:
    """Split one tube lattice by the wall of a random low-degree polynomial and measure the transverse bounds."""
    rng = np.random.default_rng([seed, index])
    root = root_cube(R, d)
    domain = root.box()
    D = int(rng.integers(1, 4))
    P = Polynomial2.random(D, rng, center=root.center, scale=root.side / 2)
    part = partition_from_polynomial(P, domain, grid)
    wall_mask = wall(part, R ** (1 + delta))
    tiles = build_frequency_tiles(CurveParams(d, R))
    omega = tiles[int(rng.integers(0, len(tiles)))]
    tubes = dual_tube_lattice(omega, domain)
    split = tang_tran_split(tubes, P, wall_mask, R, d, delta, root=root)
    bounds = transverse_bounds(split, tubes, D, R, delta)
    missing = len(split.wall_meeting - split.assigned())
    row = {"instance": index, "degree": D, "tubes": len(tubes), "wall_tubes": len(split.wall_meeting),
           "unassigned": missing}
    row.update(bounds)
    row["ok"] = bounds["ok"] and missing == 0
    return row


BATTERIES: dict = {
    "wongkew": (wongkew_instance, 20),
    "segments": (segments_instance, 50),
    "incidence": (incidence_instance, 20),
    "directions": (directions_instance, 10),
    "monotonicity": (monotonicity_instance, 1000),
    "classification": (classification_instance, 5),
}


def run_battery(which: str, seed: int = 0, instances: Optional[int] = None, threads: int = 1) -> list[dict]:
    if which not in BATTERIES:
        raise ConfigError(f"Unknown battery {which!r}; choose from {', '.join(sorted(BATTERIES))}")
    fn, default = BATTERIES[which]
    count = default if instances is None else int(instances)
    if count < 1:
        raise ConfigError("A battery needs at least one instance")
    job: Callable = lambda i: fn(seed, i)  # noqa: E731
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(job, range(count)))
    failed = sum(1 for r in rows if not r["ok"])
    if failed:
        logger.warning(f"Battery {which}: {failed} of {count} instances over the pinned constant")
    else:
        logger.info(f"Battery {which}: {count} instances within the pinned constants")
    return rows


def emit_battery(rows: list[dict], which: str, seed: int, out_dir) -> Path:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"Cannot create output directory {path}: {e}") from e
    return write_rows_csv(rows, path / f"battery_{which}_{seed}.csv")
