"""
Split of int_B |sum f_omega|^p into the cell term, the tangential terms by Xi and
the transverse terms by Delta, with the measured sides of the wall estimates.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import BudgetError, ConfigError, RunConfig
from .curve_tiles import Cube, CurveParams, FreqRect, build_frequency_tiles, root_cube
from .fields import Field, random_band_limited, tiles_carrier
from .geometry import Ball
from .polypart import MassDistribution, Partition, WallMask, partition, wall
from .variety import TangTranSplit, TubeClass, tang_tran_split
from .wavepacket import WavePacket, decompose, reconstruct

logger = logging.getLogger(__name__)


@dataclass
class TangTranRecord:
    R: float
    d: float
    p: float
    degree: int
    delta: float
    total: float
    cell_term: float
    wall_term: float
    tang_terms: dict
    tran_terms: dict
    residual: float
    relative_residual: float
    cells: dict
    orthogonality: float
    prop_wall: dict
    prop_alg: dict
    interpolation: list
    split: TangTranSplit
    n_packets: int
    wall_clock: float = 0.0
    class_terms: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "d": self.d,
            "p": self.p,
            "degree": self.degree,
            "delta": self.delta,
            "total": self.total,
            "cell_term": self.cell_term,
            "wall_term": self.wall_term,
            "tang_terms": {str(k): v for k, v in self.tang_terms.items()},
            "tran_terms": {str(k): v for k, v in self.tran_terms.items()},
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "cells": self.cells,
            "orthogonality": self.orthogonality,
            "prop_wall": self.prop_wall,
            "prop_alg": self.prop_alg,
            "interpolation": self.interpolation,
            "class_terms": self.class_terms,
            "split": self.split.to_dict(),
            "n_packets": self.n_packets,
            "wall_clock": self.wall_clock,
        }


def _density(f: Field, p: float) -> np.ndarray:
    return np.abs(f.samples) ** p * f.spacing**2


def cell_wall_split(F: Field, part: Partition, wall_mask: WallMask, ball: Ball, p: float) -> dict:
    """int_{O'_j} |F|^p per pruned cell and int_W |F|^p, all inside ball."""
    x, y = F.coords()
    density = _density(F, p)
    in_ball = ball.contains(x, y)
    in_wall = wall_mask.contains(x, y)
    outside = in_ball & ~in_wall
    labels = part.cell_of(x[outside], y[outside])
    weights = density[outside]
    totals = np.bincount(np.where(labels > 0, labels, 0), weights=weights, minlength=part.n_cells + 1)
    cells = {int(lab): float(totals[lab]) for lab in range(1, part.n_cells + 1) if totals[lab] > 0}
    unassigned = float(weights[labels <= 0].sum())
    masses = list(cells.values())
    median = float(np.median(masses)) if masses else 0.0
    return {
        "cells": cells,
        "wall": float(density[in_ball & in_wall].sum()),
        "unassigned": unassigned,
        "median": median,
        "min_ratio": min(masses) / median if median > 0 else 0.0,
        "max_ratio": max(masses) / median if median > 0 else 0.0,
        "balanced": bool(masses) and all(median / 2 <= m <= 2 * median for m in masses),
    }


def orthogonality_ratio(packets: list[WavePacket], part: Partition, wall_mask: WallMask,
                        R: float, delta: float, f_norm: float) -> float:
    """sum_T ||f_T||^2 #{j: T* meets O'_j} / ||f||^2."""
    if f_norm <= 0:
        raise ConfigError("Zero field: orthogonality ratio is undefined")
    pruned = part.pruned_labels(wall_mask.mask)
    xs, ys = part.pixel_centers()
    acc = 0.0
    for packet in packets:
        star = packet.tube.star(R, delta)
        bb = star.bounding_box()
        ix = np.nonzero((xs >= bb.xmin) & (xs <= bb.xmax))[0]
        iy = np.nonzero((ys >= bb.ymin) & (ys <= bb.ymax))[0]
        if ix.size == 0 or iy.size == 0:
            continue
        X, Y = np.meshgrid(xs[ix], ys[iy])
        window = pruned[iy[0]:iy[-1] + 1, ix[0]:ix[-1] + 1]
        met = np.unique(window[star.contains(X, Y)])
        acc += int(np.sum(met > 0)) * packet.norm**2
    return acc / f_norm**2


def _class_integrals(cls: TubeClass, packets: list[WavePacket], template: Field, wall_mask: WallMask,
                     ball: Ball, p: float) -> tuple:
    """(int_{W cap Q cap B} |sum_{T in class} f_T|^p, ||sum f_T||_{L^2(Q cap B)})."""
    g = reconstruct([packets[i] for i in sorted(cls.members)], template, cls.cube.box())
    x, y = g.coords()
    inside = cls.cube.contains(x, y) & ball.contains(x, y)
    density = _density(g, p)
    term = float(density[inside & wall_mask.contains(x, y)].sum())
    l2 = float(np.sqrt(np.sum(np.abs(g.samples[inside]) ** 2)) * g.spacing)
    return term, l2


def compute_tang_tran(config: RunConfig, f: Field, part: Partition, R: Optional[float] = None,
                      tiles: Optional[list[FreqRect]] = None, root: Optional[Cube] = None) -> TangTranRecord:
    """Decompose f, split its packets by the wall of part and integrate every class over W cap Q cap B."""
    started = time.perf_counter()
    R = float(R if R is not None else config.n_values[0])
    d, p, delta = config.d, config.p, config.delta
    D = part.polynomial.degree
    tiles = tiles if tiles is not None else build_frequency_tiles(CurveParams(d, int(R)))
    root = root or root_cube(R, d)
    ball = Ball(root.center, R**d)
    wall_mask = wall(part, R ** (1 + delta))

    packets = decompose(f, tiles, ball.bounding_box())
    if not packets:
        raise ConfigError("Zero field: nothing to split")
    sources = {}
    for packet in packets:
        sources.setdefault(id(packet.source), packet.source)
    F = Field.zeros(f.origin, f.spacing, f.shape, f.carrier)
    for source in sources.values():
        F.samples += source.samples

    split = tang_tran_split([pk.tube for pk in packets], part.polynomial, wall_mask, R, d, delta,
                            config.delta_ceiling_shift, root)
    cells = cell_wall_split(F, part, wall_mask, ball, p)
    x, y = F.coords()
    total = float(_density(F, p)[ball.contains(x, y)].sum())
    cell_term = float(sum(cells["cells"].values()) + cells["unassigned"])

    jobs = [("tang", scale, c) for scale, classes in split.tang.items() for c in classes]
    jobs += [("tran", scale, c) for scale, classes in split.tran.items() for c in classes]
    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
        results = list(pool.map(lambda job: _class_integrals(job[2], packets, f, wall_mask, ball, p), jobs))

    tang_terms = {scale: 0.0 for scale in split.tang}
    tran_terms = {scale: 0.0 for scale in split.tran}
    class_terms, interpolation = [], []
    for (kind, scale, cls), (term, l2) in zip(jobs, results):
        (tang_terms if kind == "tang" else tran_terms)[scale] += term
        class_terms.append({"kind": kind, "scale": scale, "cube": [cls.cube.x0, cls.cube.y0, cls.cube.side],
                            "tubes": len(cls.members), "term": term})
        if kind == "tran":
            bound = math.sqrt(D) * (scale / R) ** (0.5 - 3 / p) * R ** (-0.5 + delta) * l2
            interpolation.append({"scale": scale, "cube": [cls.cube.x0, cls.cube.y0, cls.cube.side],
                                  "lhs": term ** (1 / p), "rhs": bound})

    parts_sum = cell_term + sum(tang_terms.values()) + sum(tran_terms.values())
    residual = total - parts_sum
    f_norm = f.l2_norm()
    bound = D * R ** (-d / 2 + 3 * delta) * f_norm
    thresholds = {"p >= 2(d+1)": 2 * (d + 1), "p >= 2(d+2)": 2 * (d + 2)}
    prop_wall = {"lhs": cells["wall"] ** (1 / p), "rhs": bound, "thresholds": thresholds,
                 "p_admissible": {k: p >= v for k, v in thresholds.items()}}
    alg = sum(tang_terms.values()) + sum(tran_terms.values())
    prop_alg = {"lhs": alg ** (1 / p), "rhs": bound, "thresholds": thresholds,
                "p_admissible": {k: p >= v for k, v in thresholds.items()}}

    record = TangTranRecord(
        R=R, d=d, p=p, degree=D, delta=delta,
        total=total,
        cell_term=cell_term,
        wall_term=cells["wall"],
        tang_terms=tang_terms,
        tran_terms=tran_terms,
        residual=residual,
        relative_residual=abs(residual) / total if total > 0 else 0.0,
        cells=cells,
        orthogonality=orthogonality_ratio(packets, part, wall_mask, R, delta, f_norm),
        prop_wall=prop_wall,
        prop_alg=prop_alg,
        interpolation=interpolation,
        split=split,
        n_packets=len(packets),
        wall_clock=time.perf_counter() - started,
        class_terms=class_terms,
    )
    logger.info(f"Tang/Tran at R={R:g}: total {total:.4g}, cell {cell_term:.4g}, "
                f"tang {sum(tang_terms.values()):.4g}, tran {sum(tran_terms.values()):.4g}, "
                f"relative residual {record.relative_residual:.3g}")
    return record


def _pow2_floor(value: float) -> float:
    return 2.0 ** math.floor(math.log2(value))


def experiment_field(config: RunConfig, R: int, tiles: list[FreqRect], root: Cube) -> Field:
    """Random band-limited field over the chosen tiles on a grid covering root and resolving 2*omega."""
    carrier = tiles_carrier(tiles)
    reach = max(float(np.max(np.abs(omega.corners(2) - np.asarray(carrier)))) for omega in tiles)
    spacing = float(config.extra.get("spacing", _pow2_floor(1 / (4 * reach))))
    side = max(root.side, 2.0 ** math.ceil(math.log2(8 / (2 * min(t.short for t in tiles)) - 1e-9)))
    n = int(round(side / spacing))
    needed = 16 * n * n * (len(tiles) + 3)
    if needed > config.memory_budget_bytes:
        raise BudgetError(f"Field grid {n}x{n} needs {needed / 2**20:.0f} MB, over the "
                          f"{config.memory_budget_mb} MB budget", largest_feasible=None)
    cx, cy = root.center
    origin = (cx - side / 2, cy - side / 2)
    return random_band_limited(tiles, origin, spacing, (n, n), seed=config.seed, carrier=carrier)


def run_tang_tran(config: RunConfig) -> TangTranRecord:
    """Random field, partition of its |f|^p mass at degree config.degree, then the split."""
    R = int(config.n_values[0])
    params = CurveParams(config.d, R)
    all_tiles = build_frequency_tiles(params)
    chosen = [int(j) for j in config.extra.get("tiles", [1])]
    if any(j < 1 or j > R for j in chosen):
        raise ConfigError(f"Tile indices must lie in 1..{R} (got {chosen})")
    tiles = [all_tiles[j - 1] for j in chosen]
    root = root_cube(R, config.d)
    f = experiment_field(config, R, tiles, root)
    mass = MassDistribution.from_field(f, config.p, domain=root.box())
    part = partition(mass, config.degree, root.box(), seed=config.seed, grid=config.partition_grid,
                     threads=config.threads)
    return compute_tang_tran(config, f, part, R, tiles, root)
