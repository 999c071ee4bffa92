"""
Polynomial partitioning in the plane.

Each level bisects every current cell at once with one factor polynomial of
the smallest degree whose monomial space can do it. Every factor is nudged off
singularity on its own and P is their product. Cells are the connected
components of one sign pattern of the factors on a raster, which are the
connected components of {P != 0}; a level is kept only if all nonempty cells
stay within a factor 2 of the median cell mass.
"""
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import ndimage, optimize, signal

from .config import SETTINGS, BisectionError, ConfigError, GeometryError
from .fields import Field
from .geometry import Box

logger = logging.getLogger(__name__)


def monomials(degree: int) -> list[tuple]:
    return [(a, t - a) for t in range(degree + 1) for a in range(t, -1, -1)]


def min_degree_for(masses: int) -> int:
    k = 1
    while (k + 1) * (k + 2) // 2 - 1 < masses:
        k += 1
    return k


@dataclass
class Polynomial2:
    """sum c[a, b] X^a Y^b with X = (x - cx)/scale, Y = (y - cy)/scale."""

    degree: int
    coefficients: np.ndarray
    center: tuple = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        c = np.zeros((self.degree + 1, self.degree + 1))
        given = np.asarray(self.coefficients, dtype=float)
        rows, cols = min(given.shape[0], self.degree + 1), min(given.shape[1], self.degree + 1)
        c[:rows, :cols] = given[:rows, :cols]
        if np.any(given[np.add.outer(np.arange(given.shape[0]), np.arange(given.shape[1])) > self.degree]):
            raise GeometryError(f"Coefficients exceed degree {self.degree}")
        a, b = np.indices(c.shape)
        c[a + b > self.degree] = 0.0
        norm = np.linalg.norm(c)
        self.coefficients = c / norm if norm > 0 else c
        self.center = (float(self.center[0]), float(self.center[1]))
        self.scale = float(self.scale)

    @classmethod
    def from_terms(cls, terms: dict, center=(0.0, 0.0), scale: float = 1.0) -> "Polynomial2":
        degree = max(a + b for a, b in terms)
        c = np.zeros((degree + 1, degree + 1))
        for (a, b), value in terms.items():
            c[a, b] = value
        return cls(degree, c, center, scale)

    @classmethod
    def from_vector(cls, degree: int, vector, center=(0.0, 0.0), scale: float = 1.0) -> "Polynomial2":
        c = np.zeros((degree + 1, degree + 1))
        for (a, b), value in zip(monomials(degree), vector):
            c[a, b] = value
        return cls(degree, c, center, scale)

    @classmethod
    def random(cls, degree: int, rng: np.random.Generator, center=(0.0, 0.0), scale: float = 1.0) -> "Polynomial2":
        return cls.from_vector(degree, rng.standard_normal(len(monomials(degree))), center, scale)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    def vector(self) -> np.ndarray:
        return np.array([self.coefficients[a, b] for a, b in monomials(self.degree)])

    def _scaled(self, x, y):
        return ((np.asarray(x, dtype=float) - self.center[0]) / self.scale,
                (np.asarray(y, dtype=float) - self.center[1]) / self.scale)

    def __call__(self, x, y) -> np.ndarray:
        X, Y = self._scaled(x, y)
        return npoly.polyval2d(X, Y, self.coefficients)

    evaluate = __call__

    def gradient(self, x, y):
        X, Y = self._scaled(x, y)
        gx = npoly.polyval2d(X, Y, npoly.polyder(self.coefficients, axis=0)) / self.scale
        gy = npoly.polyval2d(X, Y, npoly.polyder(self.coefficients, axis=1)) / self.scale
        return gx, gy

    def _check_frame(self, other: "Polynomial2"):
        if not (np.allclose(self.center, other.center) and math.isclose(self.scale, other.scale)):
            raise GeometryError("Polynomials live in different coordinate frames")

    def product(self, other: "Polynomial2") -> "Polynomial2":
        self._check_frame(other)
        return Polynomial2(self.degree + other.degree,
                           signal.convolve2d(self.coefficients, other.coefficients),
                           self.center, self.scale)

    def plus(self, other: "Polynomial2", weight: float = 1.0) -> "Polynomial2":
        """self + weight * other, renormalized."""
        self._check_frame(other)
        degree = max(self.degree, other.degree)
        c = np.zeros((degree + 1, degree + 1))
        c[: self.degree + 1, : self.degree + 1] += self.coefficients
        c[: other.degree + 1, : other.degree + 1] += weight * other.coefficients
        return Polynomial2(degree, c, self.center, self.scale)

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "center": list(self.center),
            "scale": self.scale,
            "terms": [[a, b, float(self.coefficients[a, b])] for a, b in monomials(self.degree)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Polynomial2":
        degree = int(data["degree"])
        c = np.zeros((degree + 1, degree + 1))
        for a, b, value in data["terms"]:
            c[int(a), int(b)] = float(value)
        return cls(degree, c, tuple(data.get("center", (0.0, 0.0))), float(data.get("scale", 1.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class MassDistribution:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.points.shape[0]:
            raise ConfigError("Mass distribution needs one weight per point")
        if np.any(self.weights < 0):
            raise ConfigError("Mass weights must be nonnegative")

    @classmethod
    def uniform_points(cls, points) -> "MassDistribution":
        points = np.asarray(points, dtype=float)
        return cls(points, np.ones(len(points)))

    @classmethod
    def uniform_grid(cls, box: Box, per_axis: int) -> "MassDistribution":
        hx = (box.xmax - box.xmin) / per_axis
        hy = (box.ymax - box.ymin) / per_axis
        xs = box.xmin + hx * (np.arange(per_axis) + 0.5)
        ys = box.ymin + hy * (np.arange(per_axis) + 0.5)
        X, Y = np.meshgrid(xs, ys)
        return cls(np.column_stack([X.ravel(), Y.ravel()]), np.full(X.size, hx * hy))

    @classmethod
    def from_field(cls, f: Field, p: float = 2.0, domain: Optional[Box] = None) -> "MassDistribution":
        """Grid points weighted by |f|^p h^2."""
        x, y = f.coords()
        weights = np.abs(f.samples) ** p * f.spacing**2
        keep = np.ones(f.shape, dtype=bool) if domain is None else domain.contains(x, y)
        keep &= weights > 0
        return cls(np.column_stack([x[keep], y[keep]]), weights[keep])

    @classmethod
    def from_csv(cls, path) -> "MassDistribution":
        """Rows of `x,y` or `x,y,weight`; a non-numeric first row is a header."""
        try:
            with Path(path).open(newline="") as handle:
                rows = [row for row in csv.reader(handle) if row]
        except OSError as e:
            raise ConfigError(f"Could not read points from {path}: {e}") from e
        points, weights = [], []
        for i, row in enumerate(rows):
            try:
                values = [float(v) for v in row[:3]]
            except ValueError:
                if i == 0:
                    continue
                raise ConfigError(f"Row {i + 1} of {path} is not numeric: {row}") from None
            if len(values) < 2:
                raise ConfigError(f"Row {i + 1} of {path} needs at least x and y")
            points.append(values[:2])
            weights.append(values[2] if len(values) > 2 else 1.0)
        if not points:
            raise ConfigError(f"{path} holds no points")
        return cls(np.array(points), np.array(weights))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def subset(self, mask) -> "MassDistribution":
        return MassDistribution(self.points[mask], self.weights[mask])

    def bounding_box(self) -> Box:
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return Box(lo[0], hi[0], lo[1], hi[1])


def imbalance(P: Polynomial2, mass: MassDistribution) -> float:
    """|mu(P > 0) - mu(P < 0)| / mu; points on Z(P) count for neither side."""
    if mass.total == 0:
        return 0.0
    signs = np.sign(P(mass.points[:, 0], mass.points[:, 1]))
    return float(abs(np.dot(signs, mass.weights)) / mass.total)


def _design(mass: MassDistribution, degree: int, center, scale) -> np.ndarray:
    X = (mass.points[:, 0] - center[0]) / scale
    Y = (mass.points[:, 1] - center[1]) / scale
    return np.column_stack([X**a * Y**b for a, b in monomials(degree)])


def _frame_for(masses: list[MassDistribution]):
    pts = np.vstack([m.points for m in masses])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = tuple((lo + hi) / 2)
    scale = float(max(hi - lo) / 2) or 1.0
    return center, scale


def _bisect_from(start: int, seed: int, designs, weights, n_coeffs: int, tolerance: float):
    """One multi-start run: annealed smooth split, then a direct-search polish on the hard objective."""
    rng = np.random.default_rng([seed, start])
    c = rng.standard_normal(n_coeffs)
    c /= np.linalg.norm(c)
    totals = [w.sum() for w in weights]

    def hard(vec):
        vec = vec / (np.linalg.norm(vec) or 1.0)
        return max(abs(np.dot(np.sign(V @ vec), w)) / t for V, w, t in zip(designs, weights, totals))

    # The signed split map is odd in c, so the residual vector below has a zero on the sphere.
    for fraction in (0.3, 0.1, 0.03, 0.01):
        values = np.concatenate([np.abs(V @ c) for V in designs])
        tau = fraction * (np.median(values) or 1.0)

        def residuals(vec, tau=tau):
            unit = vec / (np.linalg.norm(vec) or 1.0)
            split = [np.dot(np.tanh((V @ unit) / tau), w) / t for V, w, t in zip(designs, weights, totals)]
            return np.append(split, 0.1 * (np.dot(vec, vec) - 1.0))

        c = optimize.least_squares(residuals, c, max_nfev=200 * n_coeffs).x
        c /= np.linalg.norm(c) or 1.0
        if hard(c) <= tolerance:
            return hard(c), c
    polished = optimize.minimize(hard, c, method="Nelder-Mead",
                                 options={"maxiter": 400 * n_coeffs, "xatol": 1e-10, "fatol": 1e-9})
    best = polished.x if polished.fun < hard(c) else c
    return hard(best), best / (np.linalg.norm(best) or 1.0)


def bisect(masses: list[MassDistribution], degree_budget: int, seed: int = 0,
           tolerance: Optional[float] = None, restarts: Optional[int] = None,
           center=None, scale: Optional[float] = None, threads: int = 1,
           accept: Optional[Callable[[Polynomial2], bool]] = None) -> Polynomial2:
    """
    A polynomial of degree <= degree_budget whose sign splits every mass within tolerance.

    `accept` is an extra test on candidates already within tolerance; rejected
    candidates are skipped and the search moves on to the next start.
    """
    tolerance = SETTINGS.bisect_tolerance if tolerance is None else tolerance
    restarts = SETTINGS.max_restarts if restarts is None else restarts
    k = degree_budget
    if (k + 1) * (k + 2) // 2 - 1 < len(masses):
        raise ConfigError(
            f"Degree {k} polynomials cannot bisect {len(masses)} masses: need (k+1)(k+2)/2 - 1 >= m"
        )
    if any(m.total <= 0 for m in masses):
        raise ConfigError("Every mass to bisect must be positive")
    if center is None or scale is None:
        center, scale = _frame_for(masses)
    designs = [_design(m, k, center, scale) for m in masses]
    weights = [m.weights for m in masses]
    n_coeffs = designs[0].shape[1]

    best_imbalance, rejected = math.inf, 0
    batch = max(1, threads)
    with ThreadPoolExecutor(max_workers=batch) as pool:
        for first in range(0, restarts, batch):
            starts = range(first, min(restarts, first + batch))
            results = list(pool.map(lambda s: _bisect_from(s, seed, designs, weights, n_coeffs, tolerance), starts))
            for value, vec in results:
                best_imbalance = min(best_imbalance, value)
                if value > tolerance:
                    continue
                # first success in start order wins, so the result does not depend on the batch size
                candidate = Polynomial2.from_vector(k, vec, center, scale)
                if accept is None or accept(candidate):
                    logger.info(f"Bisected {len(masses)} masses at degree {k} (imbalance {value:.4f})")
                    return candidate
                rejected += 1
    if rejected:
        raise BisectionError(f"All {rejected} degree-{k} bisectors of {len(masses)} masses within {tolerance} "
                             f"left unbalanced cells", best_imbalance)
    raise BisectionError(f"No degree-{k} bisector of {len(masses)} masses within {tolerance}", best_imbalance)


@dataclass
class Partition:
    polynomial: Polynomial2
    factors: list
    domain: Box
    labels: np.ndarray
    n_cells: int
    codes: Optional[np.ndarray] = None
    mass: Optional[MassDistribution] = None
    point_cells: Optional[np.ndarray] = None
    point_classes: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    @property
    def grid(self) -> int:
        return self.labels.shape[0]

    @property
    def steps(self) -> tuple:
        ny, nx = self.labels.shape
        return ((self.domain.xmax - self.domain.xmin) / nx, (self.domain.ymax - self.domain.ymin) / ny)

    def pixel_centers(self):
        hx, hy = self.steps
        ny, nx = self.labels.shape
        xs = self.domain.xmin + hx * (np.arange(nx) + 0.5)
        ys = self.domain.ymin + hy * (np.arange(ny) + 0.5)
        return xs, ys

    def pixel_index(self, x, y):
        hx, hy = self.steps
        ny, nx = self.labels.shape
        ix = np.floor((np.asarray(x, dtype=float) - self.domain.xmin) / hx).astype(int)
        iy = np.floor((np.asarray(y, dtype=float) - self.domain.ymin) / hy).astype(int)
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        return np.clip(ix, 0, nx - 1), np.clip(iy, 0, ny - 1), inside

    def on_zero_set(self, x, y) -> np.ndarray:
        """True where some factor vanishes exactly."""
        hit = np.zeros(np.shape(x), dtype=bool)
        for factor in self.factors:
            hit |= factor(x, y) == 0
        return hit

    def cell_of(self, x, y) -> np.ndarray:
        """Cell label for each point; -1 on Z(P) or outside the domain."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        ix, iy, inside = self.pixel_index(x, y)
        want = sign_pattern(self.factors, x, y)
        free = inside & ~self.on_zero_set(x, y)
        out = np.full(x.shape, -1, dtype=int)
        ny, nx = self.labels.shape
        # a point near a boundary may sit in a pixel of the neighbouring cell
        for dx, dy in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)):
            jx = np.clip(ix + dx, 0, nx - 1)
            jy = np.clip(iy + dy, 0, ny - 1)
            lab = self.labels[jy, jx]
            ok = (out < 0) & free & (lab > 0) & (self.codes[lab] == want)
            out[ok] = lab[ok]
        return out

    def cell_masses(self, exclude: Optional[np.ndarray] = None) -> dict:
        """Mass per cell label; `exclude` is a pixel mask (the wall) whose points are dropped."""
        if self.mass is None:
            return {}
        cells = self.point_cells
        keep = cells > 0
        if exclude is not None:
            ix, iy, _ = self.pixel_index(self.mass.points[:, 0], self.mass.points[:, 1])
            keep &= ~exclude[iy, ix]
        totals = np.bincount(cells[keep], weights=self.mass.weights[keep], minlength=self.n_cells + 1)
        return {int(lab): float(totals[lab]) for lab in range(1, self.n_cells + 1) if totals[lab] > 0}

    def class_masses(self) -> dict:
        """Mass per sign pattern of the factors."""
        if self.mass is None or self.point_classes is None:
            return {}
        keep = self.point_cells >= 0
        totals: dict = {}
        for cls, w in zip(self.point_classes[keep], self.mass.weights[keep]):
            totals[int(cls)] = totals.get(int(cls), 0.0) + float(w)
        return dict(sorted(totals.items()))

    def wall_mass(self) -> float:
        if self.mass is None:
            return 0.0
        return float(self.mass.weights[self.point_cells < 0].sum())

    def pruned_labels(self, wall_mask: np.ndarray) -> np.ndarray:
        """O'_j = O_j minus W as a label raster."""
        pruned = self.labels.copy()
        pruned[wall_mask] = 0
        return pruned


def sign_pattern(factors: list[Polynomial2], x, y) -> np.ndarray:
    """Integer code of the sign vector (factor_i > 0) for each point."""
    code = np.zeros(np.shape(x), dtype=np.int64)
    for i, factor in enumerate(factors):
        code |= (factor(x, y) > 0).astype(np.int64) << i
    return code


def _pixel_grid(domain: Box, grid: int):
    hx = (domain.xmax - domain.xmin) / grid
    hy = (domain.ymax - domain.ymin) / grid
    xs = domain.xmin + hx * (np.arange(grid) + 0.5)
    ys = domain.ymin + hy * (np.arange(grid) + 0.5)
    return np.meshgrid(xs, ys)


def label_cells(factors: list[Polynomial2], domain: Box, grid: int):
    """
    Connected components (4-neighbour) of the pixels sharing one sign pattern of the factors.

    Returns the label raster (0 on pixels where a factor vanishes) and the sign
    pattern code of every label, with codes[0] = -1. Labelling by pattern keeps
    two cells apart where the zero sets of different factors cross.
    """
    X, Y = _pixel_grid(domain, grid)
    codes = sign_pattern(factors, X, Y)
    zero = np.zeros(X.shape, dtype=bool)
    for factor in factors:
        zero |= factor(X, Y) == 0
    labels = np.zeros(X.shape, dtype=np.int32)
    label_codes = [-1]
    for code in np.unique(codes[~zero]):
        components, n = ndimage.label((codes == code) & ~zero)
        labels[components > 0] = components[components > 0] + len(label_codes) - 1
        label_codes.extend([int(code)] * n)
    return labels, np.array(label_codes, dtype=np.int64)


def crossing_gradients(P: Polynomial2, domain: Box, grid: int):
    """(min |grad P| at interpolated zero crossings on grid edges, max |grad P| on the grid)."""
    xs = np.linspace(domain.xmin, domain.xmax, grid)
    ys = np.linspace(domain.ymin, domain.ymax, grid)
    X, Y = np.meshgrid(xs, ys)
    values = P(X, Y)
    gx, gy = P.gradient(X, Y)
    top = float(np.max(np.hypot(gx, gy)))
    points = edge_crossings(values, xs, ys)
    if points.size == 0:
        return math.inf, top
    cx, cy = P.gradient(points[:, 0], points[:, 1])
    return float(np.min(np.hypot(cx, cy))), top


def edge_crossings(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Linear-interpolated zero crossings on horizontal and vertical grid edges."""
    found = []
    a, b = values[:, :-1], values[:, 1:]
    iy, ix = np.nonzero(np.sign(a) * np.sign(b) < 0)
    t = a[iy, ix] / (a[iy, ix] - b[iy, ix])
    found.append(np.column_stack([xs[ix] + t * (xs[ix + 1] - xs[ix]), ys[iy]]))
    a, b = values[:-1, :], values[1:, :]
    iy, ix = np.nonzero(np.sign(a) * np.sign(b) < 0)
    t = a[iy, ix] / (a[iy, ix] - b[iy, ix])
    found.append(np.column_stack([xs[ix], ys[iy] + t * (ys[iy + 1] - ys[iy])]))
    return np.vstack(found)


def perturb(P: Polynomial2, D: int, domain: Box, grid: int, rng: np.random.Generator,
            fraction: Optional[float] = None):
    """P + eps Q with eps doubled from 1e-9 until every zero crossing clears the gradient threshold."""
    fraction = SETTINGS.singular_fraction if fraction is None else fraction
    Q = Polynomial2.random(D, rng, P.center, P.scale)
    eps = 1e-9
    for _ in range(41):
        candidate = P.plus(Q, eps)
        low, top = crossing_gradients(candidate, domain, min(grid, 512))
        if low >= fraction * top:
            return candidate, eps
        eps *= 2
    logger.warning(f"Perturbation did not clear the singular threshold (last eps {eps / 2:.3g})")
    return candidate, eps / 2


def product_of(factors: list[Polynomial2]) -> Polynomial2:
    product = factors[0]
    for factor in factors[1:]:
        product = product.product(factor)
    return product


def _arrange(factors: list[Polynomial2], domain: Box, grid: int,
             mass: Optional[MassDistribution] = None, P: Optional[Polynomial2] = None) -> Partition:
    labels, codes = label_cells(factors, domain, grid)
    part = Partition(P or product_of(factors), list(factors), domain, labels, len(codes) - 1, codes)
    if mass is not None:
        part.mass = mass
        part.point_cells = part.cell_of(mass.points[:, 0], mass.points[:, 1])
        part.point_classes = sign_pattern(part.factors, mass.points[:, 0], mass.points[:, 1])
    return part


def partition_from_polynomial(P: Polynomial2, domain: Box, grid: Optional[int] = None,
                              mass: Optional[MassDistribution] = None, factors=None) -> Partition:
    grid = grid or SETTINGS.partition_grid
    part = _arrange(list(factors or [P]), domain, grid, mass, P)
    sizes = np.bincount(part.labels.ravel(), minlength=part.n_cells + 1)[1:]
    thin = int(np.sum(sizes < 4))
    if thin:
        part.warnings.append(f"{thin} cells thinner than 2 grid steps")
        logger.warning(f"{thin} cells are below raster resolution on a {grid}^2 grid")
    return part


def partition(mass: MassDistribution, D: int, domain: Box, seed: int = 0, grid: Optional[int] = None,
              tolerance: Optional[float] = None, restarts: Optional[int] = None, threads: int = 1) -> Partition:
    """
    Iterated simultaneous bisection of the current cells up to total degree D.

    Each factor is nudged off singularity on its own, so the zero sets of
    different factors still cross in the product. A bisector is kept only if the
    connected cells it leaves all hold masses within a factor 2 of their median.
    """
    if D < 1:
        raise ConfigError(f"Partition degree must be >= 1 (got {D})")
    if mass.total <= 0:
        raise ConfigError("Mass distribution is empty")
    grid = grid or SETTINGS.partition_grid
    center, scale = domain.center, max(domain.xmax - domain.xmin, domain.ymax - domain.ymin) / 2
    parts = [mass]
    factors: list[Polynomial2] = []
    total_degree = 0
    while True:
        k = min_degree_for(len(parts))
        if total_degree + k > D:
            break
        level = len(factors)

        def nudged(candidate: Polynomial2, level=level) -> Polynomial2:
            rng = np.random.default_rng([seed, level])
            return perturb(candidate, candidate.degree, domain, grid, rng)[0]

        def keeps_balance(candidate: Polynomial2, done=tuple(factors)) -> bool:
            return check_balance(_arrange([*done, nudged(candidate)], domain, grid, mass))

        # the minimal degree first; a higher one only if it fails and the budget allows it
        for budget in range(k, D - total_degree + 1):
            try:
                factor = bisect(parts, budget, seed=seed * 1000 + level, tolerance=tolerance, restarts=restarts,
                                center=center, scale=scale, threads=threads, accept=keeps_balance)
                break
            except BisectionError as e:
                if budget == D - total_degree:
                    raise
                logger.warning(f"Level {level + 1}: {e}; retrying at degree {budget + 1}")
        k = factor.degree
        factors.append(nudged(factor))
        total_degree += k
        current = _arrange(factors, domain, grid, mass)
        parts = [mass.subset(current.point_cells == lab) for lab in current.cell_masses()]
        logger.info(f"Level {len(factors)}: degree {k}, {len(parts)} cells, total degree {total_degree}")

    return partition_from_polynomial(product_of(factors), domain, grid, mass, factors)


def check_balance(part: Partition, factor: float = 2.0) -> bool:
    """Every nonempty connected cell holds a mass within `factor` of the median cell mass."""
    masses = list(part.cell_masses().values())
    if not masses:
        return False
    median = float(np.median(masses))
    return all(median / factor <= m <= median * factor for m in masses)


@dataclass
class WallMask:
    mask: np.ndarray
    box: Box

    @property
    def area(self) -> float:
        ny, nx = self.mask.shape
        return float(self.mask.sum() * self.box.area / (nx * ny))

    def contains(self, x, y) -> np.ndarray:
        ny, nx = self.mask.shape
        hx = (self.box.xmax - self.box.xmin) / nx
        hy = (self.box.ymax - self.box.ymin) / ny
        ix = np.floor((np.asarray(x, dtype=float) - self.box.xmin) / hx).astype(int)
        iy = np.floor((np.asarray(y, dtype=float) - self.box.ymin) / hy).astype(int)
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.zeros(np.shape(ix), dtype=bool)
        out[inside] = self.mask[iy[inside], ix[inside]]
        return out


def zero_pixels(values: np.ndarray) -> np.ndarray:
    """Positive pixels with a negative 4-neighbour, plus exact zeros."""
    pos, neg = values > 0, values < 0
    near_neg = np.zeros_like(neg)
    near_neg[1:, :] |= neg[:-1, :]
    near_neg[:-1, :] |= neg[1:, :]
    near_neg[:, 1:] |= neg[:, :-1]
    near_neg[:, :-1] |= neg[:, 1:]
    return (pos & near_neg) | (values == 0)


def wall(part: Partition, rho: float) -> WallMask:
    """Pixels within distance rho of Z(P) (Euclidean distance transform from the sign-change pixels)."""
    if rho <= 0:
        raise GeometryError(f"Wall radius must be positive (got {rho})")
    xs, ys = part.pixel_centers()
    X, Y = np.meshgrid(xs, ys)
    seeds = zero_pixels(part.polynomial(X, Y))
    if not seeds.any():
        return WallMask(np.zeros(part.labels.shape, dtype=bool), part.domain)
    hx, hy = part.steps
    distance = ndimage.distance_transform_edt(~seeds, sampling=(hy, hx))
    return WallMask(distance <= rho, part.domain)


def tube_cell_incidence(part: Partition, tube) -> int:
    """Distinct cells met by the tube's central axis."""
    hx, hy = part.steps
    axis = tube.axis_points(min(hx, hy) / 4)
    inside = part.domain.contains(axis[:, 0], axis[:, 1])
    if not inside.any():
        return 0
    codes = sign_pattern(part.factors, axis[:, 0], axis[:, 1])
    # samples on Z(P) or outside the domain separate runs
    free = inside & ~part.on_zero_set(axis[:, 0], axis[:, 1])
    breaks = np.nonzero((codes[1:] != codes[:-1]) | (free[1:] != free[:-1]))[0] + 1
    seen = set()
    for run in np.split(np.arange(len(axis)), breaks):
        if not free[run[0]]:
            continue
        mid = run[run.size // 2]
        label = int(part.cell_of(axis[mid, 0], axis[mid, 1])[0])
        if label > 0:
            seen.add(label)
    return len(seen)
