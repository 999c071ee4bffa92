"""
L^p norms of sampled fields, exact torus mean values of
    S(x) = sum_{n=1}^N a_n e(x1 n + x2 n^d),
the counting oracle J_{s,d}(N), and log-log exponent fits.
"""
import csv
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import fft as sfft

from .config import SETTINGS, BudgetError, ConfigError, GeometryError
from .fields import Field
from .geometry import Ball, Box

logger = logging.getLogger(__name__)

COUNT_BUDGET = 50_000_000
MAX_ROW_BLOCK = 32


def lp_norm(f: Field, p: float, domain: Union[Box, Ball, None] = None) -> float:
    """(sum |f(x)|^p h^2)^(1/p) over grid points inside domain."""
    if p < 1:
        raise ConfigError(f"p must be >= 1 (got {p})")
    x, y = f.coords()
    mask = np.ones(f.shape, dtype=bool) if domain is None else domain.contains(x, y)
    if not mask.any():
        raise GeometryError("Domain does not meet the field's grid")
    values = np.abs(f.samples[mask])
    scale = values.max()
    if scale == 0:
        return 0.0
    # factor out the max to keep |f|^p finite for large p
    return float(scale * (np.sum((values / scale) ** p) * f.spacing**2) ** (1.0 / p))


@dataclass
class MeanValueProblem:
    N: int
    d: int
    s: int
    coefficients: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"N must be >= 1 (got {self.N})")
        if self.s < 1:
            raise ConfigError(f"s must be >= 1 (got {self.s})")
        if int(self.d) != self.d or self.d < 3:
            raise ConfigError(f"Torus mean values need an integer d >= 3 (got {self.d})")
        self.d = int(self.d)
        if self.coefficients is None:
            self.coefficients = np.ones(self.N, dtype=complex)
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.shape != (self.N,):
            raise ConfigError(f"Expected {self.N} coefficients, got {self.coefficients.shape}")

    @classmethod
    def for_exponent(cls, N: int, d: int, p: float, coefficients=None) -> "MeanValueProblem":
        if int(p) != p or int(p) % 2:
            raise ConfigError(f"Torus mean values are exact only for even p (got p={p:g})")
        return cls(N, d, int(p) // 2, coefficients)

    @property
    def p(self) -> int:
        return 2 * self.s

    def exact_grid(self) -> tuple:
        return (2 * self.s * self.N + 1, 2 * self.s * self.N**self.d + 1)


def exp_sum_lp_torus(prob: MeanValueProblem, grid: Optional[tuple] = None,
                     budget_bytes: Optional[int] = None) -> float:
    """||S||_{L^2s(T^2)}^{2s}, exact by sampling |S|^{2s} on a grid past its degree."""
    m1, m2 = grid or prob.exact_grid()
    exact = prob.exact_grid()
    if m1 < exact[0] or m2 < exact[1]:
        raise ConfigError(f"Grid {m1}x{m2} is below the exact quadrature size {exact[0]}x{exact[1]}")
    budget = budget_bytes if budget_bytes is not None else SETTINGS.memory_budget_mb * 1024 * 1024
    row_bytes = 16 * m2
    if 4 * row_bytes > budget:
        raise BudgetError(f"Torus grid row of {m2} points exceeds the memory budget", largest_feasible=None)
    rows_per_block = max(1, min(m1, MAX_ROW_BLOCK, budget // (4 * row_bytes)))

    n = np.arange(1, prob.N + 1)
    slots = np.array([pow(int(k), prob.d, m2) for k in n])
    total = 0.0
    for start in range(0, m1, rows_per_block):
        j = np.arange(start, min(m1, start + rows_per_block))
        block = np.zeros((j.size, m2), dtype=complex)
        # S(j/m1, k/m2) = sum_n a_n e(j n/m1) e(k n^d/m2): scatter then one inverse FFT per row
        phases = prob.coefficients[None, :] * np.exp(2j * np.pi * np.outer(j, n) / m1)
        np.add.at(block, (slice(None), slots), phases)
        values = sfft.ifft(block, axis=1) * m2
        total += float(np.sum(np.abs(values) ** (2 * prob.s)))
    result = total / (m1 * m2)
    logger.info(f"Mean value N={prob.N}, d={prob.d}, s={prob.s} on {m1}x{m2} grid: {result:.6g}")
    return result


def vinogradov_count(N: int, s: int, d: int, budget: int = COUNT_BUDGET, coefficients=None):
    """
    #{(n, m) in [1, N]^{2s}: sum n_i = sum m_i, sum n_i^d = sum m_i^d}, meet in the middle.

    With coefficients a_n each pair counts prod a_{n_i} conj(a_{m_i}), which is
    the same ||S||_{2s}^{2s} the torus quadrature computes.
    """
    if int(d) != d:
        raise ConfigError(f"Counting needs an integer d (got {d})")
    if N**s > budget:
        largest = 1
        while (largest + 1) ** s <= budget:
            largest += 1
        raise BudgetError(f"N^s = {N**s} tuples exceeds the enumeration budget {budget}", largest_feasible=largest)
    d = int(d)
    powers = [k**d for k in range(N + 1)]
    tuples = itertools.product(range(1, N + 1), repeat=s)
    if coefficients is None:
        classes = Counter((sum(t), sum(powers[k] for k in t)) for t in tuples)
        return sum(c * c for c in classes.values())
    a = np.asarray(coefficients, dtype=complex)
    if a.shape != (N,):
        raise ConfigError(f"Expected {N} coefficients, got {a.shape}")
    weights: dict = {}
    for t in tuples:
        key = (sum(t), sum(powers[k] for k in t))
        weights[key] = weights.get(key, 0.0) + complex(np.prod(a[[k - 1 for k in t]]))
    return float(sum(abs(w) ** 2 for w in weights.values()))


def read_coefficients(path, N: int) -> np.ndarray:
    """a_1..a_N from a CSV of `re` or `re,im` rows; a non-numeric first row is a header."""
    try:
        with Path(path).open(newline="") as handle:
            rows = [row for row in csv.reader(handle) if row]
    except OSError as e:
        raise ConfigError(f"Could not read coefficients from {path}: {e}") from e
    values = []
    for i, row in enumerate(rows):
        try:
            parts = [float(v) for v in row[:2]]
        except ValueError:
            if i == 0:
                continue
            raise ConfigError(f"Row {i + 1} of {path} is not numeric: {row}") from None
        values.append(complex(parts[0], parts[1] if len(parts) > 1 else 0.0))
    if len(values) != N:
        raise ConfigError(f"{path} holds {len(values)} coefficients, expected N={N}")
    return np.array(values, dtype=complex)


@dataclass
class ExponentFit:
    points: list = field(default_factory=list)
    slope: float = 0.0
    intercept: float = 0.0
    residual: float = 0.0

    def fitted(self, scale: float) -> float:
        return float(np.exp(self.intercept) * scale**self.slope)

    def rows(self) -> list[dict]:
        return [{"scale": s, "value": v, "fitted": self.fitted(s)} for s, v in self.points]

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "points": [list(p) for p in self.points]}


def fit_exponent(points) -> ExponentFit:
    points = [(float(s), float(v)) for s, v in points]
    if len(points) < 2:
        raise ConfigError(f"Exponent fit needs at least 2 points (got {len(points)})")
    if any(s <= 0 or v <= 0 for s, v in points):
        raise ConfigError("Exponent fit needs positive scales and values")
    logs = np.log(np.array(points))
    if np.ptp(logs[:, 0]) == 0:
        raise ConfigError("Exponent fit needs at least two distinct scales")
    slope, intercept = np.polyfit(logs[:, 0], logs[:, 1], 1)
    predicted = slope * logs[:, 0] + intercept
    residual = float(np.sqrt(np.mean((logs[:, 1] - predicted) ** 2)))
    return ExponentFit(points, float(slope), float(intercept), residual)
