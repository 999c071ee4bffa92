"""
Exponent scans over N for the single-packet estimate and the decoupling ratios.

Test functions are sums of curve-adapted packets centered at the ball center,
    psi_omega(x) = sinc^2(u / 2L) sinc^2(v / 2W) e(xi_omega . x),
with (u, v) the coordinates along the tube direction e(T) and across it,
L = N^d and W = N. Each psi_omega has Fourier support inside omega, so for
coefficients c_omega
    ||f||_2^2 = sum |c_omega|^2 (2L * 2/3) (2W * 2/3).
The summed field is sampled on a grid over B(N^d) a block of rows at a time
and measured with lp_norm. An importance-sampled Monte Carlo estimate of the
same norm is kept as a cross-check and reported next to the scan rows.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import BudgetError, ConfigError, RunConfig
from .curve_tiles import CurveParams, FreqRect, build_frequency_tiles
from .fields import Field, tiles_carrier
from .geometry import Ball
from .norms import fit_exponent, lp_norm
from .reports import ScanReport, ScanRow

logger = logging.getLogger(__name__)

SINC4_INTEGRAL = 2.0 / 3.0
ENVELOPE_HALF_WIDTH = 40
TABLE_REACH = 64.0
TABLE_POINTS = 1 << 16
CHUNK = 1 << 16
ROW_BLOCK = 64


def sharpness_exponent(d: float, p: float) -> float:
    """Exponent of N in ||f||_p / ||f||_2 for one N^d x N packet (indicator model)."""
    return (d + 1) * (1.0 / p - 0.5)


def critical_p(d: float) -> float:
    """Smallest p for which the single-packet exponent reaches -d/2."""
    return 2 * d + 2


@dataclass(frozen=True)
class PacketFamily:
    tiles: tuple
    coefficients: np.ndarray
    length: float
    width: float

    @property
    def l2_norm(self) -> float:
        c2 = float(np.sum(np.abs(self.coefficients) ** 2))
        return math.sqrt(c2 * (2 * self.length * SINC4_INTEGRAL) * (2 * self.width * SINC4_INTEGRAL))

    def active(self) -> list[int]:
        return [i for i, c in enumerate(self.coefficients) if c != 0]

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.zeros(np.shape(x), dtype=complex)
        for i in self.active():
            omega = self.tiles[i]
            u, v = _frame(omega, x, y)
            envelope = np.sinc(u / (2 * self.length)) ** 2 * np.sinc(v / (2 * self.width)) ** 2
            phase = np.exp(2j * np.pi * (omega.center[0] * x + omega.center[1] * y))
            out += self.coefficients[i] * envelope * phase
        return out


def _frame(omega: FreqRect, x, y):
    ex, ey = omega.normal
    return x * ex + y * ey, -x * ey + y * ex


def family_coefficients(family: str, N: int, seed: int, amplitude: float) -> np.ndarray:
    if family == "single":
        c = np.zeros(N, dtype=complex)
        c[0] = 1.0
    elif family == "ones":
        c = np.ones(N, dtype=complex)
    elif family == "random":
        rng = np.random.default_rng([seed, N])
        c = np.exp(2j * np.pi * rng.random(N))
    elif family == "signs":
        rng = np.random.default_rng([seed, N])
        c = rng.choice([-1.0, 1.0], size=N).astype(complex)
    else:
        raise ConfigError(f"Unknown test-function family {family!r}")
    return amplitude * c


def build_family(family: str, d: float, N: int, seed: int, amplitude: float) -> PacketFamily:
    tiles = tuple(build_frequency_tiles(CurveParams(d, N)))
    return PacketFamily(tiles, family_coefficients(family, N, seed, amplitude), float(N) ** d, float(N))


def envelope_grid_bytes(d: float, N: int) -> int:
    L, W = float(N) ** d, float(N)
    h = W / 8
    return int(16 * (2 * L / h) * (2 * ENVELOPE_HALF_WIDTH * W / h))


def envelope_lp(p: float, d: float, N: int) -> float:
    """||sinc^2(u/2L) sinc^2(v/2W)||_{L^p(B(N^d))} on a grid in the tube frame."""
    L, W = float(N) ** d, float(N)
    h = W / 8
    nu = int(round(2 * L / h))
    nv = int(round(2 * ENVELOPE_HALF_WIDTH * W / h))
    u = -L + h * np.arange(nu)
    v = -ENVELOPE_HALF_WIDTH * W + h * np.arange(nv)
    samples = np.outer(np.sinc(v / (2 * W)) ** 2, np.sinc(u / (2 * L)) ** 2)
    f = Field(samples, (-L, -ENVELOPE_HALF_WIDTH * W), h)
    return lp_norm(f, p, Ball((0.0, 0.0), L))


def family_spacing(family: PacketFamily) -> float:
    """Grid step resolving every active tile around the common carrier, twice oversampled."""
    tiles = [family.tiles[i] for i in family.active()]
    carrier = np.asarray(tiles_carrier(tiles))
    reach = float(np.max(np.abs(np.concatenate([omega.corners() for omega in tiles]) - carrier)))
    return min(family.width / 8, 1.0 / (4 * reach)) if reach > 0 else family.width / 8


def _strip_columns(xs: np.ndarray, ys: np.ndarray, ex: float, ey: float, reach: float):
    """Column range where some row of the block lies within `reach` of the tube axis, or None."""
    if abs(ey) < 1e-12:
        return (0, xs.size) if np.any(np.abs(ys * ex) <= reach) else None
    ends = [(y * ex + s * reach) / ey for y in (ys[0], ys[-1]) for s in (-1.0, 1.0)]
    a = int(np.searchsorted(xs, min(ends), side="left"))
    b = int(np.searchsorted(xs, max(ends), side="right"))
    return (a, b) if b > a else None


def _add_packet(out: np.ndarray, omega: FreqRect, c: complex, xs, ys, L: float, W: float, carrier) -> None:
    """out += c psi_omega demodulated by the carrier; envelope cut at ENVELOPE_HALF_WIDTH widths."""
    ex, ey = omega.normal
    cols = _strip_columns(xs, ys, ex, ey, ENVELOPE_HALF_WIDTH * W)
    if cols is None:
        return
    a, b = cols
    X = xs[a:b]
    u = np.add.outer(ys * ey, X * ex)
    v = np.add.outer(ys * ex, -X * ey)
    envelope = np.sinc(u / (2 * L)) ** 2 * np.sinc(v / (2 * W)) ** 2
    phase = np.outer(np.exp(2j * np.pi * (omega.center[1] - carrier[1]) * ys),
                     np.exp(2j * np.pi * (omega.center[0] - carrier[0]) * X))
    out[:, a:b] += c * envelope * phase


def family_blocks(family: PacketFamily, ball: Ball, spacing: float, rows: int = ROW_BLOCK):
    """Yield the summed field over the square around `ball` as Fields of `rows` grid rows.

    The grid puts a point on the ball center so every row meets the ball.
    """
    active = family.active()
    carrier = tiles_carrier([family.tiles[i] for i in active])
    n = int(math.floor(ball.radius / spacing))
    offsets = spacing * np.arange(-n, n + 1)
    cx, cy = ball.center
    for start in range(0, offsets.size, rows):
        ys = offsets[start:start + rows]
        samples = np.zeros((ys.size, offsets.size), dtype=complex)
        for i in active:
            _add_packet(samples, family.tiles[i], family.coefficients[i], offsets, ys,
                        family.length, family.width, carrier)
        yield Field(samples, (cx + offsets[0], cy + ys[0]), spacing, carrier)


def grid_lp_norm(family: PacketFamily, p: float, ball: Ball, spacing: Optional[float] = None) -> float:
    """||sum_omega c_omega psi_omega||_{L^p(ball)} by lp_norm over row blocks of the sampled field."""
    h = spacing if spacing is not None else family_spacing(family)
    norms = np.array([lp_norm(block, p, ball) for block in family_blocks(family, ball, h)])
    scale = float(norms.max())
    if scale == 0:
        return 0.0
    return scale * float(np.sum((norms / scale) ** p)) ** (1.0 / p)


class _Sinc4Sampler:
    """Inverse-CDF draws from the density proportional to sinc(t)^4 on |t| <= TABLE_REACH."""

    def __init__(self):
        t = np.linspace(-TABLE_REACH, TABLE_REACH, TABLE_POINTS)
        density = np.sinc(t) ** 4
        cdf = np.concatenate([[0.0], np.cumsum((density[1:] + density[:-1]) / 2 * np.diff(t))])
        self.mass = float(cdf[-1])
        self.t = t
        self.cdf = cdf / cdf[-1]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.interp(rng.random(size), self.cdf, self.t)

    def density(self, t: np.ndarray) -> np.ndarray:
        inside = np.abs(t) <= TABLE_REACH
        return np.where(inside, np.sinc(t) ** 4 / self.mass, 0.0)


_SAMPLER: Optional[_Sinc4Sampler] = None


def _sampler() -> _Sinc4Sampler:
    global _SAMPLER
    if _SAMPLER is None:
        _SAMPLER = _Sinc4Sampler()
    return _SAMPLER


def mc_lp_norm(family: PacketFamily, p: float, ball: Ball, samples: int, seed: int) -> float:
    """||f||_{L^p(ball)} by importance sampling from the mixture of packet envelopes^2."""
    sampler = _sampler()
    rng = np.random.default_rng(seed)
    active = family.active()
    L, W = family.length, family.width
    total = 0.0
    done = 0
    while done < samples:
        size = min(CHUNK, samples - done)
        which = rng.integers(0, len(active), size)
        su = sampler.draw(rng, size)
        sv = sampler.draw(rng, size)
        x = np.empty(size)
        y = np.empty(size)
        for slot, i in enumerate(active):
            pick = which == slot
            ex, ey = family.tiles[i].normal
            u = 2 * L * su[pick]
            v = 2 * W * sv[pick]
            x[pick] = ball.center[0] + u * ex - v * ey
            y[pick] = ball.center[1] + u * ey + v * ex
        q = np.zeros(size)
        for i in active:
            u, v = _frame(family.tiles[i], x - ball.center[0], y - ball.center[1])
            q += sampler.density(u / (2 * L)) * sampler.density(v / (2 * W)) / (4 * L * W)
        q /= len(active)
        values = np.abs(family.evaluate(x - ball.center[0], y - ball.center[1])) ** p
        weight = np.where(ball.contains(x, y) & (q > 0), values / np.where(q > 0, q, 1.0), 0.0)
        total += float(weight.sum())
        done += size
    return (total / samples) ** (1.0 / p)


def family_lp_norm(family: PacketFamily, p: float, d: float, N: int) -> float:
    """||f||_{L^p(B(N^d))}: the envelope table for one packet, the sampled field otherwise."""
    active = family.active()
    if len(active) == 1:
        return abs(family.coefficients[active[0]]) * envelope_lp(p, d, N)
    return grid_lp_norm(family, p, Ball((0.0, 0.0), float(N) ** d))


def _mc_cross_check(config: RunConfig, rows: list[ScanRow]) -> dict:
    """Monte Carlo estimates of the multi-packet norms against the grid values."""
    gaps = []
    for row in rows:
        fam = build_family(row.family, config.d, row.N, row.seed, config.amplitude)
        if len(fam.active()) < 2:
            continue
        estimate = mc_lp_norm(fam, config.p, Ball((0.0, 0.0), float(row.N) ** config.d), config.mc_samples,
                              config.seed * 7919 + row.seed)
        gaps.append({"family": row.family, "N": row.N, "seed": row.seed, "mc": estimate,
                     "relative_gap": abs(estimate - row.lhs) / row.lhs})
    worst = max((g["relative_gap"] for g in gaps), default=0.0)
    if worst > 0.1:
        logger.warning(f"Monte Carlo cross-check differs from the grid norm by {worst:.1%}")
    return {"samples": config.mc_samples, "max_relative_gap": worst, "rows": gaps}



def _check_budget(config: RunConfig) -> None:
    budget = config.memory_budget_bytes
    too_big = [n for n in config.n_values if envelope_grid_bytes(config.d, n) > budget]
    if too_big:
        feasible = [n for n in config.n_values if n not in too_big]
        largest = max(feasible) if feasible else None
        raise BudgetError(
            f"Envelope grid for N={min(too_big)} exceeds the {config.memory_budget_mb} MB budget "
            f"(largest feasible N in range: {largest})",
            largest_feasible=largest,
        )


def _families(config: RunConfig) -> list[tuple]:
    out = []
    for family in config.families:
        seeds = config.seeds if family in ("random", "signs") else (config.seed,)
        out.extend((family, s) for s in seeds)
    return out


def _fits(rows: list[ScanRow]) -> dict:
    fits = {}
    for family in sorted({r.family for r in rows}):
        points = [(r.N, r.ratio) for r in rows if r.family == family]
        if len({n for n, _ in points}) >= 2:
            fits[family] = fit_exponent(points)
    return fits


def _run_over_n(config: RunConfig, task) -> list[ScanRow]:
    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
        per_n = list(pool.map(task, config.n_values))
    rows = [row for batch in per_n for row in batch]
    return sorted(rows, key=lambda r: (r.N, r.family, r.seed))


def scan_theorem1(config: RunConfig) -> ScanReport:
    """||sum f_omega||_{L^p(B(N^d))} / ||f||_2 across N for each test family."""
    config.validate("theorem1")
    if config.amplitude == 0:
        raise ConfigError("Zero test function: the ratio ||f||_p / ||f||_2 is undefined")
    _check_budget(config)
    started = time.perf_counter()

    def task(N: int) -> list[ScanRow]:
        rows = []
        for family, seed in _families(config):
            fam = build_family(family, config.d, N, seed, config.amplitude)
            lhs = family_lp_norm(fam, config.p, config.d, N)
            rhs = fam.l2_norm
            rows.append(ScanRow(family, N, seed, lhs, rhs, lhs / rhs))
        logger.info(f"Theorem-1 scan N={N}: {len(rows)} rows")
        return rows

    rows = _run_over_n(config, task)
    fits = _fits(rows)
    target = -config.d / 2
    extra = {
        "critical_p": critical_p(config.d),
        "sharpness_exponent": sharpness_exponent(config.d, config.p),
        "target_exponent": target,
        "slack": {name: fit.slope - target for name, fit in fits.items()},
        "mc_cross_check": _mc_cross_check(config, rows),
    }
    return ScanReport("scan-st", rows, fits, config.to_dict(), config.config_hash(),
                      list(config.seeds), extra, time.perf_counter() - started)


def scan_decoupling(config: RunConfig, variant: str = "conjecture2") -> ScanReport:
    """LHS ||sum f_omega||_p against the decoupling right-hand side of the chosen variant."""
    if variant not in ("conjecture2", "theorem2"):
        raise ConfigError(f"Unknown decoupling variant {variant!r}")
    config.validate("decoupling")
    if config.amplitude == 0:
        raise ConfigError("Zero test function: decoupling ratio is undefined")
    _check_budget(config)
    started = time.perf_counter()
    p, d = config.p, config.d

    def task(N: int) -> list[ScanRow]:
        rows = []
        single_p = envelope_lp(p, d, N)
        single_half = envelope_lp(p / 2, d, N)
        for family, seed in _families(config):
            fam = build_family(family, d, N, seed, config.amplitude)
            lhs = family_lp_norm(fam, p, d, N)
            c2 = float(np.sum(np.abs(fam.coefficients) ** 2))
            if variant == "conjecture2":
                rhs = N ** (0.5 - (d + 1) / p) * math.sqrt(c2) * single_p
            else:
                rhs = N ** (-(d + 1) / p) * math.sqrt(c2) * single_half
            rows.append(ScanRow(family, N, seed, lhs, rhs, lhs / rhs))
        return rows

    rows = _run_over_n(config, task)
    extra = {
        "variant": variant,
        "thresholds": {"decoupling": 2 * (d + 1), "algebraic": 2 * (d + 2)},
        "mc_cross_check": _mc_cross_check(config, rows),
    }
    return ScanReport(f"scan-dec-{variant}", rows, _fits(rows), config.to_dict(), config.config_hash(),
                      list(config.seeds), extra, time.perf_counter() - started)
