import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class LabError(Exception):
    """Base class for every failure the workbench reports."""

    exit_code = 1


class ConfigError(LabError):
    exit_code = 2


class BudgetError(LabError):
    exit_code = 3

    def __init__(self, message: str, largest_feasible=None):
        super().__init__(message)
        self.largest_feasible = largest_feasible


class GeometryError(LabError):
    exit_code = 2


class ResolutionError(LabError):
    exit_code = 2


class BisectionError(LabError):
    def __init__(self, message: str, best_imbalance: float):
        super().__init__(f"{message} (best imbalance {best_imbalance:.4g})")
        self.best_imbalance = best_imbalance


class ReportError(LabError):
    pass


@dataclass
class Settings:
    env: str = os.getenv("LAB_ENV", "dev")
    delta: float = float(os.getenv("LAB_DELTA", "0.1"))
    delta_ceiling_shift: int = int(os.getenv("LAB_DELTA_CEILING_SHIFT", "1"))
    memory_budget_mb: int = int(os.getenv("LAB_MEMORY_BUDGET_MB", "2048"))
    output_dir: str = os.getenv("LAB_OUTPUT_DIR", "out")
    threads: int = int(os.getenv("LAB_THREADS", "1"))
    partition_grid: int = int(os.getenv("LAB_PARTITION_GRID", "1024"))
    tail_tolerance: float = float(os.getenv("LAB_TAIL_TOLERANCE", "1e-3"))
    packet_threshold: float = float(os.getenv("LAB_PACKET_THRESHOLD", "1e-12"))
    lattice_margin: int = int(os.getenv("LAB_LATTICE_MARGIN", "8"))
    bisect_tolerance: float = float(os.getenv("LAB_BISECT_TOLERANCE", "0.02"))
    max_restarts: int = int(os.getenv("LAB_MAX_RESTARTS", "64"))
    singular_fraction: float = float(os.getenv("LAB_SINGULAR_FRACTION", "1e-6"))
    mc_samples: int = int(os.getenv("LAB_MC_SAMPLES", str(2**18)))


SETTINGS = Settings()


def is_dyadic(value: float) -> bool:
    if value <= 0:
        return False
    exponent = math.log2(value)
    return abs(exponent - round(exponent)) < 1e-9


def dyadic_ladder(low: float, high: float) -> list[float]:
    """All powers of two in [low, high], ascending."""
    if low <= 0 or high < low:
        return []
    k = math.ceil(math.log2(low) - 1e-9)
    ladder = []
    while 2.0**k <= high * (1 + 1e-12):
        ladder.append(2.0**k)
        k += 1
    return ladder


@dataclass
class RunConfig:
    """One experiment run. Every report is a pure function of this record."""

    d: float = 3.0
    n_values: tuple = (4, 8, 16)
    p: float = 8.0
    delta: float = SETTINGS.delta
    degree: int = 4
    seed: int = 0
    seeds: tuple = (0, 1)
    families: tuple = ("single", "random", "ones")
    amplitude: float = 1.0
    mc_samples: int = SETTINGS.mc_samples
    grid_oversample: int = 8
    partition_grid: int = SETTINGS.partition_grid
    memory_budget_mb: int = SETTINGS.memory_budget_mb
    threads: int = SETTINGS.threads
    out_dir: str = SETTINGS.output_dir
    delta_ceiling_shift: int = SETTINGS.delta_ceiling_shift
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_values = tuple(int(n) for n in self.n_values)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.families = tuple(self.families)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Could not read config {path}: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["n_values"] = list(self.n_values)
        data["seeds"] = list(self.seeds)
        data["families"] = list(self.families)
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    @property
    def memory_budget_bytes(self) -> int:
        return int(self.memory_budget_mb) * 1024 * 1024

    def validate(self, kind: str = "theorem1") -> "RunConfig":
        if self.d < 3:
            raise ConfigError(f"d must be >= 3 (got {self.d})")
        if not self.n_values:
            raise ConfigError("N-range is empty")
        for n in self.n_values:
            if n < 1 or not is_dyadic(n):
                raise ConfigError(f"N-range must be dyadic, got {n}")
        if kind == "theorem1" and self.p < 2 * self.d + 2:
            raise ConfigError(
                f"Theorem-1 scans need p >= 2d+2 = {2 * self.d + 2:g} (got p={self.p:g})"
            )
        if kind == "decoupling" and self.p < 2 * (self.d + 1):
            raise ConfigError(
                f"Decoupling scans need p >= 2(d+1) = {2 * (self.d + 1):g} (got p={self.p:g})"
            )
        if self.delta <= 0 or self.delta >= 1:
            raise ConfigError(f"delta must lie in (0, 1) (got {self.delta})")
        if self.mc_samples < 1024:
            raise ConfigError("mc_samples must be at least 1024")
        return self
