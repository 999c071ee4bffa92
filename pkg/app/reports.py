import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import ReportError  # noqa: E402
from .norms import ExponentFit  # noqa: E402

logger = logging.getLogger(__name__)

ROW_FIELDS = ["family", "N", "seed", "lhs", "rhs", "ratio"]


@dataclass
class ScanRow:
    family: str
    N: int
    seed: int
    lhs: float
    rhs: float
    ratio: float


@dataclass
class ScanReport:
    kind: str
    rows: list
    fits: dict
    config: dict
    config_hash: str
    seeds: list
    extra: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": [asdict(r) for r in self.rows],
            "fits": {name: fit.to_dict() for name, fit in self.fits.items()},
            "config": self.config,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "extra": self.extra,
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScanReport":
        fits = {
            name: ExponentFit([tuple(p) for p in fit["points"]], fit["slope"], fit["intercept"], fit["residual"])
            for name, fit in data["fits"].items()
        }
        return cls(
            kind=data["kind"],
            rows=[ScanRow(**r) for r in data["rows"]],
            fits=fits,
            config=data["config"],
            config_hash=data["config_hash"],
            seeds=list(data["seeds"]),
            extra=data.get("extra", {}),
            wall_clock=data.get("wall_clock", 0.0),
        )


def _target(out_dir, stem: str, config_hash: str, suffix: str) -> Path:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"Cannot create output directory {path}: {e}") from e
    return path / f"{stem}_{config_hash}.{suffix}"


def write_rows_csv(rows: list[dict], path, fieldnames: Optional[list] = None) -> Path:
    if not rows:
        raise ReportError("nothing to report")
    path = Path(path)
    fieldnames = fieldnames or list(rows[0].keys())
    try:
        with path.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    except OSError as e:
        raise ReportError(f"Could not write {path}: {e}") from e
    return path


def write_json(data: dict, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True))
    except OSError as e:
        raise ReportError(f"Could not write {path}: {e}") from e
    return path


def write_json_lines(rows: list[dict], path) -> Path:
    """One sorted-key JSON object per line."""
    path = Path(path)
    try:
        with path.open("w") as handle:
            for row in rows:
                handle.write(json.dumps(row, sort_keys=True) + "\n")
    except OSError as e:
        raise ReportError(f"Could not write {path}: {e}") from e
    return path


def load_report(path) -> ScanReport:
    try:
        return ScanReport.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ReportError(f"Could not read report {path}: {e}") from e


def plot_report(report: ScanReport, path) -> Path:
    """Log-log ratios per family with the fitted power laws."""
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        for family in sorted({r.family for r in report.rows}):
            rows = [r for r in report.rows if r.family == family]
            ns = np.array([r.N for r in rows], dtype=float)
            ax.loglog(ns, [r.ratio for r in rows], "o", label=family)
            fit = report.fits.get(family)
            if fit is not None:
                grid = np.geomspace(ns.min(), ns.max(), 50)
                ax.loglog(grid, [fit.fitted(n) for n in grid], "-", label=f"{family} slope {fit.slope:.3f}")
        ax.set_xlabel("N")
        ax.set_ylabel("ratio")
        ax.set_title(report.kind)
        ax.legend(fontsize=8)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise ReportError(f"Could not write {path}: {e}") from e
    finally:
        plt.close(fig)
    return Path(path)


def emit_report(report: ScanReport, out_dir, formats=("csv", "json", "svg")) -> list[Path]:
    if not report.rows:
        raise ReportError("nothing to report")
    written = []
    for fmt in formats:
        target = _target(out_dir, report.kind, report.config_hash, fmt)
        if fmt == "csv":
            rows = sorted((asdict(r) for r in report.rows), key=lambda r: (r["N"], r["family"], r["seed"]))
            written.append(write_rows_csv(rows, target, ROW_FIELDS))
        elif fmt == "json":
            written.append(write_json(report.to_dict(), target))
        elif fmt == "svg":
            written.append(plot_report(report, target))
        else:
            raise ReportError(f"Unknown report format {fmt!r}")
    logger.info(f"Wrote {len(written)} report files for {report.kind} to {out_dir}")
    return written


def render_partition(labels: np.ndarray, wall_mask: Optional[np.ndarray], extent, path) -> Path:
    """Sign-grid raster with the wall overlaid; SVG by extension, otherwise binary PGM."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        image = np.where(labels > 0, 64 + (labels * 37) % 160, 0).astype(np.uint8)
        if wall_mask is not None:
            image[wall_mask] = 255
        header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
        try:
            path.write_bytes(header + np.flipud(image).tobytes())
        except OSError as e:
            raise ReportError(f"Could not write {path}: {e}") from e
        return path
    fig, ax = plt.subplots(figsize=(5, 5))
    try:
        ax.imshow(labels % 20, origin="lower", extent=extent, cmap="tab20", interpolation="nearest")
        if wall_mask is not None:
            overlay = np.ma.masked_where(~wall_mask, wall_mask)
            ax.imshow(overlay, origin="lower", extent=extent, cmap="gray", alpha=0.6, interpolation="nearest")
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise ReportError(f"Could not write {path}: {e}") from e
    finally:
        plt.close(fig)
    return path
