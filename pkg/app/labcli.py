"""Command-line entry point: python -m app.labcli <subcommand> [options]."""
import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .batteries import BATTERIES, emit_battery, run_battery
from .config import BudgetError, ConfigError, LabError, RunConfig
from .curve_tiles import (
    CurveParams, Tube, build_frequency_tiles, cube_grid, delta_ladder, root_cube, tiles_to_json, xi_ladder,
)
from .fields import parseval_report, read_binary, write_binary
from .geometry import Box
from .norms import MeanValueProblem, exp_sum_lp_torus, read_coefficients, vinogradov_count
from .polypart import MassDistribution, Polynomial2, check_balance, partition, partition_from_polynomial, wall
from .reports import emit_report, render_partition, write_json, write_json_lines, write_rows_csv
from .scans import scan_decoupling, scan_theorem1
from .tang_tran import experiment_field, run_tang_tran
from .variety import Incidence, angle_threshold, default_sample, tang_tran_split
from .wavepacket import crop, decompose, reconstruct

logger = logging.getLogger(__name__)


def _out(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {path}: {e}") from e
    return path


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Could not read {path}: {e}") from e


def _emit(data: dict, target: Path) -> None:
    write_json(data, target)
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_mean_value(args, config: RunConfig) -> None:
    d = int(args.d if args.d is not None else config.d)
    coefficients = read_coefficients(args.coeffs, args.N) if args.coeffs else None
    prob = MeanValueProblem(args.N, d, args.s, coefficients)
    value = exp_sum_lp_torus(prob, budget_bytes=config.memory_budget_bytes)
    try:
        oracle = vinogradov_count(args.N, prob.s, d, coefficients=coefficients)
    except BudgetError as e:
        logger.warning(f"Counting oracle skipped: {e}")
        oracle = None
    gap = abs(value - oracle) / abs(oracle) if oracle else None
    data = {"N": args.N, "d": d, "s": prob.s, "p": prob.p, "grid": list(prob.exact_grid()),
            "value": value, "oracle": oracle, "relative_gap": gap}
    _emit(data, _out(config) / f"mean_value_N{args.N}_d{d}_s{prob.s}.json")


def _points_domain(mass: MassDistribution) -> Box:
    """Square around the points, padded so no point sits on the raster edge."""
    bb = mass.bounding_box()
    side = 1.02 * max(bb.xmax - bb.xmin, bb.ymax - bb.ymin) or 1.0
    return Box.square(bb.center, side)


def cmd_partition(args, config: RunConfig) -> None:
    mass = MassDistribution.from_csv(args.points)
    domain = _points_domain(mass)
    D = args.degree if args.degree is not None else config.degree
    part = partition(mass, D, domain, seed=config.seed, grid=config.partition_grid, threads=config.threads)
    rho = args.rho if args.rho is not None else 2.0 * max(part.steps)
    wall_mask = wall(part, rho)
    out = _out(config)
    stem = f"partition_D{D}_seed{config.seed}"
    if args.image != "none":
        render_partition(part.labels, wall_mask.mask, [domain.xmin, domain.xmax, domain.ymin, domain.ymax],
                         out / f"{stem}.{args.image}")
    masses = part.cell_masses()
    write_rows_csv(
        [{"cell": lab, "pattern": int(part.codes[lab]), "mass": m} for lab, m in masses.items()],
        out / f"{stem}_cells.csv",
    )
    data = {
        "degree": D,
        "seed": config.seed,
        "points": len(mass.weights),
        "polynomial": part.polynomial.to_dict(),
        "factors": [f.to_dict() for f in part.factors],
        "n_cells": part.n_cells,
        "cell_bound": D * D + D + 2,
        "class_masses": {str(k): v for k, v in part.class_masses().items()},
        "cell_masses": {str(k): v for k, v in masses.items()},
        "wall_mass": part.wall_mass(),
        "balanced": check_balance(part),
        "warnings": part.warnings,
    }
    _emit(data, out / f"{stem}.json")


def cmd_classify(args, config: RunConfig) -> None:
    R = float(args.R if args.R is not None else config.n_values[0])
    d = float(args.d if args.d is not None else config.d)
    delta = float(args.delta if args.delta is not None else config.delta)
    P = Polynomial2.from_dict(_read_json(args.poly))
    raw = _read_json(args.tubes)
    tubes = [Tube.from_dict(t) for t in (raw["tubes"] if isinstance(raw, dict) else raw)]
    root = root_cube(R, d)
    part = partition_from_polynomial(P, root.box(), config.partition_grid)
    wall_mask = wall(part, R ** (1 + delta))
    sample = default_sample(P, root, tubes)
    incidence = Incidence.build(tubes, wall_mask, sample, R, delta)
    tables = {"xi": {}, "delta": {}}
    for kind, ladder in (("xi", xi_ladder(R, d)), ("delta", delta_ladder(R, delta, config.delta_ceiling_shift))):
        for scale in ladder:
            grid = cube_grid(root, scale, kind, R, d, delta, config.delta_ceiling_shift)
            members = incidence.memberships(grid, angle_threshold(scale, kind, R, d, delta))
            tables[kind][str(scale)] = [
                {"cube": [grid.cube(ix, iy).x0, grid.cube(ix, iy).y0, grid.side], "members": sorted(m)}
                for (ix, iy), m in sorted(members.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ]
    split = tang_tran_split(tubes, P, wall_mask, R, d, delta, config.delta_ceiling_shift, root, sample)
    data = {"R": R, "d": d, "delta": delta, "classes": tables, "split": split.to_dict()}
    _emit(data, _out(config) / f"classify_R{R:g}_{config.config_hash()}.json")


def cmd_decompose(args, config: RunConfig) -> None:
    R = int(config.n_values[0])
    tiles_all = build_frequency_tiles(CurveParams(config.d, R))
    chosen = [int(j) for j in config.extra.get("tiles", [1])]
    if any(j < 1 or j > R for j in chosen):
        raise ConfigError(f"Tile indices must lie in 1..{R} (got {chosen})")
    tiles = [tiles_all[j - 1] for j in chosen]
    root = root_cube(R, config.d)
    if args.field:
        try:
            f = read_binary(args.field)
        except OSError as e:
            raise ConfigError(f"Could not read field {args.field}: {e}") from e
        region = f.box()
    else:
        f = experiment_field(config, R, tiles, root)
        region = root.box()
    packets = decompose(f, tiles, region)
    rebuilt = reconstruct(packets, f, region)
    reference = crop(f, region)
    residual = (rebuilt - reference).l2_norm() / reference.l2_norm() if reference.l2_norm() > 0 else 0.0
    out = _out(config)
    stem = f"decompose_{config.config_hash()}"
    write_json_lines([p.to_dict() for p in packets], out / f"{stem}.jsonl")
    if args.save_field:
        write_binary(f, out / f"{stem}_field.bin")
    data = {
        "R": R,
        "tiles": chosen,
        "packets": len(packets),
        "parseval": parseval_report(f, tiles),
        "reconstruction_residual": residual,
    }
    _emit(data, out / f"{stem}.json")


def cmd_scan_st(args, config: RunConfig) -> None:
    report = scan_theorem1(config)
    for path in emit_report(report, _out(config), args.formats):
        print(path)


def cmd_scan_dec(args, config: RunConfig) -> None:
    report = scan_decoupling(config, args.variant)
    for path in emit_report(report, _out(config), args.formats):
        print(path)


def cmd_tang_tran(args, config: RunConfig) -> None:
    record = run_tang_tran(config)
    _emit(record.to_dict(), _out(config) / f"tang_tran_{config.config_hash()}.json")


def cmd_lemma_battery(args, config: RunConfig) -> None:
    rows = run_battery(args.which, config.seed, args.instances, config.threads)
    print(emit_battery(rows, args.which, config.seed, _out(config)))


def cmd_dump_tiles(args, config: RunConfig) -> None:
    N = args.N if args.N is not None else config.n_values[0]
    params = CurveParams(config.d, N)
    region = Box(*args.region) if args.region else None
    print(tiles_to_json(params, region))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labcli", description="Curve restriction workbench")
    parser.add_argument("--config", type=str, default=None, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--threads", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mean-value", help="Exact torus mean value of the curve exponential sum")
    pm.add_argument("--N", type=int, required=True)
    pm.add_argument("--d", type=int, default=None)
    pm.add_argument("--s", type=int, default=2, help="Half the even exponent p = 2s")
    pm.add_argument("--coeffs", type=str, default=None, help="CSV of a_1..a_N (re or re,im per row)")
    pm.set_defaults(func=cmd_mean_value)

    pp = sub.add_parser("partition", help="Polynomial partition of a weighted point set")
    pp.add_argument("--points", type=str, required=True, help="CSV of x,y[,weight] rows")
    pp.add_argument("--degree", type=int, default=None)
    pp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    pp.add_argument("--rho", type=float, default=None)
    pp.add_argument("--image", choices=["svg", "pgm", "none"], default="svg")
    pp.set_defaults(func=cmd_partition)

    pc = sub.add_parser("classify", help="Tangential/transverse tube classes for a polynomial")
    pc.add_argument("--poly", type=str, required=True)
    pc.add_argument("--tubes", type=str, required=True)
    pc.add_argument("--R", type=float, default=None)
    pc.add_argument("--d", type=float, default=None)
    pc.add_argument("--delta", type=float, default=None)
    pc.set_defaults(func=cmd_classify)

    pd = sub.add_parser("decompose", help="Wave packet decomposition of a band-limited field")
    pd.add_argument("--field", type=str, default=None, help="Binary field file; a random field otherwise")
    pd.add_argument("--save-field", action="store_true", help="Also write the decomposed field as binary")
    pd.set_defaults(func=cmd_decompose)

    ps = sub.add_parser("scan-st", help="||f||_p / ||f||_2 across N")
    ps.add_argument("--formats", nargs="+", default=["csv", "json", "svg"])
    ps.set_defaults(func=cmd_scan_st)

    pdec = sub.add_parser("scan-dec", help="Decoupling ratio across N")
    pdec.add_argument("--variant", choices=["conjecture2", "theorem2"], default="conjecture2")
    pdec.add_argument("--formats", nargs="+", default=["csv", "json", "svg"])
    pdec.set_defaults(func=cmd_scan_dec)

    pt = sub.add_parser("tang-tran", help="Cell, tangential and transverse terms of a random field")
    pt.set_defaults(func=cmd_tang_tran)

    pl = sub.add_parser("lemma-battery", help="Randomized checks of the incidence lemmas")
    pl.add_argument("--which", choices=sorted(BATTERIES), required=True)
    pl.add_argument("--instances", type=int, default=None)
    pl.set_defaults(func=cmd_lemma_battery)

    pdt = sub.add_parser("dump-tiles", help="Frequency tiles and dual tube lattices as JSON")
    pdt.add_argument("--N", type=int, default=None)
    pdt.add_argument("--region", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"), default=None)
    pdt.set_defaults(func=cmd_dump_tiles)
    return parser


def load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    return dataclasses.replace(config, **overrides)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
        args.func(args, config)
    except LabError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
