from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from .config import SETTINGS, BudgetError, LabError, RunConfig
from .curve_tiles import CurveParams, build_frequency_tiles
from .norms import MeanValueProblem, exp_sum_lp_torus
from .scans import scan_decoupling, scan_theorem1
import json
import logging

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

VERSION = "v1"

app = FastAPI(title="Curve Restriction Workbench")


def _error(e: LabError) -> JSONResponse:
    status = 422 if e.exit_code == 2 else 507 if isinstance(e, BudgetError) else 500
    body = {"error": str(e)}
    if isinstance(e, BudgetError):
        body["largest_feasible"] = e.largest_feasible
    return JSONResponse(body, status_code=status)


async def _config(request: Request) -> RunConfig:
    raw = await request.body()
    data = json.loads(raw) if raw else {}
    return RunConfig.from_dict(data)


@app.get("/health")
def health():
    return {"status": "ok", "env": SETTINGS.env, "version": VERSION}


@app.post("/jobs/scan-st")
async def run_scan_st(request: Request):
    """
    Theorem-1 scan for the posted run config.

    Expected payload: any subset of RunConfig fields, e.g.
    {"d": 3, "p": 8, "n_values": [1, 2, 4], "families": ["single", "ones"]}
    """
    try:
        config = await _config(request)
        report = scan_theorem1(config)
        logger.info(f"scan-st {report.config_hash}: {len(report.rows)} rows")
        return report.to_dict()
    except json.JSONDecodeError as e:
        return JSONResponse({"error": f"Invalid JSON: {e}"}, status_code=400)
    except LabError as e:
        logger.error(f"scan-st failed: {e}")
        return _error(e)


@app.post("/jobs/scan-dec")
async def run_scan_dec(request: Request, variant: str = "conjecture2"):
    """Decoupling scan; the variant is a query parameter, the body a run config."""
    try:
        config = await _config(request)
        report = scan_decoupling(config, variant)
        logger.info(f"scan-dec {variant} {report.config_hash}: {len(report.rows)} rows")
        return report.to_dict()
    except json.JSONDecodeError as e:
        return JSONResponse({"error": f"Invalid JSON: {e}"}, status_code=400)
    except LabError as e:
        logger.error(f"scan-dec failed: {e}")
        return _error(e)


@app.get("/mean-value")
def mean_value(N: int, d: int = 3, s: int = 2):
    try:
        prob = MeanValueProblem(N, d, s)
        value = exp_sum_lp_torus(prob)
        return {"N": N, "d": d, "s": s, "grid": list(prob.exact_grid()), "value": value}
    except LabError as e:
        logger.error(f"mean-value failed: {e}", exc_info=True)
        return _error(e)


@app.get("/debug-tiles")
def debug_tiles(N: int, d: float = 3.0):
    """Debug endpoint: the N frequency tiles of the curve at exponent d."""
    try:
        tiles = build_frequency_tiles(CurveParams(d, N))
        return {"d": d, "N": N, "tiles": [omega.to_dict() for omega in tiles]}
    except LabError as e:
        return _error(e)
