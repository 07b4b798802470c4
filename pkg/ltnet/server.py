"""FastAPI analysis and results server (`ltnet serve`)."""

import logging
import secrets

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ltnet import __version__, config, criteria, db, regions, schemas
from ltnet.errors import CapExceededError, DaleViolation, DimensionError, InputError, LtnetError
from ltnet.model import ensure_valid, flatten_ei_pair_network

logger = logging.getLogger(__name__)

app = FastAPI(title="ltnet analysis API", version=__version__)


@app.middleware("http")
async def auth_middleware(request: Request, call_next):
    path = request.url.path
    # Health check stays open; everything else under /api/ needs a key when keys are configured
    if not config.API_KEYS or path == "/api/health" or not path.startswith("/api/"):
        return await call_next(request)

    auth_header = request.headers.get("Authorization", "")
    if not auth_header.startswith("Bearer "):
        return JSONResponse({"detail": "Not authenticated"}, status_code=401)

    token = auth_header[7:]  # strip "Bearer "
    if any(secrets.compare_digest(token, k) for k in config.API_KEYS):
        return await call_next(request)
    return JSONResponse({"detail": "Invalid API key"}, status_code=401)


@app.exception_handler(LtnetError)
async def ltnet_error_handler(request: Request, exc: LtnetError):
    status = 400 if isinstance(exc, (InputError, DimensionError, DaleViolation)) else 422
    if isinstance(exc, CapExceededError):
        status = 413
    return JSONResponse({"detail": str(exc), "error": type(exc).__name__}, status_code=status)


# === Pydantic Models ===


class InhibitoryCheckRequest(BaseModel):
    W: list[list[float]]
    u: list[float] | None = None
    m: list[float] | None = None


# === Health ===


@app.get("/api/health")
def health():
    return {"ok": True, "version": __version__}


# === Analysis Endpoints ===


@app.post("/api/lose")
def lose(req: schemas.NetworkModel, require_dale: bool = Query(False)):
    """LoSE verdict by region enumeration."""
    net = req.to_network()
    ensure_valid(net, require_dale=require_dale)
    verdict = regions.lose(net)
    return schemas.lose_verdict_to_dict(verdict)


@app.post("/api/equilibria")
def equilibria(req: schemas.NetworkModel, contained_only: bool = Query(False)):
    """Every switching region's candidate, stability and containment."""
    net = req.to_network()
    ensure_valid(net)
    reports = regions.enumerate_equilibria(net)
    if contained_only:
        reports = [r for r in reports if r.contained]
    return [schemas.region_report_to_dict(r) for r in reports]


@app.post("/api/check/ei-pair")
def check_ei_pair(req: schemas.EIPairModel):
    return schemas.condition_verdict_to_dict(criteria.ei_pair_limit_cycle(req.to_params()))


@app.post("/api/check/ei-net")
def check_ei_net(req: schemas.EIPairNetworkModel, enumerate_regions: bool = Query(False)):
    """Excitatory-only coupling gets the exact test, coupling onto inhibitory nodes the sufficient one."""
    pn = req.to_network()
    exact = not np.any(pn.Ai != 0)
    verdict = criteria.e2e_coupled_lose(pn) if exact else criteria.e2all_coupled_lose(pn)
    body = {"test": "e2e" if exact else "e2all", "exact": exact, **schemas.condition_verdict_to_dict(verdict)}
    if enumerate_regions:
        body["enumeration"] = schemas.lose_verdict_to_dict(regions.lose(flatten_ei_pair_network(pn)))
    return body


@app.post("/api/check/single-inh")
def check_single_inhibitory(req: schemas.SingleInhibitoryModel):
    net = req.to_network()
    return {
        "in_Y": schemas.condition_verdict_to_dict(criteria.single_inhibitory_in_Y(net)),
        "sufficient": schemas.condition_verdict_to_dict(criteria.single_inhibitory_sufficient(net)),
    }


@app.post("/api/check/inhibitory")
def check_inhibitory(req: InhibitoryCheckRequest):
    analysis = criteria.analyze_inhibitory(req.W, req.u, req.m)
    return schemas.inhibitory_analysis_to_dict(analysis)


# === Study Endpoints ===


@app.get("/api/studies")
def list_studies(kind: str | None = None, limit: int = Query(50, ge=1, le=500)):
    db.init_db()
    return db.list_studies(kind=kind, limit=limit)


@app.get("/api/studies/{study_id}")
def get_study(study_id: str):
    db.init_db()
    study = db.get_study(study_id)
    if study is None:
        raise HTTPException(status_code=404, detail="Study not found")
    study["n_records"] = db.count_records(study_id)
    return study


@app.get("/api/studies/{study_id}/records")
def get_study_records(study_id: str, limit: int = Query(1000, ge=1, le=10000), offset: int = Query(0, ge=0)):
    db.init_db()
    if db.get_study(study_id) is None:
        raise HTTPException(status_code=404, detail="Study not found")
    return db.get_records(study_id, limit=limit, offset=offset)


def run(host: str = "127.0.0.1", port: int | None = None):
    import uvicorn

    db.init_db()
    port = port or config.SERVER_PORT
    logger.info("Analysis API listening on http://%s:%d", host, port)
    uvicorn.run(app, host=host, port=port, log_level="info")
