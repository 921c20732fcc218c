"""FastAPI application exposing validation and experiment runs."""
import logging
from contextlib import asynccontextmanager
from typing import Any

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from . import __version__
from .config import configure_logging, get_settings
from .errors import BranchCapError, NumericFailure, RejectedInputError
from .experiments import execute
from .schemas import validate_config

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan handler."""
    configure_logging()
    settings = get_settings()
    logger.info("starting zenolab API (branch cap %d, oracle cap %d)", settings.branch_cap, settings.oracle_dim_cap)
    yield
    logger.info("shutting down")


app = FastAPI(
    title="Zenolab API",
    description="Direct-integral histories and Zeno-limit experiments",
    version=__version__,
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000", "http://127.0.0.1:3000"],
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/")
async def root():
    return {"status": "ok", "service": "zenolab"}


@app.get("/health")
async def health():
    """Health check endpoint."""
    return {"status": "healthy"}


@app.get("/version")
async def version():
    return {"version": __version__}


@app.post("/api/validate")
async def validate_endpoint(config: Any = Body(...)) -> dict:
    """Every schema and cross-field problem of a config, without running it."""
    _, diagnostics = validate_config(config)
    return {"valid": not diagnostics, "diagnostics": [d.model_dump() for d in diagnostics]}


@app.post("/api/run")
def run_endpoint(config: Any = Body(...)) -> dict:
    """
    Run one experiment and return the summary with its records.

    Nothing is written to disk. Invalid configs give 422 with the diagnostics;
    numeric failures while running give 400.
    """
    cfg, diagnostics = validate_config(config)
    if cfg is None:
        raise HTTPException(status_code=422, detail=[d.model_dump() for d in diagnostics])
    try:
        summary, records = execute(cfg)
    except (BranchCapError, NumericFailure, RejectedInputError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {
        "summary": summary.model_dump(mode="json"),
        "columns": list(records.columns),
        # NaN cells (skipped oracle values) become null
        "records": records.astype(object).where(records.notna(), None).to_dict(orient="records"),
    }
