#!/usr/bin/env python3
"""
Spectral Clustering Laboratory API Server
REST surface for sampling, graph spectra, clustering, convergence sweeps and runtime budgets
"""

import logging
import time
from contextlib import asynccontextmanager
from datetime import datetime, timezone

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from api.routers.experiments import router as experiments_router
from api.routers.kernels import router as kernels_router
from core.config import load_config
from core.errors import SpecLabError, error_payload
from observers.metrics import metrics

logger = logging.getLogger(__name__)

VERSION = "1.0.0"


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan management"""
    logger.info("🚀 Starting spectral clustering laboratory API")
    app.state.start_time = time.time()
    config = load_config()
    metrics.configure_budgets(config.runtime.budgets_ms)
    logger.info("📊 Runtime budgets: %s", sorted(metrics.budgets))
    logger.info("✅ API ready")
    yield
    logger.info("🛑 Shutting down spectral clustering laboratory API")


app = FastAPI(
    title="Spectral Clustering Laboratory API",
    description="Graph Laplacian spectra, continuum references and TL2 consistency experiments",
    version=VERSION,
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(experiments_router)
app.include_router(kernels_router)


@app.exception_handler(SpecLabError)
async def laboratory_error_handler(request: Request, error: SpecLabError):
    """400 for bad arguments or config, 422 kernel conditions, 503 resources, 500 solver/internal"""
    metrics.increment_counter('api_errors_total')
    logger.error("❌ %s %s failed: %s", request.method, request.url.path, error)
    return JSONResponse(status_code=error.http_status, content=error_payload(error))


@app.middleware("http")
async def metrics_middleware(request: Request, call_next):
    """Collect metrics for all API requests"""
    start_time = time.perf_counter()
    metrics.increment_counter('api_requests_total')
    try:
        response = await call_next(request)
    except Exception:
        metrics.increment_counter('api_errors_total')
        metrics.record_latency('api_error_latency', (time.perf_counter() - start_time) * 1000)
        raise
    endpoint = request.url.path.replace('/', '_').strip('_') or 'root'
    metrics.record_latency(f'api_latency_{endpoint}', (time.perf_counter() - start_time) * 1000)
    return response


@app.get("/")
async def root():
    """API root with system overview"""
    return {
        "service": "Spectral Clustering Laboratory API",
        "version": VERSION,
        "status": "operational",
        "capabilities": [
            "sampling", "graph_laplacians", "discrete_spectral_clustering",
            "continuum_spectra", "convergence_sweeps", "connectivity", "runtime_budgets"
        ],
        "endpoints": {
            "experiments": "/experiments/{sample,cluster,sweep,connectivity,continuum}",
            "kernels": "/kernels/{name}/constants?d=",
            "metrics": "/metrics",
            "budgets": "/metrics/budgets",
            "health": "/health"
        }
    }


@app.get("/health")
async def health():
    """Liveness plus runtime budget status"""
    dashboard = metrics.get_budget_dashboard()
    overall_health = dashboard['overall_health']
    return {
        "status": "ok" if overall_health == "GREEN" else "degraded",
        "overall_health": overall_health,
        "budget_violations": len(dashboard['violations']),
        "uptime_seconds": time.time() - app.state.start_time if hasattr(app.state, 'start_time') else 0,
        "timestamp": datetime.now(timezone.utc).isoformat()
    }


@app.get("/metrics")
async def prometheus_metrics():
    """Prometheus-compatible metrics export"""
    return PlainTextResponse(metrics.get_prometheus_metrics(), media_type="text/plain")


@app.get("/metrics/budgets")
async def budget_dashboard():
    """Per-stage p95 wall time against the configured budgets"""
    dashboard = metrics.get_budget_dashboard()
    dashboard['stages'] = metrics.stage_summary()
    return dashboard


if __name__ == "__main__":
    import uvicorn

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    uvicorn.run(app, host="0.0.0.0", port=8080, log_level="info", access_log=True)
