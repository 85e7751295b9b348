"""
SABR Series Lab - Main Application Entry Point
HTTP surface over the table service: pricing, payoff and kernel samples, series analysis.
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.config import get_settings
from app.models.schemas import HealthResponse
from app.routers import analysis, pricing
from app.services.tables import get_table_service

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

VERSION = "1.0.0"


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan events."""
    # Startup
    settings = get_settings()
    logger.info("SABR Series Lab API starting...")
    logger.info(f"   Tolerances: abs={settings.abs_tol:g} rel={settings.rel_tol:g}")
    logger.info(f"   Series order: {settings.series_order} (max {settings.max_series_order})")
    logger.info(f"   Debug Mode: {settings.debug}")

    get_table_service()

    yield

    # Shutdown
    logger.info("SABR Series Lab API shutting down...")


# Create FastAPI app
app = FastAPI(
    title="SABR Series Lab API",
    description="Short-maturity series, exact quadrature prices and the large-volatility scaling limit of the uncorrelated log-normal SABR model.",
    version=VERSION,
    lifespan=lifespan
)

# CORS Middleware
settings = get_settings()
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include Routers
app.include_router(pricing.router)
app.include_router(analysis.router)


# ============ Root Endpoints ============

@app.get("/", response_model=HealthResponse, tags=["Health"])
async def health_check():
    """
    Health check endpoint.
    Returns API status and configuration.
    """
    return HealthResponse(
        status="online",
        version=VERSION,
        max_series_order=get_settings().max_series_order
    )


@app.get("/api", tags=["Health"])
async def api_info():
    """
    API information endpoint.
    """
    return {
        "name": "SABR Series Lab API",
        "version": VERSION,
        "endpoints": {
            "pricing": {
                "price": "POST /api/pricing/price",
                "payoff": "POST /api/pricing/payoff",
                "kernel": "POST /api/pricing/kernel"
            },
            "analysis": {
                "series": "POST /api/analysis/series",
                "diverge": "POST /api/analysis/diverge",
                "scaling": "POST /api/analysis/scaling"
            }
        }
    }


# ============ Development Server ============

if __name__ == "__main__":
    import uvicorn
    settings = get_settings()
    uvicorn.run(
        "app.main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.debug
    )
