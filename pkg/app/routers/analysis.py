"""
SABR Series Lab - Analysis Router
Endpoints for exact coefficients, divergence diagnostics and the scaling limit.
"""
from fastapi import APIRouter

from app.models.schemas import DivergeRequest, ScalingRequest, SeriesRequest, TableResponse
from app.services.errors import SabrLabError
from app.services.tables import get_table_service

router = APIRouter(prefix="/api/analysis", tags=["Analysis"])


def _respond(tables) -> TableResponse:
    failures = [f for table in tables.values() for f in table.failures]
    return TableResponse(success=not failures, tables=tables, error="; ".join(failures) or None)


@router.post("/series", response_model=TableResponse)
async def series(request: SeriesRequest):
    """
    Exact payoff, value and implied-variance coefficients.

    Example:
        Input: {"order": 4, "sigma0": [1.0]}
        Output: implied_variance_at_sigma0 row k=2 holds -4/45
    """
    try:
        return _respond(get_table_service().build(request.to_run_config()))
    except (SabrLabError, ValueError) as e:
        return TableResponse(success=False, error=str(e))


@router.post("/diverge", response_model=TableResponse)
async def diverge(request: DivergeRequest):
    """
    Partial sums, optimal truncation, root test and error bounds of the value series.
    """
    try:
        return _respond(get_table_service().build(request.to_run_config()))
    except (SabrLabError, ValueError) as e:
        return TableResponse(success=False, error=str(e))


@router.post("/scaling", response_model=TableResponse)
async def scaling(request: ScalingRequest):
    """
    Scaling-limit tables: Sigma_hat^2, radius, covered-call exponent check and contour samples.
    """
    try:
        return _respond(get_table_service().build(request.to_run_config()))
    except (SabrLabError, ValueError) as e:
        return TableResponse(success=False, error=str(e))
