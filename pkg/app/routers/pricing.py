"""
SABR Series Lab - Pricing Router
Endpoints for option time values, payoff samples and McKean kernel samples.
"""
from fastapi import APIRouter

from app.models.schemas import KernelRequest, PayoffRequest, PriceRequest, TableResponse
from app.services.errors import SabrLabError
from app.services.tables import get_table_service

router = APIRouter(prefix="/api/pricing", tags=["Pricing"])


@router.post("/price", response_model=TableResponse)
async def price(request: PriceRequest):
    """
    Option time values by quadrature.

    Example:
        Input: {"T": [0.5], "sigma0": [0.3]}
        Output: one ATM row with value, error estimate and implied volatility
    """
    table_service = get_table_service()

    try:
        tables = table_service.build(request.to_run_config())
        failures = [f for table in tables.values() for f in table.failures]
        return TableResponse(success=not failures, tables=tables, error="; ".join(failures) or None)

    except (SabrLabError, ValueError) as e:
        return TableResponse(
            success=False,
            error=str(e)
        )


@router.post("/payoff", response_model=TableResponse)
async def payoff(request: PayoffRequest):
    """
    Samples of g(u), g0(u), g_inf(u) and G(u + i imag).
    """
    table_service = get_table_service()

    try:
        tables = table_service.build(request.to_run_config())
        failures = [f for table in tables.values() for f in table.failures]
        return TableResponse(success=not failures, tables=tables, error="; ".join(failures) or None)

    except (SabrLabError, ValueError) as e:
        return TableResponse(
            success=False,
            error=str(e)
        )


@router.post("/kernel", response_model=TableResponse)
async def kernel(request: KernelRequest):
    """
    Samples of the McKean kernel tail G(T, s).
    """
    table_service = get_table_service()

    try:
        tables = table_service.build(request.to_run_config())
        failures = [f for table in tables.values() for f in table.failures]
        return TableResponse(success=not failures, tables=tables, error="; ".join(failures) or None)

    except (SabrLabError, ValueError) as e:
        return TableResponse(
            success=False,
            error=str(e)
        )
