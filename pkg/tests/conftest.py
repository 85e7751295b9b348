import pytest

from app.models.schemas import ModelParams, QuadSpec


@pytest.fixture
def quad() -> QuadSpec:
    return QuadSpec.from_settings()


@pytest.fixture
def tight_quad() -> QuadSpec:
    """Tolerances for exponentially small values (covered calls at large sigma0)."""
    return QuadSpec.from_settings(abs_tol=1e-15, rel_tol=1e-13)


@pytest.fixture
def params() -> ModelParams:
    return ModelParams(sigma0=0.5)
