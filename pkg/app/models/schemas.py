"""
SABR Series Lab - Pydantic Models (Schemas)
Domain, result, request and response models shared by the services, CLI and API.
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import Settings, get_settings


# ============ Enums ============
class Quadrant(str, Enum):
    """Quadrants of the strip |Im u| < pi used by the complex continuation."""
    Q1 = "Q1"
    Q2 = "Q2"
    Q3 = "Q3"
    Q4 = "Q4"


class OutputFormat(str, Enum):
    """Table output formats."""
    CSV = "csv"
    JSON = "json"


class RootTestMode(str, Enum):
    """payoff: radius in u from |a_n|^(-1/(2n)); value: radius in T from |b_n|^(-1/n)."""
    PAYOFF = "payoff"
    VALUE = "value"


class Command(str, Enum):
    """CLI subcommands / API tables."""
    PRICE = "price"
    SERIES = "series"
    DIVERGE = "diverge"
    SCALING = "scaling"
    PAYOFF = "payoff"
    KERNEL = "kernel"


# ============ Domain Models ============
class ModelParams(BaseModel):
    """Uncorrelated (rho=0) log-normal (beta=1) SABR parameters."""
    model_config = ConfigDict(frozen=True)

    sigma0: float = Field(..., gt=0, description="Initial volatility")
    omega: float = Field(1.0, gt=0, description="Volatility of volatility")
    S0: float = Field(1.0, gt=0, description="Spot")
    K: Optional[float] = Field(None, gt=0, description="Strike, defaults to S0 (ATM)")

    @property
    def strike(self) -> float:
        return self.S0 if self.K is None else self.K

    @property
    def is_atm(self) -> bool:
        return self.strike == self.S0

    @property
    def unit_sigma0(self) -> float:
        """sigma0 expressed in omega = 1 units."""
        return self.sigma0 / self.omega

    def rescaled(self, T: float) -> Tuple["ModelParams", float]:
        """Equivalent (params, T) with omega = 1: sigma0 -> sigma0/omega, T -> omega^2 T."""
        if self.omega == 1.0:
            return self, T
        unit = self.model_copy(update={"sigma0": self.sigma0 / self.omega, "omega": 1.0})
        return unit, self.omega * self.omega * T

    @property
    def s_minus(self) -> float:
        """Lower hyperbolic distance: sinh(s_-) = |log(K/S0)| / sigma0 (omega = 1 units)."""
        return math.asinh(abs(math.log(self.strike / self.S0)) / self.unit_sigma0)


class QuadSpec(BaseModel):
    """Quadrature configuration."""
    model_config = ConfigDict(frozen=True)

    abs_tol: float = Field(1e-12, gt=0)
    rel_tol: float = Field(1e-10, gt=0)
    u_max: Optional[float] = Field(None, gt=0, description="Upper u cutoff; None picks max(8 sqrt T, pi) + margin")
    u_margin: float = Field(1.0, ge=0)
    osc_split: bool = Field(True, description="Split the s-range at zeros of the sine factor")
    osc_threshold: float = Field(50.0, gt=0)
    max_subdiv: int = Field(200, ge=1)

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides) -> "QuadSpec":
        settings = settings or get_settings()
        values = dict(
            abs_tol=settings.abs_tol,
            rel_tol=settings.rel_tol,
            u_margin=settings.u_margin,
            osc_threshold=settings.osc_threshold,
            max_subdiv=settings.max_subdiv,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# ============ Result Models ============
class PriceResult(BaseModel):
    """Option time value with an error estimate."""
    value: float
    abs_err_est: float = Field(..., ge=0)
    method: str = Field(..., description="quadrature, series(N) or double_integral")


class ImpliedVolResult(BaseModel):
    """Black-Scholes ATM implied volatility."""
    sigma_bs: float = Field(..., gt=0)
    iterations: int = Field(..., ge=0)
    residual: float = Field(..., ge=0)


class TruncationReport(BaseModel):
    """Optimal truncation of the value series at one maturity (terms on the normalized V scale)."""
    T: float = Field(..., gt=0)
    N_star: int = Field(..., ge=0, description="Order whose first neglected term is smallest")
    eps_star: float = Field(..., ge=0, description="Magnitude of that first neglected term")
    bound: float = Field(..., ge=0, description="Analytic bound on the optimal truncation error")
    N_star_estimate: float = Field(..., description="e*pi^2/(2T)")
    N_star_turning: float = Field(..., description="pi^2/(2T), where successive terms stop decreasing")
    terms: List[float]
    partial_sums: List[float]
    reference: Optional[float] = Field(None, description="Quadrature value, when computed")


class ScalingState(BaseModel):
    """Large-sigma0 scaling limit at fixed tau."""
    model_config = ConfigDict(populate_by_name=True)

    tau: float = Field(..., ge=0)
    lam: float = Field(..., ge=0, lt=math.pi / 2, alias="lambda")
    sigma_hat_sq: float
    phi_saddle: float
    C_saddle: Optional[float] = Field(None, description="Saddle prefactor, undefined at tau = 0")


class RadiusResult(BaseModel):
    """Convergence radius of the scaled implied-variance series."""
    y0: float
    tau0: float
    T_c_times_omega_sigma0: float

    def T_c(self, omega: float, sigma0: float) -> float:
        return self.T_c_times_omega_sigma0 / (omega * sigma0)


class ScalingCheckRow(BaseModel):
    """One sigma0 of the covered-call exponent check."""
    sigma0: float
    T: float
    covered_call: float
    exponent: float
    corrected_exponent: float
    target: float
    rel_err: float
    rel_err_corrected: float


# ============ Run configuration ============
class RunConfig(BaseModel):
    """Everything one CLI/API table run needs."""
    command: Command
    T: List[float] = Field(default_factory=lambda: [0.5])
    sigma0: List[float] = Field(default_factory=lambda: [0.3])
    omega: List[float] = Field(default_factory=lambda: [1.0])
    tau: List[float] = Field(default_factory=lambda: [0.5])
    K: Optional[List[float]] = None
    S0: float = Field(1.0, gt=0)
    u: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    imag: List[float] = Field(default_factory=lambda: [0.0])
    s: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0])
    order: int = Field(24, ge=0)
    format: OutputFormat = OutputFormat.CSV
    out: Optional[str] = None
    tol: Optional[float] = Field(None, gt=0)
    umax: Optional[float] = Field(None, gt=0)
    atm: bool = False
    workers: int = Field(1, ge=1)

    @field_validator("T", "sigma0", "omega", "tau", "K", "u", "imag", "s")
    @classmethod
    def _strictly_increasing(cls, grid: Optional[List[float]]) -> Optional[List[float]]:
        if grid is None:
            return grid
        if not grid:
            raise ValueError("grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        return grid

    @field_validator("T", "sigma0", "omega", "K")
    @classmethod
    def _positive(cls, grid: Optional[List[float]]) -> Optional[List[float]]:
        if grid is not None and any(v <= 0 for v in grid):
            raise ValueError("values must be positive")
        return grid

    @model_validator(mode="after")
    def _order_cap(self) -> "RunConfig":
        cap = get_settings().max_series_order
        if self.order > cap:
            raise ValueError(f"order {self.order} exceeds the configured maximum {cap}")
        return self

    def quad_spec(self) -> QuadSpec:
        overrides: Dict[str, Any] = {"u_max": self.umax}
        if self.tol is not None:
            overrides.update(abs_tol=self.tol, rel_tol=self.tol)
        return QuadSpec.from_settings(**overrides)

    def echo(self) -> str:
        """One-line config echo for table comment lines."""
        fields = self.model_dump(mode="json", exclude={"out", "workers"})
        return " ".join(f"{k}={v}" for k, v in fields.items())


# ============ Tables ============
Cell = Union[float, int, str, None]


class Table(BaseModel):
    """Column-named rows plus the config echo."""
    columns: List[str]
    rows: List[List[Cell]]
    comment: str = ""
    failures: List[str] = Field(default_factory=list, description="Diagnostics for rows that failed numerically")


# ============ Request Models ============
class PriceRequest(BaseModel):
    """Request model for the price table."""
    T: List[float] = Field(..., min_length=1)
    sigma0: List[float] = Field(..., min_length=1)
    omega: List[float] = Field(default_factory=lambda: [1.0])
    K: Optional[List[float]] = None
    S0: float = Field(1.0, gt=0)
    tol: Optional[float] = Field(None, gt=0)
    umax: Optional[float] = Field(None, gt=0)

    model_config = ConfigDict(json_schema_extra={
        "example": {"T": [0.25, 0.5], "sigma0": [0.3], "omega": [1.0], "S0": 1.0}
    })

    def to_run_config(self) -> RunConfig:
        return RunConfig(command=Command.PRICE, atm=self.K is None, **self.model_dump())


class SeriesRequest(BaseModel):
    """Request model for the coefficient tables."""
    order: int = Field(12, ge=0)
    sigma0: List[float] = Field(default_factory=lambda: [0.5])

    def to_run_config(self) -> RunConfig:
        return RunConfig(command=Command.SERIES, **self.model_dump())


class DivergeRequest(BaseModel):
    """Request model for the divergence diagnostics."""
    T: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0])
    sigma0: List[float] = Field(default_factory=lambda: [0.5])
    order: int = Field(20, ge=1)

    def to_run_config(self) -> RunConfig:
        return RunConfig(command=Command.DIVERGE, **self.model_dump())


class ScalingRequest(BaseModel):
    """Request model for the scaling-limit tables."""
    tau: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5])
    sigma0: List[float] = Field(default_factory=lambda: [25.0, 50.0])
    order: int = Field(20, ge=2)

    def to_run_config(self) -> RunConfig:
        return RunConfig(command=Command.SCALING, **self.model_dump())


class PayoffRequest(BaseModel):
    """Request model for payoff samples."""
    u: List[float] = Field(..., min_length=1)
    sigma0: List[float] = Field(default_factory=lambda: [0.5])
    imag: List[float] = Field(default_factory=lambda: [0.0])

    def to_run_config(self) -> RunConfig:
        return RunConfig(command=Command.PAYOFF, **self.model_dump())


class KernelRequest(BaseModel):
    """Request model for McKean tail samples."""
    T: List[float] = Field(..., min_length=1)
    s: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0])

    def to_run_config(self) -> RunConfig:
        return RunConfig(command=Command.KERNEL, **self.model_dump())


# ============ Response Models ============
class TableResponse(BaseModel):
    """Response model for every table endpoint."""
    success: bool
    tables: Optional[Dict[str, Table]] = None
    error: Optional[str] = None


class HealthResponse(BaseModel):
    """Response model for health check."""
    status: str
    version: str
    max_series_order: int
