from typing import List

from pydantic import BaseModel, Field


class WaveOperatorPoint(BaseModel):
    """Classical modified wave-operator data of one seed."""

    x0: List[float]
    xi0: List[float]
    xi_plus: List[float]
    x_plus: List[float]
    z_plus: List[complex] = Field(description="x_plus - i xi_plus")
    extrapolation_error: float = Field(description="Worst ladder deviation from the h^sigma fit")
    ladder: List[float] = Field(description="h of each ladder point")
    values: List[List[float]] = Field(description="x(T/h) - d_xi W~(T/h, xi(T/h)) per ladder point")
    doubled_x_plus: List[float] = Field(description="Same limit recomputed with horizon 2T")
    doubled_error: float
    T: float


class ShortRangeReport(BaseModel):
    """Behaviour of y(T) - T eta(T) along a horizon grid."""

    T_grid: List[float]
    positions: List[float] = Field(description="y(T) - T eta(T) per horizon")
    momenta: List[float] = Field(description="eta(T) per horizon")
    drifts: List[float] = Field(description="|difference| between consecutive horizons")
    converged: bool
    position_limit: float
    momentum_limit: float


class HomogeneityReport(BaseModel):
    """xi_plus(x0, lambda xi0) against lambda xi_plus(x0, xi0)."""

    lambdas: List[float]
    xi_plus: List[float]
    gaps: List[float]
    allowed: float
    passed: bool
