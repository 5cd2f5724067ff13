from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from stages.fbi_quantize.fbi_quantize_model import GridData


class PropagatorConfig(BaseModel):
    """Periodic grid on [-L, L) with an absorbing layer of width sponge_width at both ends."""

    model_config = ConfigDict(frozen=True)

    L: float = Field(gt=0.0)
    N: int = Field(ge=16, description="Grid points, a power of two")
    dt: float = Field(description="Signed time step")
    steps: int = Field(ge=0)
    sponge_width: float = Field(gt=0.0)
    sponge_strength: float = Field(gt=0.0)
    method: Literal["strang-midpoint"] = "strang-midpoint"
    boundary: Literal["periodic-sponge"] = "periodic-sponge"

    @field_validator("N")
    def validate_N(cls, value):
        if value & (value - 1):
            raise ValueError("N must be a power of two")
        return value

    @model_validator(mode="after")
    def validate_sponge(self):
        if self.sponge_width < 0.1 * self.L - 1e-12 or self.sponge_width >= self.L:
            raise ValueError("sponge width must lie in [0.1 L, L)")
        return self

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.N, self.dx)

    @property
    def t(self) -> float:
        return self.dt * self.steps

    def refined(self) -> "PropagatorConfig":
        """Twice the points and twice the steps on the same domain."""
        return self.model_copy(update={"N": 2 * self.N, "dt": 0.5 * self.dt, "steps": 2 * self.steps})

    def reversed(self) -> "PropagatorConfig":
        return self.model_copy(update={"dt": -self.dt})


@dataclass(frozen=True)
class PropagationRun:
    """Samples of u0 and of the propagated wave on the config grid."""

    family: str
    config: PropagatorConfig
    u0: np.ndarray
    u: np.ndarray
    absorbed: float  # mass removed by the sponge, signed for backward runs
    sponge_mass: float  # largest mass seen inside the sponge layer
    iterations: int  # largest fixed-point count of a step
    norm_operator: float  # bound on ||P - i sponge|| used for the step cap

    @property
    def x(self) -> np.ndarray:
        return self.config.x

    @property
    def t(self) -> float:
        return self.config.t

    def mass(self, values: Optional[np.ndarray] = None) -> float:
        values = self.u if values is None else values
        return float(np.sum(np.abs(values) ** 2) * self.config.dx)

    def as_data(self) -> GridData:
        return GridData(y=self.x, values=self.u)


class UnitarityReport(BaseModel):
    """Norm and energy bookkeeping of one run."""

    t: float
    mass0: float
    absorbed: float
    norm_drift: float = Field(description="| |u(t)|^2 + absorbed - |u0|^2 | / |u0|^2")
    energy0: float
    energy_drift: float = Field(description="|<u, Hu>(t) - <u, Hu>(0)| / |<u, Hu>(0)|")
    norm_tol: float
    energy_tol: float
    passed: bool


class PropagatorCheck(BaseModel):
    """A scalar residual of the propagator against its tolerance."""

    name: str
    residual: float
    tolerance: float
    passed: bool
    details: dict = Field(default_factory=dict)


class EhrenfestReport(BaseModel):
    """Centre of |u(t)|^2 against the classical position exp(t/h H_q)(x0, xi0)."""

    h: float
    t: float
    center: float
    classical: float
    deviation: float
    bound: float = Field(description="sqrt(h)")
    passed: bool
