from dataclasses import dataclass
from typing import Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

FamilyName = Literal["flat", "bump", "drift", "potential"]


class MetricFamily(BaseModel):
    """Closed-form analytic coefficient family (a_jk, a_j, a_0)."""

    model_config = ConfigDict(frozen=True)

    name: FamilyName = Field(description="Built-in family identifier")
    sigma: float = Field(0.5, gt=0.0, le=1.0, description="Decay exponent")
    nu: float = Field(0.3, gt=0.0, le=0.5, description="Half-aperture of the domain")
    C0: float = Field(1.0, gt=0.0, description="Constant of the coefficient bounds")
    params: Dict[str, float] = Field(default_factory=dict, description="Named reals, e.g. eps")
    dim: int = Field(1, ge=1, description="Space dimension n")

    @field_validator("params")
    def validate_params(cls, value):
        unknown = set(value) - {"eps"}
        if unknown:
            raise ValueError(f"unknown family parameters: {sorted(unknown)}")
        return value

    @property
    def eps(self) -> float:
        if self.name == "flat":
            return 0.0
        return float(self.params.get("eps", 0.0))

    @property
    def perturbed(self) -> bool:
        return self.eps != 0.0

    @property
    def h_dependent(self) -> bool:
        """True when q carries h q1 + h^2 q2 terms."""
        return self.perturbed and self.name in ("drift", "potential")

    @classmethod
    def flat(cls, dim: int = 1) -> "MetricFamily":
        return cls(name="flat", dim=dim)

    @classmethod
    def bump(cls, eps: float = 0.1, sigma: float = 0.5, **kwargs) -> "MetricFamily":
        return cls(name="bump", sigma=sigma, params={"eps": eps}, **kwargs)

    @classmethod
    def drift(cls, eps: float = 0.1, sigma: float = 0.5, **kwargs) -> "MetricFamily":
        return cls(name="drift", sigma=sigma, params={"eps": eps}, **kwargs)

    @classmethod
    def potential(cls, eps: float = 0.1, sigma: float = 0.5, **kwargs) -> "MetricFamily":
        return cls(name="potential", sigma=sigma, params={"eps": eps}, **kwargs)


class SymbolPoint(BaseModel):
    """Phase-space point (x, xi) with its semiclassical parameter."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: complex | list[complex] = Field(description="Position, complex n-vector")
    xi: complex | list[complex] = Field(description="Momentum, complex n-vector")
    h: float = Field(gt=0.0, le=1.0, description="Semiclassical parameter")

    def position(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.x, dtype=complex))

    def momentum(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.xi, dtype=complex))


@dataclass(frozen=True)
class CoefficientBundle:
    """Holomorphic coefficient values at one or many points."""

    metric: np.ndarray  # (..., n, n)
    drift: np.ndarray  # (..., n)
    potential: np.ndarray  # (...)


class AssumptionReport(BaseModel):
    """Sampled check of the coefficient bounds."""

    metric_ratio: float = Field(description="max |a_jk - delta_jk| / (C0 <x>^-sigma)")
    drift_ratio: float = Field(description="max |a_j| / (C0 <x>^(1-sigma))")
    potential_ratio: float = Field(description="max |a_0| / (C0 <x>^(2-sigma))")
    min_eigenvalue: float = Field(description="Smallest eigenvalue of a_jk on real samples")
    samples: int
    worst_sample: Optional[list[float]] = Field(None, description="[Re x, Im x] of the worst ratio")
    passed: bool
