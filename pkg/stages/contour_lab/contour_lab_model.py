from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

DeformationKind = Literal["A1", "A2"]


class DeformationFamily(BaseModel):
    """A t-family of contours interpolating between two good contours at fixed z."""

    model_config = ConfigDict(frozen=True)

    kind: DeformationKind
    t_grid: List[float] = Field(description="Deformation parameters in [0, 1]")
    s_grid: List[float]
    z: complex = Field(description="Readout point (the centre z+ for A2)")
    radius: float = Field(gt=0.0, description="Sampling radius r'' (A1) or r0 (A2)")
    R: Optional[float] = Field(None, gt=0.0, description="Transversal stiffness of the A1 contours")
    eps: Optional[float] = Field(None, gt=0.0, description="Size of Omega_s(z+, eps) for A2")

    @staticmethod
    def bracket(s: float) -> float:
        return float(np.sqrt(1.0 + s * s))

    def rho(self, t: float, s: float) -> float:
        """sqrt((1 - t) <s>^-2 + t), the A2 interpolation of the real-direction scale."""
        return float(np.sqrt((1.0 - t) / (1.0 + s * s) + t))


class DeformationSample(BaseModel):
    """The sampled certificate for one (t, s) pair (and one readout z)."""

    kind: DeformationKind
    t: float
    s: float
    z: complex
    delta: float = Field(description="Sampled infimum of -phase / norm^2")
    boundary: float = Field(description="min over the rim of -phase")
    containment: Optional[float] = Field(None, description="min of nu <Re w> - |Im w|, w = y + W~1")
    endpoint_gap: Optional[float] = Field(None, description="Distance to the endpoint contour at t = 0, 1")
    worst_point: List[float] = Field(description="Real coordinates of the worst interior sample")
    closed_form: Optional[float] = Field(None, description="Exact infimum when the phase is quadratic")


class DeformationReport(BaseModel):
    """Certificates over the (t, s) grid."""

    family: DeformationFamily
    samples: int
    rows: List[DeformationSample]
    delta_by_s: Dict[float, float] = Field(description="min over t and z of delta at each s")
    stable: bool = Field(description="delta_by_s within 30% of its mean")
    bracketed: bool = Field(description="interior t never drops below the endpoint values")
    linearization_gap: Optional[float] = Field(
        None, description="A1 only: largest miss of the t = 0 momentum relation of gamma(s, z')"
    )

    @property
    def delta(self) -> float:
        return min(row.delta for row in self.rows)
