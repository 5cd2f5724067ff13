from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field


@dataclass(frozen=True)
class Trajectory:
    """Samples of exp sH_q from one start."""

    s: np.ndarray  # (k,)
    x: np.ndarray  # (k, n) complex
    xi: np.ndarray  # (k, n) complex
    q_drift: np.ndarray  # (k,) relative energy drift at each sample
    h: float
    principal: bool

    @property
    def energy_drift(self) -> float:
        return float(np.max(self.q_drift)) if self.q_drift.size else 0.0

    @property
    def start(self):
        return self.x[0], self.xi[0]


@dataclass(frozen=True)
class BatchFlow:
    """States of many starts integrated together; axis order (sample, start, dim)."""

    s: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    action: Optional[np.ndarray]  # (k, m) integral of q - x . d_x q, when requested
    energy_drift: float


class NontrappingReport(BaseModel):
    """Outcome of the convexity and linear-growth probe."""

    nontrapping: bool
    s0: Optional[float] = Field(None, description="First probed time meeting the convexity criterion")
    C: float = Field(description="Constant used in the criterion")
    min_growth_margin: Optional[float] = Field(
        None, description="min of |x|^2 - (s - s0)^2 / (2 C_eff) beyond s0"
    )
    growth_constant: float = Field(description="Smallest C with |x(s)| >= s/C - C on the probe")
    upper_constant: float = Field(description="Smallest C with |x(s)| <= C(s + 1) on the probe")


class AsymptoticData(BaseModel):
    """Momentum limit and fitted rates of one start."""

    xi_plus: List[float]
    nontrapping: bool
    growth_constant: float
    momentum_rate: float = Field(description="Fitted exponent of |xi(s) - xi_plus| against s")
    upper_constant: float
    tail_error: float = Field(description="Max deviation of the tail fit")
    ladder_limit: List[float] = Field(description="h -> 0 extrapolation of xi(T/h; h)")
    ladder_error: float
    ladder_values: List[List[float]]
    growth_by_h: List[float]


class DeviationReport(BaseModel):
    """Distance between the q-flow and the q0-flow in the natural scales."""

    h: float
    T: float
    position_ratio: float = Field(description="sup |x - y| / (h <s>^(2-sigma))")
    momentum_ratio: float = Field(description="sup |xi - eta| / (h <s>^(1-sigma))")
