from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ReferenceConfig(BaseModel):
    """Reference ray X_delta(xi) = (R_delta xi/|xi|, xi) and its certificates."""

    model_config = ConfigDict(frozen=True)

    delta0: float = Field(gt=0.0, description="Momentum floor")
    delta: float = Field(gt=0.0, description="Lower edge of the source momenta")
    R_delta: float = Field(gt=0.0, description="Reference radius")
    h: float = Field(gt=0.0, le=1.0)
    s_horizon: float = Field(ge=0.0, description="Largest s the certificates were sampled on")
    jacobian_defect: float = Field(0.0, description="Sampled max |d xi(s)/d eta - 1|")
    coverage: float = Field(0.0, description="Sampled max |J_s(+-delta)|")


@dataclass(frozen=True)
class PhaseTable:
    """Knot values of W, x_hat = d_xi W and A = d_xi^2 W on both momentum branches."""

    s_knots: np.ndarray  # (K,)
    xi_knots: np.ndarray  # (M,) sorted, negative branch first
    W: np.ndarray  # (K, M)
    grad: np.ndarray  # (K, M)
    hess: np.ndarray  # (K, M)
    gradient_identity: np.ndarray  # (K, M) |FD d_xi W - x_hat| / max(1, |x_hat|)


class WEvaluation(BaseModel):
    """W and its momentum derivatives at one (s, xi)."""

    s: float
    xi: float
    W: float
    gradW: float
    hessW: float
    Wtilde: float


class EikonalReport(BaseModel):
    """max <s>^(1+sigma) |d_s W - q(d_xi W, xi; h)| on a grid."""

    max_normalized: float
    tol: float
    passed: bool
    worst_s: float
    worst_xi: float
    step: float = Field(description="Largest s-step used by the differences")
    points: int


class PhaseGrowth(BaseModel):
    """Growth of the momentum derivatives of W on the knots."""

    max_grad_ratio: float = Field(description="max |d_xi W| / <s> over s > 0 knots")
    max_hess_ratio: float = Field(description="max |d_xi^2 W| / <s> over s > 0 knots")
    max_gradient_identity: float
