from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from stages.fbi_quantize.fbi_quantize_model import DecayEstimate


class Verdict(BaseModel):
    """Both sides of the equivalence at one seed, with their delta maps."""

    scenario: str
    family: str
    seed: List[float] = Field(description="(x0, xi0) as stated in the scenario")
    t: float
    time_reversal: bool
    delta0: float
    delta_star: float
    h_ladder: List[float]
    z_plus: complex
    xi_plus: float
    lhs_delta: float = Field(description="min delta of T u0 around x0 - i xi0")
    rhs_delta: float = Field(description="min delta of the modified evolution around z_plus")
    lhs_regular: bool
    rhs_decays: bool
    agreement: bool
    expected_verdict: Optional[bool] = Field(None, description="Expected regularity of the seed")
    matches_expected: Optional[bool] = None
    floored_points: Dict[str, int] = Field(
        default_factory=dict, description="Readout points below the transform resolution floor"
    )
    flat_collapse_gap: Optional[float] = Field(
        None, description="max | |rhs| - |T u0| | / |T u0| at z_plus over the ladder, flat family"
    )
    delta_sweep: Dict[float, bool] = Field(default_factory=dict, description="rhs_decays per swept delta0")
    lhs_map: DecayEstimate
    rhs_map: DecayEstimate

    @property
    def margins(self) -> Dict[str, float]:
        return {"lhs": self.lhs_delta - self.delta_star, "rhs": self.rhs_delta - self.delta_star}

    @property
    def sweep_consistent(self) -> bool:
        return all(v == self.rhs_decays for v in self.delta_sweep.values())

    @property
    def passed(self) -> bool:
        return self.agreement and self.matches_expected is not False and self.sweep_consistent

    def record(self) -> dict:
        """JSON verdict record without the delta maps."""
        out = self.model_dump(mode="json", exclude={"lhs_map", "rhs_map"})
        out["margins"] = self.margins
        out["sweep_consistent"] = self.sweep_consistent
        out["passed"] = self.passed
        return out


class ConjugationReport(BaseModel):
    """Decay of the conjugated symbol l0 along the s grid."""

    s_grid: List[float]
    sup_l0: List[float] = Field(description="sup of |l0| over the sample ball at each s")
    exponent: float = Field(description="Fitted decay exponent against <s>; inf when l0 vanishes")
    required: float
    coupled: bool = Field(description="True when l0 at s is evaluated with h = T/s")
    b0_gap: float = Field(description="max relative gap between b0 at zeta = -Im z and q0 on the real phase space")
    phase_h: List[float] = Field(default_factory=list, description="h of the W cache read at each s")
    passed: bool


class FactorizationReport(BaseModel):
    """kappa R_{t/h} kappa^-1 along the ladder and its h -> 0 limit."""

    h_ladder: List[float]
    values: List[complex] = Field(description="x(t/h) - d W~(t/h, xi(t/h)) - i xi(t/h) per h")
    limit: complex
    error: float
    reference: Optional[complex] = Field(None, description="z_plus of the wave operator, when compared")
    gap: Optional[float] = None
    allowed: Optional[float] = None
