from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator


class StrictModel(BaseModel):
    """Base for every config block: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class SymbolsSection(StrictModel):
    """Sampling of the coefficient domain for the Assumption A check."""

    safety: float = Field(gt=0.0, le=1.0, description="Fraction of nu used as the domain margin")
    grid_points: int = Field(ge=4, description="Samples per axis")
    R_max: float = Field(gt=0.0, description="Largest |Re x| sampled")


class FlowSection(StrictModel):
    """Hamilton flow integration knobs."""

    tol: float = Field(gt=0.0, lt=1e-3, description="Integrator tolerance budget")
    s_max: float = Field(gt=0.0, description="Longest rescaled time integrated")
    s_probe: float = Field(gt=0.0, description="Horizon of the non-trapping probe")
    probe_samples: int = Field(ge=16, description="Samples on the probe horizon")
    T: float = Field(gt=0.0, description="Physical horizon used for limits")
    h_ladder: List[float] = Field(min_length=2, description="Semiclassical ladder")

    @field_validator("h_ladder")
    def validate_ladder(cls, value):
        if any(h <= 0.0 or h > 1.0 for h in value):
            raise ValueError("ladder values must lie in (0, 1]")
        if sorted(value, reverse=True) != list(value):
            raise ValueError("ladder must be decreasing")
        return value


class PhaseSection(StrictModel):
    """Reference ray, Newton inversion and W cache knobs."""

    delta0: float = Field(gt=0.0, description="Momentum floor")
    Xi_max: float = Field(gt=0.0, description="Largest momentum kept in the W cache")
    R_start: float = Field(gt=0.0)
    R_cap: float = Field(gt=0.0)
    jacobian_budget: float = Field(gt=0.0, lt=1.0)
    momentum_samples: int = Field(ge=2)
    newton_tol: float = Field(gt=0.0)
    max_iter: int = Field(ge=1)
    fd_step: float = Field(gt=0.0, description="Step of the Hessian finite differences")
    newton_fd_step: float = Field(gt=0.0, description="Step of the Newton Jacobian")
    flow_tol: float = Field(gt=0.0)
    s_knots: int = Field(ge=2)
    xi_knots: int = Field(ge=4, description="Knots per momentum branch")
    eikonal_tol: float = Field(gt=0.0)


class FbiSection(StrictModel):
    """Bargmann transform, decay fit and Op_R quadrature knobs."""

    h_ladder: List[float] = Field(min_length=4)
    delta_star: float = Field(gt=0.0)
    neighborhood: float = Field(ge=0.0)
    R: float = Field(gt=0.0)
    tail_L: float = Field(gt=0.0)
    radial_nodes: int = Field(ge=4)
    angular_nodes: int = Field(ge=4)
    quad_nodes: int = Field(ge=8)


class ModevolSection(StrictModel):
    """Modified free evolution knobs."""

    r: float = Field(gt=0.0)
    eps1: float = Field(gt=0.0)
    quad_nodes: int = Field(ge=8)
    ds: float = Field(gt=0.0)
    symbol_R: float = Field(gt=0.0)
    roundtrip_radius: float = Field(gt=0.0)
    taper: float = Field(gt=0.0)


class ContoursSection(StrictModel):
    """Deformation certificate knobs."""

    R: float = Field(gt=0.0)
    r: float = Field(gt=0.0)
    samples: int = Field(ge=16)
    eps: float = Field(gt=0.0)
    t_grid: List[float] = Field(min_length=2)
    s_grid: List[float] = Field(min_length=1)
    quad_nodes: int = Field(ge=4)

    @field_validator("t_grid")
    def validate_t_grid(cls, value):
        if any(t < 0.0 or t > 1.0 for t in value):
            raise ValueError("deformation parameters must lie in [0, 1]")
        return value


class SchrodingerSection(StrictModel):
    """Propagator knobs."""

    sponge_fraction: float = Field(ge=0.1, lt=0.5)
    sponge_strength: float = Field(gt=0.0)
    mass_threshold: float = Field(gt=0.0)
    norm_tol: float = Field(gt=0.0)
    fixed_point_tol: float = Field(gt=0.0)
    fixed_point_max_iter: int = Field(ge=1)
    stability: float = Field(gt=0.0, le=1.0)
    ballistic_factor: float = Field(ge=1.0)
    energy_tol: float = Field(gt=0.0)
    richardson_tol: float = Field(gt=0.0)
    reversal_tol: float = Field(gt=0.0)
    adjoint_tol: float = Field(gt=0.0)


class DetectorSection(StrictModel):
    """Equivalence detector knobs."""

    h_ladder: List[float] = Field(min_length=4)
    delta_sweep: List[float] = Field(min_length=1)
    readout_points: int = Field(ge=1)
    floor_phase: Literal["identity", "free"] = Field(
        "free", description="Phase below the momentum floor: none, or the free phase s xi^2/2"
    )


class LabDefaults(StrictModel):
    """Every numerical section, as read from lab_defaults.toml."""

    symbols: SymbolsSection
    flow: FlowSection
    phase: PhaseSection
    fbi: FbiSection
    modevol: ModevolSection
    contours: ContoursSection
    schrodinger: SchrodingerSection
    detector: DetectorSection


class FamilyConfig(StrictModel):
    """Built-in coefficient family selection."""

    name: Literal["flat", "bump", "drift", "potential"]
    sigma: float = Field(gt=0.0, le=1.0, description="Decay exponent of the perturbation")
    nu: float = Field(0.3, gt=0.0, le=0.5, description="Half-aperture of the domain")
    C0: float = Field(1.0, gt=0.0, description="Constant of the coefficient bounds")
    eps: float = Field(0.1, ge=-0.2, le=0.2, description="Perturbation amplitude")
    dim: int = Field(1, ge=1, description="Space dimension")


class HeavisideConfig(StrictModel):
    """Jump at x_k, optionally windowed and mollified."""

    kind: Literal["heaviside"]
    x_k: float = 0.0
    window: Optional[float] = Field(2.0, gt=0.0, description="Gaussian window width")
    edge: Optional[float] = Field(None, gt=0.0, description="erfc mollification width")


class GaussianConfig(StrictModel):
    """Gaussian packet with carrier momentum xi_c (frequency xi_c/h)."""

    kind: Literal["gaussian"]
    center: float = 0.0
    xi_c: float = 1.0
    width: Optional[float] = Field(None, gt=0.0, description="Fixed variance; coherent when absent")


class KinkConfig(StrictModel):
    """|x - x_k| times a Gaussian window."""

    kind: Literal["kink"]
    x_k: float = 0.0
    window: Optional[float] = Field(2.0, gt=0.0)


U0Config = Annotated[
    Union[HeavisideConfig, GaussianConfig, KinkConfig], Field(discriminator="kind")
]


class SeedConfig(StrictModel):
    """Phase-space point probed by the detector."""

    x0: float
    xi0: float


class ScenarioModel(StrictModel):
    """A full scenario: family, data, seed and every numerical section."""

    version: Literal[1]
    name: str = "scenario"
    family: FamilyConfig
    u0: U0Config
    seed: SeedConfig
    t: float = Field(gt=0.0, description="Physical evolution time")
    delta0: Optional[float] = Field(None, gt=0.0)
    expected_verdict: Optional[bool] = None
    time_reversal: bool = False
    symbols: SymbolsSection
    flow: FlowSection
    phase: PhaseSection
    fbi: FbiSection
    modevol: ModevolSection
    contours: ContoursSection
    schrodinger: SchrodingerSection
    detector: DetectorSection

    @property
    def floor(self) -> float:
        return self.delta0 if self.delta0 is not None else self.phase.delta0
