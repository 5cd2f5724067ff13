import logging
import math
from typing import Optional

import numpy as np
from scipy.fft import fft, ifft

from internal.config.config_model import SchrodingerSection
from internal.config.config_service import get_lab_defaults
from internal.dependencies.errors import (
    PreconditionViolated,
    StepSolverDiverged,
    WaveHitSponge,
)
from internal.numerics.quadrature import smooth_step
from stages.fbi_quantize.fbi_quantize_model import Packet, SampledFunction
from stages.flow.flow_service import HamiltonFlow
from stages.symbols.symbols_model import MetricFamily
from stages.symbols.symbols_service import eval_coeffs

from .schrodinger_model import (
    EhrenfestReport,
    PropagationRun,
    PropagatorCheck,
    PropagatorConfig,
    UnitarityReport,
)

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

SNAPSHOT_HEADER = ["x", "re_u", "im_u"]
REACH_SAMPLES = 201


def _schrodinger_settings(settings: Optional[SchrodingerSection]) -> SchrodingerSection:
    return settings if settings is not None else get_lab_defaults().schrodinger


class SchrodingerOperator:
    """H = 1/2 D a D + 1/2 (a1 D + D a1) + a0 on a PropagatorConfig grid, D = -i d/dx spectrally.

    Every piece is a real multiplier or the Hermitian multiplier k, so the
    discrete H is symmetric in the grid inner product.
    """

    def __init__(self, fam: MetricFamily, config: PropagatorConfig):
        self.fam = fam
        self.config = config
        x = config.x
        coeffs = eval_coeffs(fam, x, safety=1.0)
        self.metric = coeffs.metric[:, 0, 0].real
        self.drift = coeffs.drift[:, 0].real
        self.potential = coeffs.potential.real
        self.k = config.k
        inner = config.L - config.sponge_width
        self.sponge = config.sponge_strength * smooth_step((np.abs(x) - inner) / config.sponge_width)
        self.in_sponge = np.abs(x) > inner
        self.trivial = not (
            np.any(self.metric != 1.0) or np.any(self.drift != 0.0) or np.any(self.potential != 0.0)
        )

    def D(self, u: np.ndarray) -> np.ndarray:
        return ifft(self.k * fft(u))

    def apply_P(self, u: np.ndarray) -> np.ndarray:
        """H - D^2/2."""
        if self.trivial:
            return np.zeros_like(u)
        du = self.D(u)
        out = 0.5 * self.D((self.metric - 1.0) * du) + self.potential * u
        if np.any(self.drift != 0.0):
            out = out + 0.5 * (self.drift * du + self.D(self.drift * u))
        return out

    def apply_H(self, u: np.ndarray) -> np.ndarray:
        return 0.5 * ifft(self.k**2 * fft(u)) + self.apply_P(u)

    def free(self, u: np.ndarray, tau: float) -> np.ndarray:
        """exp(-i tau D^2 / 2)."""
        return ifft(np.exp(-0.5j * tau * self.k**2) * fft(u))

    def norm_bound(self) -> float:
        """Upper bound on ||P - i sponge|| over the grid frequencies."""
        k_max = np.pi / self.config.dx
        return float(
            0.5 * np.max(np.abs(self.metric - 1.0)) * k_max**2
            + np.max(np.abs(self.drift)) * k_max
            + np.max(np.abs(self.potential))
            + self.config.sponge_strength
        )

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.vdot(u, v) * self.config.dx)

    def energy(self, u: np.ndarray) -> float:
        return self.inner(u, self.apply_H(u)).real


def _capped(config: PropagatorConfig, norm: float, stability: float) -> PropagatorConfig:
    """Raise the step count until |dt| ||P|| <= stability."""
    t = config.t
    if abs(config.dt) * norm <= stability or t == 0.0:
        return config
    steps = max(config.steps, math.ceil(abs(t) * norm / stability))
    return config.model_copy(update={"steps": steps, "dt": t / steps})


def ballistic_reach(fam: MetricFamily, u0: SampledFunction, t: float, h_min: float, xi_edge: float) -> float:
    """max |x(s)| along the q-flow from the support ends with momenta +-xi_edge up to s = |t|/h_min."""
    lo, hi = u0.support()
    if not (np.isfinite(lo) and np.isfinite(hi)):
        logger.error("Initial data without essential compact support")
        raise PreconditionViolated("u0 must be essentially compactly supported", {"support": [lo, hi]})
    s_end = abs(t) / h_min
    if s_end == 0.0:
        return float(max(abs(lo), abs(hi)))
    flow = HamiltonFlow(fam, h_min)
    x0 = np.array([lo, lo, hi, hi])
    xi0 = np.array([-xi_edge, xi_edge, -xi_edge, xi_edge])
    run = flow.run(x0, xi0, s_end, t_eval=np.linspace(0.0, s_end, REACH_SAMPLES), check_energy=False)
    return float(np.max(np.abs(run.x.real)))


def plan_propagator(
    fam: MetricFamily,
    u0: SampledFunction,
    t: float,
    h_min: float,
    settings: Optional[SchrodingerSection] = None,
    xi_max: Optional[float] = None,
) -> PropagatorConfig:
    """Grid and step for e^{-itH} u0 resolving momenta up to xi_max/h_min.

    dx <= min(sqrt(h_min)/8, pi h_min/(xi_max + 1)) and every grid frequency
    stays inside [-L + sponge, L - sponge] up to time |t|.
    """
    settings = _schrodinger_settings(settings)
    xi_max = get_lab_defaults().phase.Xi_max if xi_max is None else xi_max
    dx = min(math.sqrt(h_min) / 8.0, math.pi * h_min / (xi_max + 1.0))
    reach = ballistic_reach(fam, u0, t, h_min, math.pi * h_min / dx)
    L = settings.ballistic_factor * reach / (1.0 - settings.sponge_fraction)
    N = 1 << max(4, math.ceil(math.log2(2.0 * L / dx)))
    draft = PropagatorConfig(
        L=L,
        N=N,
        dt=t,
        steps=1 if t != 0.0 else 0,
        sponge_width=settings.sponge_fraction * L,
        sponge_strength=settings.sponge_strength,
    )
    config = _capped(draft, SchrodingerOperator(fam, draft).norm_bound(), settings.stability)
    logger.debug(f"Propagator grid: L={L:.2f}, N={N}, dt={config.dt:.3e}, steps={config.steps}")
    return config


def _midpoint(op: SchrodingerOperator, u: np.ndarray, dt: float, settings: SchrodingerSection):
    """One implicit-midpoint step of i u' = (P - i sponge) u by fixed-point iteration."""
    scale = max(float(np.linalg.norm(u)), 1e-300)
    m = u
    change = np.inf
    for iteration in range(1, settings.fixed_point_max_iter + 1):
        m_next = u - 0.5j * dt * (op.apply_P(m) - 1j * op.sponge * m)
        change = float(np.linalg.norm(m_next - m)) / scale
        m = m_next
        if not np.isfinite(change):
            break
        if change <= settings.fixed_point_tol:
            absorbed = 2.0 * dt * float(np.sum(op.sponge * np.abs(m) ** 2)) * op.config.dx
            return 2.0 * m - u, iteration, absorbed
    logger.error(f"Fixed-point solve failed, last change {change:.3e}")
    raise StepSolverDiverged(
        "implicit midpoint fixed point did not converge",
        {"change": change, "tolerance": settings.fixed_point_tol, "dt": dt},
    )


def _propagate(
    fam: MetricFamily, u0: np.ndarray, config: PropagatorConfig, settings: SchrodingerSection
) -> PropagationRun:
    op = SchrodingerOperator(fam, config)
    norm = op.norm_bound()
    if abs(config.dt) * norm > settings.stability * (1.0 + 1e-12):
        logger.error(f"Time step {config.dt:.3e} exceeds the stability budget")
        raise PreconditionViolated(
            "|dt| ||P|| exceeds the stability budget",
            {"dt": config.dt, "norm": norm, "stability": settings.stability},
        )
    mass0 = float(np.sum(np.abs(u0) ** 2) * config.dx)
    u = u0.astype(complex)
    absorbed, sponge_mass, iterations = 0.0, 0.0, 0
    if config.steps:
        u = op.free(u, 0.5 * config.dt)
    for n in range(config.steps):
        u, count, lost = _midpoint(op, u, config.dt, settings)
        u = op.free(u, config.dt if n < config.steps - 1 else 0.5 * config.dt)
        absorbed += lost
        iterations = max(iterations, count)
        sponge_mass = max(sponge_mass, float(np.sum(np.abs(u[op.in_sponge]) ** 2) * config.dx))
    if mass0 > 0.0 and (sponge_mass + abs(absorbed)) > settings.mass_threshold * mass0:
        logger.error(f"Wave reached the sponge: {sponge_mass + abs(absorbed):.3e} of {mass0:.3e}")
        raise WaveHitSponge(
            "mass reached the absorbing layer",
            {"sponge_mass": sponge_mass, "absorbed": absorbed, "mass0": mass0, "threshold": settings.mass_threshold},
        )
    return PropagationRun(
        family=fam.name,
        config=config,
        u0=u0.astype(complex),
        u=u,
        absorbed=absorbed,
        sponge_mass=sponge_mass,
        iterations=iterations,
        norm_operator=norm,
    )


def assemble_and_propagate(
    fam: MetricFamily,
    u0: SampledFunction,
    t: float,
    h_min: float,
    settings: Optional[SchrodingerSection] = None,
    config: Optional[PropagatorConfig] = None,
) -> PropagationRun:
    """e^{-itH} u0 by Strang splitting: exact free half steps around a midpoint step on P."""
    settings = _schrodinger_settings(settings)
    config = plan_propagator(fam, u0, t, h_min, settings) if config is None else config
    run = _propagate(fam, u0(config.x), config, settings)
    logger.info(f"Successfully propagated {fam.name} data to t={run.t:.4g} in {config.steps} steps")
    return run


def unitarity_energy_report(
    fam: MetricFamily, run: PropagationRun, settings: Optional[SchrodingerSection] = None
) -> UnitarityReport:
    settings = _schrodinger_settings(settings)
    op = SchrodingerOperator(fam, run.config)
    mass0 = run.mass(run.u0)
    energy0 = op.energy(run.u0)
    norm_drift = abs(run.mass() + run.absorbed - mass0) / max(mass0, 1e-300)
    energy_drift = abs(op.energy(run.u) - energy0) / max(abs(energy0), 1e-300)
    return UnitarityReport(
        t=run.t,
        mass0=mass0,
        absorbed=run.absorbed,
        norm_drift=norm_drift,
        energy0=energy0,
        energy_drift=energy_drift,
        norm_tol=settings.norm_tol,
        energy_tol=settings.energy_tol,
        passed=bool(norm_drift <= settings.norm_tol and energy_drift <= settings.energy_tol),
    )


def _relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def richardson_check(
    fam: MetricFamily,
    u0: SampledFunction,
    run: PropagationRun,
    settings: Optional[SchrodingerSection] = None,
    raise_on_failure: bool = False,
) -> PropagatorCheck:
    """Relative L2 distance between the run and a rerun with half the step and twice the points."""
    settings = _schrodinger_settings(settings)
    fine = run.config.refined()
    fine = _capped(fine, SchrodingerOperator(fam, fine).norm_bound(), settings.stability)
    rerun = _propagate(fam, u0(fine.x), fine, settings)
    residual = _relative_l2(rerun.u[::2], run.u)
    check = PropagatorCheck(
        name="richardson",
        residual=residual,
        tolerance=settings.richardson_tol,
        passed=residual <= settings.richardson_tol,
        details={"N": fine.N, "dt": fine.dt, "steps": fine.steps},
    )
    if raise_on_failure and not check.passed:
        logger.error(f"Refined propagation differs by {residual:.3e}")
        raise StepSolverDiverged("refined propagation disagrees", check.model_dump())
    return check


def time_reversal_check(
    fam: MetricFamily, run: PropagationRun, settings: Optional[SchrodingerSection] = None
) -> PropagatorCheck:
    """Propagate u(t) back by -t and compare with u0."""
    settings = _schrodinger_settings(settings)
    back = _propagate(fam, run.u, run.config.reversed(), settings)
    residual = _relative_l2(back.u, run.u0)
    return PropagatorCheck(
        name="time_reversal",
        residual=residual,
        tolerance=settings.reversal_tol,
        passed=residual <= settings.reversal_tol,
    )


def self_adjointness_check(
    fam: MetricFamily,
    config: PropagatorConfig,
    pairs: int = 4,
    seed: int = 0,
    settings: Optional[SchrodingerSection] = None,
) -> PropagatorCheck:
    """max |<Hu, v> - <u, Hv>| / (|Hu| |v| + |u| |Hv|) over random smooth pairs."""
    settings = _schrodinger_settings(settings)
    op = SchrodingerOperator(fam, config)
    rng = np.random.default_rng(seed)
    envelope = np.exp(-0.5 * (config.k * config.dx * 4.0) ** 2)
    worst = 0.0
    for _ in range(pairs):
        u, v = (
            ifft(envelope * (rng.standard_normal(config.N) + 1j * rng.standard_normal(config.N)))
            for _ in range(2)
        )
        Hu, Hv = op.apply_H(u), op.apply_H(v)
        gap = abs(op.inner(Hu, v) - op.inner(u, Hv))
        scale = np.linalg.norm(Hu) * np.linalg.norm(v) + np.linalg.norm(u) * np.linalg.norm(Hv)
        worst = max(worst, float(gap / (scale * config.dx)))
    return PropagatorCheck(
        name="self_adjointness",
        residual=worst,
        tolerance=settings.adjoint_tol,
        passed=worst <= settings.adjoint_tol,
        details={"pairs": pairs, "seed": seed},
    )


def ehrenfest_check(
    fam: MetricFamily,
    x0: float,
    xi0: float,
    t: float,
    h: float,
    settings: Optional[SchrodingerSection] = None,
) -> EhrenfestReport:
    """Centre of a coherent packet at frequency xi0/h against the q-flow at s = t/h."""
    packet = Packet.coherent(x0, xi0, h)
    run = assemble_and_propagate(fam, packet, t, h, settings)
    density = np.abs(run.u) ** 2
    center = float(np.sum(run.x * density) / np.sum(density))
    flow = HamiltonFlow(fam, h).run(np.array([x0]), np.array([xi0]), t / h)
    classical = float(flow.x[-1, 0, 0].real)
    deviation = abs(center - classical)
    bound = math.sqrt(h)
    return EhrenfestReport(
        h=h, t=t, center=center, classical=classical, deviation=deviation, bound=bound, passed=deviation <= bound
    )


def snapshot_rows(run: PropagationRun):
    """(x, Re u, Im u) rows of the final wave."""
    rows = [[float(x), float(u.real), float(u.imag)] for x, u in zip(run.x, run.u)]
    return SNAPSHOT_HEADER, rows
