import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from internal.config.config_model import ScenarioModel
from internal.dependencies.errors import (
    Inconclusive,
    InconclusiveGap,
    LimitUnstable,
    PreconditionViolated,
    RateTooSlow,
    TrappedOrbit,
)
from internal.dependencies.workers import WorkerPool, default_pool
from internal.numerics.fitting import extrapolate, loglog_slope
from internal.numerics.sampling import halton_ball
from stages.fbi_quantize.fbi_quantize_model import DecayEstimate, FBIField, GridData
from stages.fbi_quantize.fbi_quantize_service import (
    DECAY_HEADER,
    bargmann,
    decay_rate,
    neighborhood_delta,
    neighborhood_grid,
    u0_function,
)
from stages.flow.flow_service import classify_nontrapping
from stages.hj_phase.hj_phase_service import PhaseW, build_phase, choose_reference
from stages.modevol.modevol_service import apply_G0_multiplier
from stages.schrodinger.schrodinger_service import assemble_and_propagate, plan_propagator
from stages.symbols.symbols_model import MetricFamily, SymbolPoint
from stages.symbols.symbols_service import family_from_config, q_value, tilde_q
from stages.wave_ops.wave_ops_model import WaveOperatorPoint
from stages.wave_ops.wave_ops_service import modified_position, x_plus

from .detector_model import ConjugationReport, FactorizationReport, Verdict

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

# readout points whose weighted transform stays below e^{-floor} on the whole ladder
RESOLUTION_FRACTION = 0.5
SWEEP_MOMENTUM = 0.5
RATE_SLACK = 0.2
SYMBOL_RADIUS = 0.05
SYMBOL_SAMPLES = 64
B0_TOL = 1e-6
LIMIT_SLACK = 1e-6
UNDERFLOW = 1e-300
DELTA_MAP_HEADER = ["side"] + DECAY_HEADER


def conjugate_scenario(sc: ScenarioModel) -> ScenarioModel:
    """Backward evolution as a forward one: xi0 -> -xi0, u0 -> conj u0, H -> conj H.

    conj H flips the sign of the first-order term, so the drift family
    changes the sign of eps and the others are unchanged.
    """
    seed = sc.seed.model_copy(update={"xi0": -sc.seed.xi0})
    u0 = sc.u0
    if u0.kind == "gaussian":
        u0 = u0.model_copy(update={"xi_c": -u0.xi_c})
    family = sc.family
    if family.name == "drift":
        family = family.model_copy(update={"eps": -family.eps})
    return sc.model_copy(update={"seed": seed, "u0": u0, "family": family})


def detector_phases(
    fam: MetricFamily,
    sc: ScenarioModel,
    delta0: float,
    h_ladder: Sequence[float],
    pool: WorkerPool = default_pool,
) -> Dict[float, PhaseW]:
    """One W cache per ladder point, sharing the reference ray chosen at the smallest h."""
    settings = sc.phase.model_copy(update={"delta0": delta0})
    h_min = float(min(h_ladder))
    cfg = choose_reference(fam, delta0, h_min, settings, sc.flow, s_horizon=2.0 * sc.t / h_min)

    def one(h: float) -> PhaseW:
        s = sc.t / h
        return build_phase(fam, cfg.model_copy(update={"h": h}), s, settings, extra_s=(s,))

    return dict(zip(h_ladder, pool.map(one, h_ladder)))


def propagate_ladder(
    fam: MetricFamily,
    sc: ScenarioModel,
    h_ladder: Sequence[float],
    pool: WorkerPool = default_pool,
) -> Dict[float, GridData]:
    """e^{-itH} u0 on its grid for every ladder point."""

    def one(h: float) -> GridData:
        u0 = u0_function(sc.u0, h)
        config = plan_propagator(fam, u0, sc.t, h, sc.schrodinger, xi_max=sc.phase.Xi_max)
        return assemble_and_propagate(fam, u0, sc.t, h, sc.schrodinger, config).as_data()

    return dict(zip(h_ladder, pool.map(one, h_ladder)))


def rhs_field(
    sc: ScenarioModel,
    phases: Dict[float, PhaseW],
    evolved: Dict[float, GridData],
    z_grid: np.ndarray,
    pool: WorkerPool = default_pool,
) -> FBIField:
    """T(e^{iW~(t/h, hD)/h} e^{-itH} u0) on z_grid for every ladder point."""
    ladder = list(evolved)

    def one(h: float) -> np.ndarray:
        field = apply_G0_multiplier(
            phases[h], evolved[h], sc.t / h, z_grid, h, sc.modevol, sc.fbi, floor_phase=sc.detector.floor_phase
        )
        return field.values[0]

    rows = pool.map(one, ladder)
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    return FBIField(z=z, h_ladder=np.asarray(ladder, dtype=float), values=np.array(rows))


def resolved_estimate(field: FBIField, tail_L: float) -> Tuple[DecayEstimate, int]:
    """decay_rate with points under the resolution floor bounded below by floor * h_min.

    Transforms of grid data are truncated at e^{-tail_L}; a readout value
    below e^{-tail_L/2} at every h sits under that floor and its fitted rate
    is noise.
    """
    estimate = decay_rate(field)
    floor = RESOLUTION_FRACTION * tail_L
    below = np.all(field.log_weighted() <= -floor, axis=0)
    bound = floor * float(field.h_ladder.min())
    deltas = [max(d, bound) if b else d for d, b in zip(estimate.delta, below)]
    return estimate.model_copy(update={"delta": deltas}), int(below.sum())


def _in_gap(delta: float, delta_star: float) -> bool:
    return 0.5 * delta_star <= delta <= 2.0 * delta_star


def _wave_operator(fam: MetricFamily, sc: ScenarioModel, cfg, pool: WorkerPool) -> WaveOperatorPoint:
    seed = (sc.seed.x0, sc.seed.xi0)
    return x_plus(fam, cfg, seed, sc.flow.T, sc.flow.h_ladder, sc.phase, sc.flow, pool)


def delta0_sweep(
    fam: MetricFamily,
    sc: ScenarioModel,
    evolved: Dict[float, GridData],
    pool: WorkerPool = default_pool,
) -> Dict[float, bool]:
    """rhs_decays recomputed for every delta0 of the detector sweep."""
    out = {}
    h_ladder = list(evolved)
    radius, points = sc.fbi.neighborhood, sc.detector.readout_points
    for delta0 in sc.detector.delta_sweep:
        phases = detector_phases(fam, sc, delta0, h_ladder, pool)
        point = _wave_operator(fam, sc, phases[h_ladder[0]].config, pool)
        z_plus = complex(point.z_plus[0])
        grid = neighborhood_grid(z_plus, radius, points)
        estimate, _ = resolved_estimate(rhs_field(sc, phases, evolved, grid, pool), sc.fbi.tail_L)
        out[float(delta0)] = neighborhood_delta(estimate, z_plus, radius) >= sc.fbi.delta_star
        logger.debug(f"delta0={delta0}: rhs_decays={out[float(delta0)]}")
    return out


def _flat_collapse_gap(lhs: FBIField, rhs: FBIField, z_plus: complex) -> Optional[float]:
    j = int(np.argmin(np.abs(rhs.z - z_plus)))
    i = int(np.argmin(np.abs(lhs.z - rhs.z[j])))
    reference = np.abs(lhs.values[:, i])
    if np.any(reference == 0.0):
        return None
    return float(np.max(np.abs(np.abs(rhs.values[:, j]) - reference) / reference))


def run_equivalence(
    sc: ScenarioModel,
    sweep: bool = True,
    pool: WorkerPool = default_pool,
) -> Verdict:
    """Decide the seed's regularity from T u0 and from the modified evolution of e^{-itH} u0.

    With time_reversal set the scenario is conjugated first, so the record
    answers the question for e^{itH} u0 at the stated seed.
    """
    stated = sc
    if sc.time_reversal:
        sc = conjugate_scenario(sc)
    fam = family_from_config(sc.family)
    ladder = list(sc.detector.h_ladder)
    delta0, delta_star = sc.floor, sc.fbi.delta_star
    radius, points = sc.fbi.neighborhood, sc.detector.readout_points
    x0, xi0 = sc.seed.x0, sc.seed.xi0

    phases = detector_phases(fam, sc, delta0, ladder, pool)
    point = _wave_operator(fam, sc, phases[ladder[0]].config, pool)
    z_plus, xi_p = complex(point.z_plus[0]), float(point.xi_plus[0])
    if abs(xi_p) <= delta0:
        raise PreconditionViolated("|xi_plus| must exceed delta0", {"xi_plus": xi_p, "delta0": delta0})

    lhs_center = complex(x0, -xi0)
    lhs = bargmann(
        lambda h: u0_function(sc.u0, h), neighborhood_grid(lhs_center, radius, points), ladder, sc.fbi, pool=pool
    )
    lhs_map, lhs_floored = resolved_estimate(lhs, sc.fbi.tail_L)
    lhs_delta = neighborhood_delta(lhs_map, lhs_center, radius)

    evolved = propagate_ladder(fam, sc, ladder, pool)
    rhs = rhs_field(sc, phases, evolved, neighborhood_grid(z_plus, radius, points), pool)
    rhs_map, rhs_floored = resolved_estimate(rhs, sc.fbi.tail_L)
    rhs_delta = neighborhood_delta(rhs_map, z_plus, radius)

    gaps = {side: d for side, d in (("lhs", lhs_delta), ("rhs", rhs_delta)) if _in_gap(d, delta_star)}
    if gaps:
        logger.error(f"delta inside the inconclusive band [{0.5 * delta_star}, {2.0 * delta_star}]: {gaps}")
        raise InconclusiveGap(
            "decay rate inside the inconclusive band; extend the ladder",
            {"lhs_delta": lhs_delta, "rhs_delta": rhs_delta, "delta_star": delta_star, "z_plus": z_plus},
        )
    lhs_regular = lhs_delta >= delta_star
    rhs_decays = rhs_delta >= delta_star

    expected = stated.expected_verdict
    matches = None if expected is None else (lhs_regular == expected and rhs_decays == expected)
    swept = delta0_sweep(fam, sc, evolved, pool) if sweep and abs(xi_p) >= SWEEP_MOMENTUM else {}
    verdict = Verdict(
        scenario=stated.name,
        family=fam.name,
        seed=[stated.seed.x0, stated.seed.xi0],
        t=sc.t,
        time_reversal=stated.time_reversal,
        delta0=delta0,
        delta_star=delta_star,
        h_ladder=ladder,
        z_plus=z_plus,
        xi_plus=xi_p,
        lhs_delta=lhs_delta,
        rhs_delta=rhs_delta,
        lhs_regular=lhs_regular,
        rhs_decays=rhs_decays,
        agreement=lhs_regular == rhs_decays,
        expected_verdict=expected,
        matches_expected=matches,
        floored_points={"lhs": lhs_floored, "rhs": rhs_floored},
        flat_collapse_gap=None if fam.perturbed else _flat_collapse_gap(lhs, rhs, z_plus),
        delta_sweep=swept,
        lhs_map=lhs_map,
        rhs_map=rhs_map,
    )
    if verdict.agreement:
        logger.info(f"Successfully decided {stated.name}: regular={lhs_regular}, both sides agree")
    else:
        logger.warning(f"{stated.name}: lhs_regular={lhs_regular} but rhs_decays={rhs_decays}")
    return verdict


def _symbol_samples(z_plus: complex, xi_plus: float, radius: float, samples: int):
    p = halton_ball(samples, 4, radius, norm_groups=2)
    z = z_plus + p[:, 0] + 1j * p[:, 1]
    zeta = xi_plus + p[:, 2] + 1j * p[:, 3]
    return np.concatenate([[z_plus], z]), np.concatenate([[complex(xi_plus)], zeta])


def coupled_phase(phase: PhaseW, s: float, T: float) -> PhaseW:
    """The W cache at h = T/s; phase itself when q does not depend on h."""
    h = T / s
    if not phase.family.h_dependent or np.isclose(phase.config.h, h, rtol=1e-12):
        return phase
    return build_phase(phase.family, phase.config.model_copy(update={"h": h}), s, phase.settings, extra_s=(s,))


def conjugated_symbol_check(
    phase: PhaseW,
    fam: MetricFamily,
    s_grid: Sequence[float],
    z_plus: complex,
    xi_plus: float,
    T: float = 1.0,
    coupled: bool = True,
    radius: float = SYMBOL_RADIUS,
    samples: int = SYMBOL_SAMPLES,
) -> ConjugationReport:
    """l0(s, z, zeta) = q(z + i zeta + d W~(s, zeta), zeta) - q(d W(s, zeta), zeta) near (z_plus, xi_plus).

    The estimate holds for s <= T/h, so l0 at s uses h = T/s unless
    ``coupled`` is off, in which case the phase's own h is kept. When q
    depends on h the W cache is rebuilt at that h, so W and q agree.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.max() > phase.s_max:
        raise PreconditionViolated("s grid beyond the W cache", {"s_max": phase.s_max, "s": float(s_grid.max())})
    z, zeta = _symbol_samples(z_plus, xi_plus, radius, samples)
    R = phase.config.R_delta
    sups, phase_h, b0_gap = [], [], 0.0
    for s in s_grid:
        cache = coupled_phase(phase, s, T) if coupled else phase
        h = T / s if coupled else phase.config.h
        phase_h.append(float(cache.config.h))
        grad = cache.grad_tilde(s, zeta)
        shifted = z + 1j * zeta + grad
        l0 = q_value(fam, shifted, zeta, h) - q_value(fam, grad + R * np.sign(zeta.real), zeta, h)
        sups.append(float(np.max(np.abs(l0))))
        # at zeta = -Im z the shifted point is real, so b0 is q0 on the real phase space
        readout = -z.imag + 0j
        shift = cache.grad_tilde(s, readout)
        b0 = tilde_q(fam, z + shift, readout, 0)
        real = q_value(fam, z.real + shift.real, readout.real, h, principal=True)
        b0_gap = max(b0_gap, float(np.max(np.abs(b0 - real) / np.maximum(np.abs(real), 1.0))))
    slope, _ = loglog_slope(np.sqrt(1.0 + s_grid**2), sups, floor=UNDERFLOW)
    exponent = np.inf if slope == -np.inf else -slope
    required = 1.0 + fam.sigma - RATE_SLACK
    report = ConjugationReport(
        s_grid=s_grid.tolist(),
        sup_l0=sups,
        exponent=float(exponent),
        required=required,
        coupled=coupled,
        b0_gap=b0_gap,
        phase_h=phase_h,
        passed=bool(exponent >= required and b0_gap <= B0_TOL),
    )
    if exponent < required:
        logger.error(f"l0 decays like <s>^-{exponent:.3f}, need {required:.3f}")
        raise RateTooSlow("conjugated symbol decays too slowly", report.model_dump())
    logger.info(f"Successfully checked l0 decay for {fam.name}: exponent {exponent:.3f}")
    return report


def flow_factorization_check(
    phase: PhaseW,
    fam: MetricFamily,
    seed: Tuple[float, float],
    h_ladder: Sequence[float],
    t: float,
    reference: Optional[WaveOperatorPoint] = None,
    s_probe: float = 200.0,
    pool: WorkerPool = default_pool,
) -> FactorizationReport:
    """kappa R_{t/h} kappa^-1 (x0 - i xi0, xi0) over the ladder, extrapolated to h = 0."""
    x0, xi0 = float(seed[0]), float(seed[1])
    for h in h_ladder:
        try:
            report = classify_nontrapping(fam, SymbolPoint(x=x0, xi=xi0, h=h), h, s_probe)
        except Inconclusive as e:
            raise TrappedOrbit("seed is not forward non-trapping", {"h": h, **e.details})
        if not report.nontrapping:
            logger.error(f"Trapped seed at h={h}")
            raise TrappedOrbit("seed is not forward non-trapping", {"h": h})
    rows = pool.map(
        lambda h: modified_position(fam, phase.config, (x0, xi0), t / h, h, phase.settings), h_ladder
    )
    values = np.array([m - 1j * xi for m, xi in rows])
    fit = extrapolate(h_ladder, values, fam.sigma)
    limit = complex(fit.limit)
    out = FactorizationReport(h_ladder=list(h_ladder), values=values.tolist(), limit=limit, error=fit.error)
    if reference is None:
        return out
    target = complex(reference.z_plus[0])
    gap = abs(limit - target)
    allowed = 3.0 * (fit.error + reference.extrapolation_error) + LIMIT_SLACK
    if gap > allowed:
        logger.error(f"Factorized flow limit misses z_plus by {gap:.3e}")
        raise LimitUnstable(
            "factorized flow limit disagrees with the wave operator",
            {"gap": gap, "allowed": allowed, "limit": limit, "z_plus": target},
        )
    logger.info(f"Successfully matched the factorized flow limit {limit:.8g}")
    return out.model_copy(update={"reference": target, "gap": gap, "allowed": allowed})


def delta_map_rows(verdict: Verdict):
    """Long-format rows of both delta maps."""
    rows = []
    for side, estimate in (("lhs", verdict.lhs_map), ("rhs", verdict.rhs_map)):
        for z, delta, r2 in zip(estimate.z, estimate.delta, estimate.r2):
            rows.append([side, z.real, z.imag, delta, r2])
    return DELTA_MAP_HEADER, rows
