import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from internal.config.config_model import FlowSection, PhaseSection
from internal.config.config_service import get_lab_defaults
from internal.dependencies.errors import LimitUnstable, PreconditionViolated
from internal.dependencies.workers import WorkerPool, default_pool
from internal.numerics.fitting import extrapolate
from stages.flow.flow_service import HamiltonFlow, xi_plus
from stages.hj_phase.hj_phase_model import ReferenceConfig
from stages.hj_phase.hj_phase_service import CharacteristicSolver, PhaseW
from stages.symbols.symbols_model import MetricFamily, SymbolPoint

from .wave_ops_model import HomogeneityReport, ShortRangeReport, WaveOperatorPoint

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

DRIFT_TOL = 1e-6


def _reference(phase: Union[PhaseW, ReferenceConfig]) -> ReferenceConfig:
    return phase.config if isinstance(phase, PhaseW) else phase


def modified_position(
    fam: MetricFamily,
    cfg: ReferenceConfig,
    seed: Tuple[float, float],
    s: float,
    h: float,
    settings: Optional[PhaseSection] = None,
) -> Tuple[float, float]:
    """(x(s) - d_xi W~(s, xi(s)), xi(s)) of the q-flow at h from the seed.

    d_xi W~ = x_hat - R_delta sign(xi) is read off one characteristic solve at
    the reference ray of ``cfg`` moved to this h.
    """
    settings = settings if settings is not None else get_lab_defaults().phase
    x0, xi0 = seed
    run = HamiltonFlow(fam, h, tol=settings.flow_tol).run(x0, xi0, s)
    x_end = float(run.x[-1, 0, 0].real)
    xi_end = float(run.xi[-1, 0, 0].real)
    if abs(xi_end) <= cfg.delta0:
        raise PreconditionViolated(
            "flowed momentum inside the floor |xi| <= delta0",
            {"s": s, "h": h, "xi": xi_end, "delta0": cfg.delta0},
        )
    solver = CharacteristicSolver(fam, cfg.model_copy(update={"h": h}), settings)
    _, x_hat, _ = solver.values([s], [xi_end])
    grad_tilde = float(x_hat[0]) - cfg.R_delta * np.sign(xi_end)
    return x_end - grad_tilde, xi_end


def _ladder_limit(fam, cfg, seed, T, h_ladder, settings, pool: WorkerPool):
    rows = pool.map(lambda h: modified_position(fam, cfg, seed, T / h, h, settings), h_ladder)
    values = np.array([m for m, _ in rows])
    return extrapolate(h_ladder, values, fam.sigma)


def x_plus(
    fam: MetricFamily,
    phase: Union[PhaseW, ReferenceConfig],
    seed: Tuple[float, float],
    T: float,
    h_ladder: Sequence[float],
    settings: Optional[PhaseSection] = None,
    flow_settings: Optional[FlowSection] = None,
    pool: WorkerPool = default_pool,
) -> WaveOperatorPoint:
    """h -> 0 limit of x(T/h) - d_xi W~(T/h, xi(T/h)) with its horizon-doubling check."""
    cfg = _reference(phase)
    flow_settings = flow_settings if flow_settings is not None else get_lab_defaults().flow
    x0, xi0 = float(seed[0]), float(seed[1])
    momentum = xi_plus(
        fam,
        SymbolPoint(x=x0, xi=xi0, h=h_ladder[0]),
        h_ladder,
        T,
        tol=flow_settings.tol,
        s_max=flow_settings.s_max,
        s_probe=flow_settings.s_probe,
        samples=flow_settings.probe_samples,
    )
    limit_xi = float(momentum.xi_plus[0])
    if abs(limit_xi) <= cfg.delta0:
        logger.error(f"|xi_plus|={abs(limit_xi):.4g} does not exceed delta0={cfg.delta0}")
        raise PreconditionViolated(
            "seed momentum limit inside the floor", {"xi_plus": limit_xi, "delta0": cfg.delta0}
        )

    once = _ladder_limit(fam, cfg, (x0, xi0), T, h_ladder, settings, pool)
    twice = _ladder_limit(fam, cfg, (x0, xi0), 2.0 * T, h_ladder, settings, pool)
    gap = float(abs(once.limit - twice.limit))
    allowed = 3.0 * max(once.error, twice.error) + 1e-9
    if gap > allowed:
        logger.error(f"x_plus moved by {gap:.3e} when T doubled (allowed {allowed:.3e})")
        raise LimitUnstable(
            "T-doubling changed the modified position limit",
            {"gap": gap, "allowed": allowed, "x_plus": float(once.limit), "x_plus_2T": float(twice.limit)},
        )
    limit_x = float(once.limit)
    logger.info(f"Successfully computed x_plus={limit_x:.10g}, xi_plus={limit_xi:.10g}")
    return WaveOperatorPoint(
        x0=[x0],
        xi0=[xi0],
        xi_plus=[limit_xi],
        x_plus=[limit_x],
        z_plus=[complex(limit_x, -limit_xi)],
        extrapolation_error=once.error,
        ladder=list(h_ladder),
        values=[[float(v)] for v in once.ladder],
        doubled_x_plus=[float(twice.limit)],
        doubled_error=twice.error,
        T=T,
    )


def short_range_comparator(
    fam: MetricFamily,
    seed: Tuple[float, float],
    T_grid: Sequence[float],
    tol: float = 1e-9,
    drift_tol: float = DRIFT_TOL,
) -> ShortRangeReport:
    """y(T) - T eta(T) and eta(T) of the physical flow (h = 1) on a horizon grid.

    This is the unmodified comparison exp(-T H_free) exp(T H): it has a limit
    for short-range perturbations only. Energy is not gated since accelerating
    long-range orbits are reported, not rejected.
    """
    T_grid = np.sort(np.asarray(T_grid, dtype=float))
    run = HamiltonFlow(fam, 1.0, tol=tol).run(
        seed[0], seed[1], float(T_grid[-1]), t_eval=T_grid, check_energy=False
    )
    y = run.x[:, 0, 0].real
    eta = run.xi[:, 0, 0].real
    positions = y - T_grid * eta
    drifts = np.abs(np.diff(positions))
    converged = bool(drifts.size and drifts[-1] <= drift_tol)
    if converged:
        logger.info(f"Successfully found the unmodified limit {positions[-1]:.10g}")
    else:
        logger.warning(f"y(T) - T eta(T) still drifts by {drifts[-1] if drifts.size else np.nan:.3e}")
    return ShortRangeReport(
        T_grid=T_grid.tolist(),
        positions=positions.tolist(),
        momenta=eta.tolist(),
        drifts=drifts.tolist(),
        converged=converged,
        position_limit=float(positions[-1]),
        momentum_limit=float(eta[-1]),
    )


def momentum_homogeneity(
    fam: MetricFamily,
    seed: Tuple[float, float],
    h_ladder: Sequence[float],
    T: float,
    lambdas: Sequence[float] = (1.0, 2.0),
    flow_settings: Optional[FlowSection] = None,
) -> HomogeneityReport:
    """xi_plus(x0, lambda xi0) against lambda xi_plus(x0, xi0)."""
    flow_settings = flow_settings if flow_settings is not None else get_lab_defaults().flow
    x0, xi0 = seed

    def limit(lam: float):
        return xi_plus(
            fam,
            SymbolPoint(x=x0, xi=lam * xi0, h=h_ladder[0]),
            h_ladder,
            T,
            tol=flow_settings.tol,
            s_max=flow_settings.s_max,
            s_probe=flow_settings.s_probe,
            samples=flow_settings.probe_samples,
        )

    base = limit(1.0)
    reference = base.xi_plus[0]
    values, gaps, allowed = [], [], 0.0
    for lam in lambdas:
        data = base if lam == 1.0 else limit(lam)
        values.append(data.xi_plus[0])
        gaps.append(abs(data.xi_plus[0] - lam * reference))
        allowed = max(allowed, 3.0 * (lam * base.tail_error + data.tail_error))
    allowed += max(1e-9, 10.0 * flow_settings.tol)
    passed = max(gaps) <= allowed
    if passed:
        logger.info(f"Successfully checked momentum homogeneity for {fam.name}")
    return HomogeneityReport(
        lambdas=list(lambdas), xi_plus=values, gaps=gaps, allowed=allowed, passed=passed
    )
