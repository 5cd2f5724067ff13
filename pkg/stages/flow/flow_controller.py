from logging import INFO, getLogger
from pathlib import Path

from internal.config.config_model import ScenarioModel
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import StageResult
from internal.reporting.report_service import certificate, write_csv
from stages.symbols.symbols_model import SymbolPoint
from stages.symbols.symbols_service import check_assumption_a, family_from_config

from .flow_service import (
    classify_nontrapping,
    integrate_flow,
    semigroup_residual,
    tolerance_refinement_residual,
    trajectory_rows,
    xi_plus,
)

logger = getLogger("schrodlab")
logger.setLevel(INFO)

COMMAND_ACTIVE = True
# flow residuals are compared against this multiple of the integrator tolerance
RESIDUAL_FACTOR = 100.0


def run_flow(sc: ScenarioModel, out_dir: Path, pool: WorkerPool = default_pool) -> StageResult:
    """Assumption A, trajectories on the ladder, the non-trapping probe and xi_plus."""
    fam = family_from_config(sc.family)
    settings = sc.flow
    ladder = settings.h_ladder
    result = StageResult()

    assumption = check_assumption_a(fam, sc.symbols)
    result.certificates.append(certificate("assumption_a", assumption.passed, assumption))

    start = SymbolPoint(x=sc.seed.x0, xi=sc.seed.xi0, h=ladder[0])
    for h in ladder:
        traj = integrate_flow(fam, start, settings.T, h, settings.tol, settings.s_max)
        header, rows = trajectory_rows(traj)
        path = write_csv(Path(out_dir) / f"flow_trajectory_h{h:g}.csv", header, rows)
        result.outputs.append(str(path))

    probe = classify_nontrapping(fam, start, ladder[-1], settings.s_probe, settings.probe_samples, settings.tol)
    result.certificates.append(certificate("nontrapping", probe.nontrapping, probe))

    limit = xi_plus(
        fam,
        start,
        ladder,
        settings.T,
        tol=settings.tol,
        s_max=settings.s_max,
        s_probe=settings.s_probe,
        samples=settings.probe_samples,
    )
    result.certificates.append(certificate("xi_plus", limit.nontrapping, limit))

    h = ladder[-1]
    s_end = settings.T / h
    bound = RESIDUAL_FACTOR * settings.tol
    semigroup = semigroup_residual(fam, start, h, 0.5 * s_end, s_end, settings.tol)
    refinement = tolerance_refinement_residual(fam, start, h, settings.T, settings.tol)
    result.certificates.append(
        certificate("semigroup", semigroup <= bound, {"residual": semigroup, "bound": bound, "h": h})
    )
    result.certificates.append(
        certificate("tolerance_refinement", refinement <= bound, {"residual": refinement, "bound": bound, "h": h})
    )
    logger.info(f"Successfully ran flow for {sc.name}: xi_plus={limit.xi_plus[0]:.8g}")
    return result
