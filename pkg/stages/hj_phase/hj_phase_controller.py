from logging import INFO, getLogger
from pathlib import Path

import numpy as np

from internal.config.config_model import ScenarioModel
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import StageResult
from internal.reporting.report_service import certificate, write_csv
from stages.symbols.symbols_service import family_from_config

from .hj_phase_service import eikonal_residual, phase_growth, phase_rows, reference_phase

logger = getLogger("schrodlab")
logger.setLevel(INFO)

COMMAND_ACTIVE = True
# d_xi^2 W stays within this multiple of <s>
GROWTH_LIMIT = 2.0


def scenario_s_grid(sc: ScenarioModel, h: float) -> list[float]:
    """Contour s values plus t/h, the times every later stage reads W at."""
    return sorted({float(s) for s in sc.contours.s_grid} | {sc.t / h})


def run_phase(sc: ScenarioModel, out_dir: Path, pool: WorkerPool = default_pool) -> StageResult:
    """W cache at the smallest detector h, with its eikonal and growth certificates."""
    fam = family_from_config(sc.family)
    h = min(sc.detector.h_ladder)
    s_grid = scenario_s_grid(sc, h)
    phase = reference_phase(fam, sc.floor, h, max(s_grid), sc.phase, sc.flow, extra_s=s_grid)
    result = StageResult()

    header, rows = phase_rows(phase)
    result.outputs.append(str(write_csv(Path(out_dir) / "phase_table.csv", header, rows)))

    result.certificates.append(certificate("reference", True, phase.config))
    xi_grid = np.linspace(2.0 * sc.floor, sc.phase.Xi_max - 1.0, 3)
    eikonal = eikonal_residual(phase, [0.0] + s_grid, xi_grid)
    result.certificates.append(certificate("eikonal", eikonal.passed, eikonal))
    growth = phase_growth(phase)
    # d_xi W = R_delta sign(xi) + O(<s>) on the cached band
    grad_limit = phase.config.R_delta + 2.0 * sc.phase.Xi_max
    grows = growth.max_grad_ratio <= grad_limit and growth.max_hess_ratio <= GROWTH_LIMIT
    result.certificates.append(certificate("phase_growth", grows, growth))
    logger.info(f"Successfully built the phase for {sc.name} up to s={phase.s_max:.4g}")
    return result
