from logging import INFO, getLogger
from pathlib import Path

from internal.config.config_model import ScenarioModel
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import StageResult
from internal.reporting.report_service import certificate, write_csv
from stages.fbi_quantize.fbi_quantize_service import neighborhood_grid, u0_function
from stages.hj_phase.hj_phase_controller import scenario_s_grid
from stages.hj_phase.hj_phase_service import reference_phase
from stages.symbols.symbols_service import family_from_config

from .modevol_service import apply_G0_multiplier, evolved_rows, margin_sweep, saddle_certificate

logger = getLogger("schrodlab")
logger.setLevel(INFO)

COMMAND_ACTIVE = True


def run_evolve(sc: ScenarioModel, out_dir: Path, pool: WorkerPool = default_pool) -> StageResult:
    """G0(t/h) u0 read out around x0 - i xi0, with the saddle and contour margin certificates."""
    fam = family_from_config(sc.family)
    h = min(sc.detector.h_ladder)
    s = sc.t / h
    s_grid = scenario_s_grid(sc, h)
    phase = reference_phase(fam, sc.floor, h, max(s_grid), sc.phase, sc.flow, extra_s=s_grid)
    z = complex(sc.seed.x0, -sc.seed.xi0)
    result = StageResult()

    grid = neighborhood_grid(z, sc.fbi.neighborhood, sc.detector.readout_points)
    field = apply_G0_multiplier(phase, u0_function(sc.u0, h), s, grid, h, sc.modevol, sc.fbi)
    header, rows = evolved_rows(field)
    result.outputs.append(str(write_csv(Path(out_dir) / "evolved_field.csv", header, rows)))

    saddle = saddle_certificate(phase, s, z)
    result.certificates.append(certificate("saddle", saddle.passed, saddle))
    sweep = margin_sweep(phase, s_grid, z, settings=sc.modevol, samples=sc.contours.samples, pool=pool)
    positive = all(rep.delta > 0.0 and rep.boundary_margin > 0.0 for rep in sweep.reports)
    result.certificates.append(certificate("contour_margin", positive, sweep))
    logger.info(f"Successfully evolved {sc.name} to s={s:.4g}, mean margin {sweep.mean_delta:.4f}")
    return result
