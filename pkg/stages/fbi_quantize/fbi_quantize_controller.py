from logging import INFO, getLogger
from pathlib import Path

from internal.config.config_model import ScenarioModel
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import StageResult
from internal.reporting.report_service import certificate, write_csv

from .fbi_quantize_service import (
    bargmann,
    decay_rate,
    decay_rows,
    derivative_residual,
    field_rows,
    neighborhood_delta,
    neighborhood_grid,
    u0_function,
)

logger = getLogger("schrodlab")
logger.setLevel(INFO)

COMMAND_ACTIVE = True


def run_fbi(sc: ScenarioModel, out_dir: Path, pool: WorkerPool = default_pool) -> StageResult:
    """T u0 around x0 - i xi0 on the fbi ladder, its delta map and the Op_R(zeta) check."""
    settings = sc.fbi
    center = complex(sc.seed.x0, -sc.seed.xi0)
    grid = neighborhood_grid(center, settings.neighborhood, sc.detector.readout_points)

    def data(h: float):
        return u0_function(sc.u0, h)

    field = bargmann(data, grid, settings.h_ladder, settings, pool=pool)
    estimate = decay_rate(field, threshold=settings.delta_star)
    result = StageResult()
    header, rows = field_rows(field)
    result.outputs.append(str(write_csv(Path(out_dir) / "fbi_field.csv", header, rows)))
    header, rows = decay_rows(estimate)
    result.outputs.append(str(write_csv(Path(out_dir) / "fbi_decay.csv", header, rows)))

    delta = neighborhood_delta(estimate, center, settings.neighborhood)
    result.certificates.append(
        certificate(
            "seed_decay",
            True,
            {"delta": delta, "delta_star": settings.delta_star, "regular": delta >= settings.delta_star},
        )
    )
    derivative = derivative_residual(data, [center], settings.h_ladder, order=1, settings=settings)
    result.certificates.append(certificate("op_r_derivative", derivative.exponential, derivative))
    logger.info(f"Successfully ran fbi for {sc.name}: delta={delta:.4g} at {center}")
    return result
