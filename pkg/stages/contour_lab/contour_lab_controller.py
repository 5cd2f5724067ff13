from logging import INFO, getLogger
from pathlib import Path

from internal.config.config_model import ScenarioModel
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import StageResult
from internal.reporting.report_service import certificate, write_csv
from stages.hj_phase.hj_phase_service import reference_phase
from stages.symbols.symbols_service import family_from_config
from stages.wave_ops.wave_ops_service import x_plus

from .contour_lab_service import certify_deformation_A1, certify_deformation_A2, margin_rows

logger = getLogger("schrodlab")
logger.setLevel(INFO)

COMMAND_ACTIVE = True


def _summary(report) -> dict:
    return {
        "delta": report.delta,
        "delta_by_s": report.delta_by_s,
        "stable": report.stable,
        "bracketed": report.bracketed,
        "linearization_gap": report.linearization_gap,
        "samples": report.samples,
    }


def run_contours(sc: ScenarioModel, out_dir: Path, pool: WorkerPool = default_pool) -> StageResult:
    """Sampled certificates for both contour deformations; A1 at x0 - i xi0, A2 around z_plus."""
    fam = family_from_config(sc.family)
    settings = sc.contours
    h = min(sc.detector.h_ladder)
    s_grid = sorted(settings.s_grid)
    phase = reference_phase(fam, sc.floor, h, max(s_grid), sc.phase, sc.flow, extra_s=s_grid)
    result = StageResult()

    a1 = certify_deformation_A1(phase, complex(sc.seed.x0, -sc.seed.xi0), settings=settings, pool=pool)
    header, rows = margin_rows(a1)
    result.outputs.append(str(write_csv(Path(out_dir) / "contours_A1.csv", header, rows)))
    result.certificates.append(certificate("deformation_A1", a1.delta > 0.0, _summary(a1)))

    point = x_plus(fam, phase, (sc.seed.x0, sc.seed.xi0), sc.flow.T, sc.flow.h_ladder, sc.phase, sc.flow, pool)
    a2 = certify_deformation_A2(phase, fam, complex(point.z_plus[0]), settings=settings, pool=pool)
    header, rows = margin_rows(a2)
    result.outputs.append(str(write_csv(Path(out_dir) / "contours_A2.csv", header, rows)))
    result.certificates.append(certificate("deformation_A2", a2.delta > 0.0, _summary(a2)))
    logger.info(f"Successfully certified both deformations for {sc.name}")
    return result
