from logging import INFO, getLogger
from pathlib import Path

from internal.config.config_model import ScenarioModel
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import StageResult
from internal.reporting.report_service import certificate, write_csv, write_json
from stages.fbi_quantize.fbi_quantize_service import u0_function
from stages.hj_phase.hj_phase_service import reference_phase
from stages.schrodinger.schrodinger_service import (
    assemble_and_propagate,
    plan_propagator,
    snapshot_rows,
    time_reversal_check,
    unitarity_energy_report,
)
from stages.symbols.symbols_service import family_from_config
from stages.wave_ops.wave_ops_service import x_plus

from .detector_service import (
    conjugate_scenario,
    conjugated_symbol_check,
    delta_map_rows,
    flow_factorization_check,
    run_equivalence,
)

logger = getLogger("schrodlab")
logger.setLevel(INFO)

COMMAND_ACTIVE = True
SYMBOL_S_GRID = (10.0, 100.0, 1000.0)


def run_detect(sc: ScenarioModel, out_dir: Path, pool: WorkerPool = default_pool) -> StageResult:
    """Both sides of the equivalence, then the l0 rate, the flow factorization and the propagator gates."""
    out_dir = Path(out_dir)
    result = StageResult()

    verdict = run_equivalence(sc, pool=pool)
    result.outputs.append(str(write_json(out_dir / "verdict.json", verdict.record())))
    header, rows = delta_map_rows(verdict)
    result.outputs.append(str(write_csv(out_dir / "delta_maps.csv", header, rows)))
    result.certificates.append(certificate("equivalence", verdict.passed, verdict.record()))
    result.record = verdict.record()

    working = conjugate_scenario(sc) if sc.time_reversal else sc
    fam = family_from_config(working.family)
    h = min(working.detector.h_ladder)
    seed = (working.seed.x0, working.seed.xi0)

    phase = reference_phase(
        fam, working.floor, h, max(SYMBOL_S_GRID), working.phase, working.flow, extra_s=SYMBOL_S_GRID
    )
    point = x_plus(fam, phase, seed, working.flow.T, working.flow.h_ladder, working.phase, working.flow, pool)
    symbol = conjugated_symbol_check(
        phase, fam, SYMBOL_S_GRID, complex(point.z_plus[0]), float(point.xi_plus[0]), T=working.t
    )
    result.certificates.append(certificate("conjugated_symbol", symbol.passed, symbol))

    factorization = flow_factorization_check(
        phase,
        fam,
        seed,
        working.flow.h_ladder,
        working.flow.T,
        reference=point,
        s_probe=working.flow.s_probe,
        pool=pool,
    )
    result.certificates.append(certificate("flow_factorization", True, factorization))

    u0 = u0_function(working.u0, h)
    config = plan_propagator(fam, u0, working.t, h, working.schrodinger, xi_max=working.phase.Xi_max)
    run = assemble_and_propagate(fam, u0, working.t, h, working.schrodinger, config)
    header, rows = snapshot_rows(run)
    result.outputs.append(str(write_csv(out_dir / f"snapshot_h{h:g}.csv", header, rows)))
    unitarity = unitarity_energy_report(fam, run, working.schrodinger)
    result.certificates.append(certificate("unitarity", unitarity.passed, unitarity))
    reversal = time_reversal_check(fam, run, working.schrodinger)
    result.certificates.append(certificate("time_reversal", reversal.passed, reversal))

    logger.info(f"Successfully ran detect for {sc.name}: regular={verdict.lhs_regular}, agree={verdict.agreement}")
    return result
