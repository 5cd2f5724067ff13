# main.py
import argparse
import json
import logging
import sys
import timeit
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from documentation.docs import LAB_DOCS_METADATA, LAB_VERSION
from internal.config.config_model import ScenarioModel
from internal.config.config_service import load_scenario
from internal.dependencies.default_exit_codes import DEFAULT_EXIT_CODES, exit_code_for
from internal.dependencies.errors import LabError
from internal.dependencies.workers import WorkerPool, default_pool
from internal.reporting.report_model import RunManifest, StageMetrics, StageResult
from internal.reporting.report_service import write_manifest

from stages.flow.flow_controller import COMMAND_ACTIVE as FLOW_COMMAND_ACTIVE, run_flow
from stages.hj_phase.hj_phase_controller import COMMAND_ACTIVE as PHASE_COMMAND_ACTIVE, run_phase
from stages.fbi_quantize.fbi_quantize_controller import COMMAND_ACTIVE as FBI_COMMAND_ACTIVE, run_fbi
from stages.modevol.modevol_controller import COMMAND_ACTIVE as EVOLVE_COMMAND_ACTIVE, run_evolve
from stages.contour_lab.contour_lab_controller import COMMAND_ACTIVE as CONTOURS_COMMAND_ACTIVE, run_contours
from stages.detector.detector_controller import COMMAND_ACTIVE as DETECT_COMMAND_ACTIVE, run_detect

logger = logging.getLogger("schrodlab")

Handler = Callable[[ScenarioModel, Path, WorkerPool], StageResult]

# Subcommands in the order `all` runs them
command_configs: List[Tuple[str, Handler, bool]] = [
    ("flow", run_flow, FLOW_COMMAND_ACTIVE),
    ("phase", run_phase, PHASE_COMMAND_ACTIVE),
    ("fbi", run_fbi, FBI_COMMAND_ACTIVE),
    ("evolve", run_evolve, EVOLVE_COMMAND_ACTIVE),
    ("contours", run_contours, CONTOURS_COMMAND_ACTIVE),
    ("detect", run_detect, DETECT_COMMAND_ACTIVE),
]
COMMANDS: Dict[str, Handler] = {name: handler for name, handler, active in command_configs if active}
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def exit_code_epilog() -> str:
    return "exit codes: " + "; ".join(f"{code} {entry['description']}" for code, entry in DEFAULT_EXIT_CODES.items())


def setup_commands(parser: argparse.ArgumentParser) -> None:
    """
    Configure one subparser per active stage plus `all`, sharing the same arguments.
    """
    descriptions = {c["name"]: c["description"] for c in LAB_DOCS_METADATA["commands"]}
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    for name in [*COMMANDS, "all"]:
        try:
            sub = subparsers.add_parser(name, help=descriptions[name], description=descriptions[name])
            sub.add_argument("config", type=Path, help="Scenario JSON file")
            sub.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
            sub.add_argument("--log-level", choices=LOG_LEVELS, default=None, help="Override the root log level")
            logger.debug(f"Successfully configured subcommand: {name}")

        except Exception as e:
            error_msg = f"Failed to configure subcommand {name}: {e}"
            logger.error(error_msg)
            raise RuntimeError(error_msg)


def create_application() -> argparse.ArgumentParser:
    """
    Create the argument parser with every subcommand and the lab metadata.
    """
    parser = argparse.ArgumentParser(
        prog=LAB_DOCS_METADATA["prog"],
        description=LAB_DOCS_METADATA["description"],
        epilog=exit_code_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=LAB_DOCS_METADATA["version"])

    try:
        setup_commands(parser)
        logger.debug("Successfully configured all subcommands")
    except Exception as e:
        error_msg = f"Failed to configure application: {e}"
        logger.error(error_msg)
        sys.exit(1)

    return parser


def run(
    subcommand: str, config: Path, out_dir: Path, pool: WorkerPool = default_pool
) -> Tuple[int, RunManifest, Optional[dict]]:
    """
    Run one subcommand (or all of them) and write the manifest.

    Returns the exit code, the manifest and the record to print, if any.
    """
    out_dir = Path(out_dir)
    manifest = RunManifest(lab_version=LAB_VERSION, subcommand=subcommand, scenario={})
    names = list(COMMANDS) if subcommand == "all" else [subcommand]
    result = StageResult()
    error: Optional[BaseException] = None

    try:
        sc = load_scenario(config)
        manifest.scenario = sc.model_dump(mode="json")
    except LabError as e:
        logger.error(f"Failed to load scenario {config}: {e}")
        error = e
        names = []

    for name in names:
        time_start = timeit.default_timer()
        try:
            stage = COMMANDS[name](sc, out_dir, pool)
            result = result.add(stage)
            time_end = timeit.default_timer()
            manifest.stages.append(
                StageMetrics(stage=name, wall_clock_ms=round((time_end - time_start) * 1000, 3), passed=stage.passed)
            )
            logger.info(f"Successfully ran stage: {name}")

        except LabError as e:
            time_end = timeit.default_timer()
            manifest.stages.append(
                StageMetrics(
                    stage=name,
                    wall_clock_ms=round((time_end - time_start) * 1000, 3),
                    passed=False,
                    error=type(e).__name__,
                )
            )
            logger.error(f"Failed to run stage {name}: {e}")
            error = e
            break

    manifest.certificates = result.certificates
    manifest.outputs = result.outputs
    if error is not None:
        manifest.error = error.to_record()
        code = exit_code_for(error)
    else:
        code = 0 if result.passed else 1
        for failed in (c for c in result.certificates if not c.passed):
            logger.warning(f"Certificate {failed.name} did not hold")
    manifest.exit_code = code
    write_manifest(out_dir, manifest)
    return code, manifest, result.record


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_application()
    args = parser.parse_args(argv)
    if args.log_level is not None:
        logging.getLogger().setLevel(args.log_level)
        logger.setLevel(args.log_level)

    code, _, record = run(args.subcommand, args.config, args.out)
    if record is not None:
        print(json.dumps(record, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
