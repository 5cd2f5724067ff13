from .errors import InconclusiveGap, LabError

DEFAULT_EXIT_CODES = {
    0: {"error": None, "description": "All gates passed. . ."},
    1: {"error": LabError, "description": "A stage failed or a certificate did not hold. . ."},
    2: {"error": InconclusiveGap, "description": "A decay rate landed inside the inconclusive band. . ."},
}


def exit_code_for(error: BaseException | None) -> int:
    """Map a stage outcome onto the documented exit codes."""
    if error is None:
        return 0
    if isinstance(error, InconclusiveGap):
        return 2
    return 1
