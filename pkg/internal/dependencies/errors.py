from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class for every failure a lab stage can report."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})

    def to_record(self) -> Dict[str, Any]:
        return {
            "type": "error",
            "error": type(self).__name__,
            "message": self.message,
            "details": {k: plain_value(v) for k, v in self.details.items()},
        }


def plain_value(value: Any) -> Any:
    """Convert numpy and complex values into JSON-friendly Python values."""
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "tolist"):
        return plain_value(value.tolist())
    if isinstance(value, (list, tuple)):
        return [plain_value(v) for v in value]
    if isinstance(value, dict):
        return {k: plain_value(v) for k, v in value.items()}
    return value


class PreconditionViolated(LabError):
    pass


# symbols
class PointOutsideDomain(LabError):
    pass


class BoundViolated(LabError):
    pass


# flow
class DomainExit(LabError):
    pass


class StepFailure(LabError):
    pass


class EnergyDriftExceeded(StepFailure):
    pass


class TrappedOrbit(LabError):
    pass


class FitDiverged(LabError):
    pass


class Inconclusive(LabError):
    pass


# hj_phase / wave_ops
class NoAdmissibleR(LabError):
    pass


class NewtonDiverged(LabError):
    pass


class LimitUnstable(LabError):
    pass


# fbi_quantize / modevol
class UnresolvedIntegrand(LabError):
    pass


class FitDegenerate(LabError):
    pass


class QuadratureNotConverged(LabError):
    pass


class MarginViolated(LabError):
    pass


class CertificateFailed(LabError):
    pass


class BandUnderflow(LabError):
    pass


class BandOverflow(BandUnderflow):
    pass


# schrodinger
class WaveHitSponge(LabError):
    pass


class StepSolverDiverged(LabError):
    pass


# detector
class InconclusiveGap(LabError):
    pass


class RateTooSlow(LabError):
    pass


# cli
class ConfigInvalid(LabError):
    def __init__(self, message: str, pointer: str, details=None):
        super().__init__(message, details)
        self.pointer = pointer
        self.details.setdefault("pointer", pointer)
