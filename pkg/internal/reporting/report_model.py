from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class StageMetrics(BaseModel):
    """Metrics about one stage execution."""

    stage: str
    wall_clock_ms: float
    passed: bool
    error: Optional[str] = None


class CertificateSummary(BaseModel):
    """Outcome of one gate."""

    name: str = Field(description="Certificate name")
    passed: bool = Field(description="Whether the gate held")
    values: Dict[str, Any] = Field(default_factory=dict, description="Measured values")


class RunManifest(BaseModel):
    """Everything needed to reproduce the numbers of a run."""

    lab_version: str
    subcommand: str
    scenario: Dict[str, Any] = Field(description="Validated scenario echo")
    stages: List[StageMetrics] = Field(default_factory=list)
    certificates: List[CertificateSummary] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list, description="Files written by the run")
    error: Optional[Dict[str, Any]] = Field(None, description="Record of the error that stopped the run")
    exit_code: int = 0


class StageResult(BaseModel):
    """What a subcommand handler hands back to the runner."""

    certificates: List[CertificateSummary] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    record: Optional[Dict[str, Any]] = Field(None, description="Printed to stdout when present")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)

    def add(self, other: "StageResult") -> "StageResult":
        return StageResult(
            certificates=self.certificates + other.certificates,
            outputs=self.outputs + other.outputs,
            record=other.record if other.record is not None else self.record,
        )
