import json

import numpy as np
import pytest

from internal.dependencies.default_exit_codes import DEFAULT_EXIT_CODES, exit_code_for
from internal.dependencies.errors import (
    BandOverflow,
    BandUnderflow,
    ConfigInvalid,
    EnergyDriftExceeded,
    InconclusiveGap,
    MarginViolated,
    StepFailure,
)
from internal.reporting.report_model import CertificateSummary, RunManifest, StageMetrics, StageResult
from internal.reporting.report_service import certificate, read_csv, write_csv, write_json, write_manifest


def test_csv_floats_survive_exactly(tmp_path):
    values = [0.1, 1.0 / 3.0, np.float64(2.0) ** 0.5]
    path = write_csv(tmp_path / "sub" / "table.csv", ["i", "x", "ok"], [[i, v, True] for i, v in enumerate(values)])
    header, data = read_csv(path)
    assert header == ["i", "x", "ok"]
    assert data[:, 1].tolist() == [float(v) for v in values]
    assert data[:, 2].tolist() == [1.0, 1.0, 1.0]


def test_json_handles_complex_and_arrays(tmp_path):
    path = write_json(tmp_path / "out.json", {"z": 1.0 - 2.0j, "a": np.arange(3), "f": np.float32(0.5)})
    assert json.loads(path.read_text()) == {"z": [1.0, -2.0], "a": [0, 1, 2], "f": 0.5}


def test_certificate_dumps_models():
    summary = certificate("timing", True, StageMetrics(stage="flow", wall_clock_ms=1.5, passed=True))
    assert summary.passed
    assert summary.values == {"stage": "flow", "wall_clock_ms": 1.5, "passed": True, "error": None}
    summary = certificate("raw", np.bool_(False), {"z": 1j, "v": np.array([1.0])})
    assert summary.passed is False
    assert summary.values == {"z": [0.0, 1.0], "v": [1.0]}


def test_stage_results_accumulate():
    first = StageResult(certificates=[CertificateSummary(name="a", passed=True)], outputs=["a.csv"])
    second = StageResult(
        certificates=[CertificateSummary(name="b", passed=False)], outputs=["b.csv"], record={"k": 1}
    )
    total = first.add(second)
    assert [c.name for c in total.certificates] == ["a", "b"]
    assert total.outputs == ["a.csv", "b.csv"]
    assert total.record == {"k": 1}
    assert first.passed and not total.passed


def test_manifest_file(tmp_path):
    manifest = RunManifest(lab_version="0", subcommand="flow", scenario={"name": "s"}, exit_code=1)
    path = write_manifest(tmp_path, manifest)
    assert path.name == "manifest.json"
    assert json.loads(path.read_text())["exit_code"] == 1


def test_error_hierarchy():
    assert issubclass(EnergyDriftExceeded, StepFailure)
    assert issubclass(BandOverflow, BandUnderflow)


@pytest.mark.parametrize(
    "error, code",
    [
        (None, 0),
        (InconclusiveGap("band", {"delta": 0.02}), 2),
        (MarginViolated("margin", {"delta": -0.1}), 1),
        (ConfigInvalid("bad", "/family/sigma"), 1),
    ],
)
def test_exit_codes(error, code):
    assert exit_code_for(error) == code
    assert code in DEFAULT_EXIT_CODES


def test_error_record_is_plain():
    record = InconclusiveGap("band", {"z_plus": 1 - 1j, "values": np.array([1.0, 2.0])}).to_record()
    assert record["error"] == "InconclusiveGap"
    assert record["details"] == {"z_plus": [1.0, -1.0], "values": [1.0, 2.0]}
    json.dumps(record)
