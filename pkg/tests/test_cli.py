import json
from pathlib import Path

import pytest

import main
from internal.dependencies.errors import InconclusiveGap, MarginViolated
from internal.reporting.report_model import CertificateSummary, StageResult
from internal.reporting.report_service import read_csv

SCENARIOS = Path(__file__).parent.parent / "scenarios"


def write_scenario(tmp_path, **changes):
    document = json.loads((SCENARIOS / "flat_jump_singular.json").read_text())
    document.update(changes)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def manifest(out_dir):
    return json.loads((Path(out_dir) / "manifest.json").read_text())


def passing(name, record=None):
    def handler(sc, out_dir, pool):
        return StageResult(certificates=[CertificateSummary(name=name, passed=True)], record=record)

    return handler


@pytest.fixture
def stubbed(monkeypatch):
    calls = []
    for name in list(main.COMMANDS):

        def handler(sc, out_dir, pool, name=name):
            calls.append(name)
            return StageResult(certificates=[CertificateSummary(name=name, passed=True)])

        monkeypatch.setitem(main.COMMANDS, name, handler)
    return calls


def test_parser_knows_every_subcommand():
    parser = main.create_application()
    for name in ["flow", "phase", "fbi", "evolve", "contours", "detect", "all"]:
        args = parser.parse_args([name, "scenario.json", "--out", "runs", "--log-level", "DEBUG"])
        assert args.subcommand == name
        assert args.config == Path("scenario.json")
        assert args.out == Path("runs")
        assert args.log_level == "DEBUG"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main.create_application().parse_args(["--version"])
    assert e.value.code == 0
    assert main.LAB_VERSION in capsys.readouterr().out


def test_missing_sigma(tmp_path):
    path = write_scenario(tmp_path, family={"name": "flat"})
    code, result, _ = main.run("flow", path, tmp_path / "out")
    assert code == 1
    assert result.error["error"] == "ConfigInvalid"
    assert result.error["details"]["pointer"] == "/family/sigma"
    assert manifest(tmp_path / "out")["exit_code"] == 1
    assert result.stages == []


def test_all_runs_every_stage_in_order(tmp_path, stubbed):
    code, result, _ = main.run("all", write_scenario(tmp_path), tmp_path / "out")
    assert code == 0
    assert stubbed == ["flow", "phase", "fbi", "evolve", "contours", "detect"]
    assert [m.stage for m in result.stages] == stubbed
    assert all(m.wall_clock_ms >= 0.0 for m in result.stages)
    assert manifest(tmp_path / "out")["scenario"]["name"] == "flat-jump-singular"


def test_inconclusive_gap_exits_2(tmp_path, stubbed, monkeypatch):
    def gap(sc, out_dir, pool):
        raise InconclusiveGap("decay rate inside the inconclusive band", {"lhs_delta": 0.02})

    monkeypatch.setitem(main.COMMANDS, "fbi", gap)
    code, result, _ = main.run("all", write_scenario(tmp_path), tmp_path / "out")
    assert code == 2
    assert stubbed == ["flow", "phase"]
    assert result.stages[-1].error == "InconclusiveGap"
    assert manifest(tmp_path / "out")["error"]["details"] == {"lhs_delta": 0.02}


def test_failed_certificate_exits_1(tmp_path, monkeypatch):
    def soft(sc, out_dir, pool):
        return StageResult(certificates=[CertificateSummary(name="eikonal", passed=False)])

    monkeypatch.setitem(main.COMMANDS, "phase", soft)
    code, result, _ = main.run("phase", write_scenario(tmp_path), tmp_path / "out")
    assert code == 1
    assert result.error is None
    assert manifest(tmp_path / "out")["certificates"][0]["name"] == "eikonal"


def test_detect_prints_the_record(tmp_path, monkeypatch, capsys):
    monkeypatch.setitem(main.COMMANDS, "detect", passing("equivalence", record={"agreement": True}))
    code = main.main(["detect", str(write_scenario(tmp_path)), "--out", str(tmp_path / "out")])
    assert code == 0
    assert json.loads(capsys.readouterr().out) == {"agreement": True}


def test_flow_on_the_shipped_scenario(tmp_path):
    code, result, _ = main.run("flow", SCENARIOS / "flat_jump_singular.json", tmp_path)
    assert code == 0
    names = [c.name for c in result.certificates]
    assert names == ["assumption_a", "nontrapping", "xi_plus", "semigroup", "tolerance_refinement"]
    header, data = read_csv(tmp_path / "flow_trajectory_h0.1.csv")
    assert header[0] == "s"
    assert data[-1, 0] == pytest.approx(10.0)
    assert len(result.outputs) == 4


def test_detect_on_the_shipped_scenario(tmp_path):
    code, result, record = main.run("detect", SCENARIOS / "flat_jump_singular.json", tmp_path)
    assert code == 0
    assert record["agreement"] is True
    assert (tmp_path / "verdict.json").exists()
    names = [c.name for c in result.certificates]
    assert names[:3] == ["equivalence", "conjugated_symbol", "flow_factorization"]


def test_soft_contours_exit_1(tmp_path):
    contours = {"R": 0.5, "samples": 256, "s_grid": [10.0], "t_grid": [0.0, 1.0]}
    code, result, _ = main.run("contours", write_scenario(tmp_path, contours=contours), tmp_path / "out")
    assert code == 1
    assert result.error["error"] == MarginViolated.__name__
    assert result.stages[0].stage == "contours"
    assert not result.stages[0].passed
