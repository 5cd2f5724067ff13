import numpy as np
import pytest

from internal.dependencies.errors import PreconditionViolated, WaveHitSponge
from stages.fbi_quantize.fbi_quantize_model import Packet
from stages.schrodinger.schrodinger_model import PropagatorConfig
from stages.schrodinger.schrodinger_service import (
    SNAPSHOT_HEADER,
    SchrodingerOperator,
    assemble_and_propagate,
    ehrenfest_check,
    plan_propagator,
    richardson_check,
    self_adjointness_check,
    snapshot_rows,
    time_reversal_check,
    unitarity_energy_report,
)

H = 0.05
T = 0.2


@pytest.fixture(scope="module")
def packet():
    return Packet.coherent(-2.0, 1.0, H)


@pytest.fixture(scope="module")
def flat_run(flat, packet):
    return assemble_and_propagate(flat, packet, T, H)


@pytest.fixture(scope="module")
def bump_run(bump, packet):
    return assemble_and_propagate(bump, packet, T, H)


def test_flat_matches_free_packet(flat_run, packet):
    expected = packet.evolve(T)(flat_run.x)
    error = np.linalg.norm(flat_run.u - expected) / np.linalg.norm(expected)
    assert error < 1e-6
    assert flat_run.t == pytest.approx(T)


def test_zero_time_is_identity(bump, packet):
    run = assemble_and_propagate(bump, packet, 0.0, H)
    assert run.config.steps == 0
    assert np.array_equal(run.u, run.u0)


def test_plan_resolves_the_packet(flat, packet):
    config = plan_propagator(flat, packet, T, H)
    assert config.dx <= np.sqrt(H) / 8
    assert config.N & (config.N - 1) == 0
    assert config.sponge_width == pytest.approx(0.1 * config.L)
    lo, hi = packet.support()
    assert config.L - config.sponge_width > max(abs(lo), abs(hi))


def test_flat_unitarity(flat, flat_run):
    report = unitarity_energy_report(flat, flat_run)
    assert report.passed
    assert report.norm_drift < 1e-10
    assert report.energy_drift < 1e-10


def test_bump_unitarity(bump, bump_run):
    report = unitarity_energy_report(bump, bump_run)
    assert report.norm_drift <= 1e-8
    assert report.energy_drift <= 1e-4
    assert report.passed
    assert bump_run.iterations >= 1


def test_oversized_step_is_rejected(bump, packet, bump_run):
    config = bump_run.config
    corrupted = config.model_copy(update={"dt": 10 * config.dt, "steps": max(config.steps // 10, 1)})
    with pytest.raises(PreconditionViolated):
        assemble_and_propagate(bump, packet, corrupted.t, H, config=corrupted)


def test_time_reversal(bump, bump_run):
    check = time_reversal_check(bump, bump_run)
    assert check.passed
    assert check.residual < 1e-8


@pytest.mark.parametrize("name", ["flat", "bump", "drift", "potential"])
def test_self_adjoint(name, request, bump_run):
    fam = request.getfixturevalue(name)
    check = self_adjointness_check(fam, bump_run.config, pairs=3, seed=7)
    assert check.passed
    assert check.details == {"pairs": 3, "seed": 7}


def test_operator_is_free_on_flat(flat, flat_run):
    op = SchrodingerOperator(flat, flat_run.config)
    u = flat_run.u0
    assert np.allclose(op.apply_P(u), 0.0)
    assert op.norm_bound() == pytest.approx(flat_run.config.sponge_strength)


def test_flat_richardson(flat, packet, flat_run):
    check = richardson_check(flat, packet, flat_run)
    assert check.name == "richardson"
    assert check.passed
    assert check.details["N"] == 2 * flat_run.config.N


def test_ehrenfest_potential(potential):
    report = ehrenfest_check(potential, -1.0, 1.0, T, H)
    assert report.bound == pytest.approx(np.sqrt(H))
    assert report.passed
    assert report.center == pytest.approx(3.0, abs=0.5)


def test_sponge_hit(flat):
    packet = Packet.coherent(0.0, 1.0, H)
    config = PropagatorConfig(L=5.0, N=1024, dt=0.02, steps=10, sponge_width=1.0, sponge_strength=1.0)
    with pytest.raises(WaveHitSponge) as info:
        assemble_and_propagate(flat, packet, config.t, H, config=config)
    assert info.value.details["threshold"] == pytest.approx(1e-6)


def test_config_rejects_odd_grids():
    with pytest.raises(ValueError):
        PropagatorConfig(L=5.0, N=1000, dt=0.01, steps=1, sponge_width=1.0, sponge_strength=1.0)
    with pytest.raises(ValueError):
        PropagatorConfig(L=5.0, N=1024, dt=0.01, steps=1, sponge_width=0.1, sponge_strength=1.0)


def test_snapshot_rows(flat_run):
    header, rows = snapshot_rows(flat_run)
    assert header == SNAPSHOT_HEADER
    assert len(rows) == flat_run.config.N
    assert rows[0][0] == pytest.approx(-flat_run.config.L)
