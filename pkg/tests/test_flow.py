import numpy as np
import pytest

from internal.dependencies.errors import DomainExit, PreconditionViolated, TrappedOrbit
from stages.flow.flow_service import (
    HamiltonFlow,
    classify_nontrapping,
    flow_deviation,
    integrate_flow,
    semigroup_residual,
    tolerance_refinement_residual,
    trajectory_rows,
    xi_plus,
)
from stages.symbols.symbols_model import MetricFamily, SymbolPoint

LADDER = [0.1, 0.05, 0.025, 0.0125]


def test_flat_flow_is_a_straight_line(flat):
    traj = integrate_flow(flat, SymbolPoint(x=0.0, xi=1.0, h=0.1), T=1.0, h=0.1)
    assert traj.s[-1] == pytest.approx(10.0)
    assert np.allclose(traj.x[:, 0], traj.s, atol=1e-10)
    assert np.allclose(traj.xi[:, 0], 1.0, atol=1e-12)
    assert traj.energy_drift < 1e-12
    assert traj.s[0] == 0.0 and traj.x[0, 0] == 0.0


def test_horizon_beyond_s_max(flat):
    with pytest.raises(PreconditionViolated):
        integrate_flow(flat, SymbolPoint(x=0.0, xi=1.0, h=0.01), T=1.0, h=0.01, s_max=50.0)


def test_potential_tolerance_refinement(potential):
    start = SymbolPoint(x=2.0, xi=1.0, h=0.05)
    assert tolerance_refinement_residual(potential, start, 0.05, 1.0, tol=1e-9) <= 1e-8


def test_semigroup(bump):
    start = SymbolPoint(x=1.0, xi=0.7, h=0.1)
    assert semigroup_residual(bump, start, 0.1, 3.0, 8.0, tol=1e-9) <= 1e-8


def test_endpoints_per_start_times(flat):
    flow = HamiltonFlow(flat, 0.1)
    run = flow.endpoints([0.0, 1.0, -2.0], [1.0, -0.5, 2.0], [3.0, 0.0, 5.0])
    assert np.allclose(run.x[0, :, 0], [3.0, 1.0, 8.0], atol=1e-9)
    assert np.allclose(run.xi[0, :, 0], [1.0, -0.5, 2.0])


def test_complex_start_leaving_domain(flat):
    flow = HamiltonFlow(flat, 0.1)
    with pytest.raises(DomainExit):
        flow.run(0.0, 1.0 + 0.5j, 10.0)


def test_flat_is_nontrapping(flat):
    report = classify_nontrapping(flat, SymbolPoint(x=0.0, xi=1.0, h=0.1), h=0.1)
    assert report.nontrapping
    assert report.s0 == 0.0


def test_outgoing_reference_ray(bump):
    report = classify_nontrapping(bump, SymbolPoint(x=64.0, xi=0.5, h=0.05), h=0.05)
    assert report.nontrapping


def test_flat_xi_plus(flat):
    data = xi_plus(flat, SymbolPoint(x=0.5, xi=1.5, h=0.1), LADDER, T=1.0)
    assert data.xi_plus[0] == pytest.approx(1.5, abs=1e-12)
    assert data.nontrapping
    assert data.growth_constant == pytest.approx(1.0 / 1.5, rel=1e-6)


def test_bump_xi_plus_independent_of_horizon(bump):
    start = SymbolPoint(x=5.0, xi=1.0, h=0.1)
    one = xi_plus(bump, start, LADDER, T=1.0)
    two = xi_plus(bump, start, LADDER, T=2.0)
    allowed = 3.0 * (one.ladder_error + two.ladder_error) + 1e-9
    assert abs(one.ladder_limit[0] - two.ladder_limit[0]) <= allowed
    assert one.xi_plus[0] == pytest.approx(two.xi_plus[0])


def test_confining_potential_traps():
    fam = MetricFamily.potential(eps=1.0)
    with pytest.raises(TrappedOrbit):
        xi_plus(fam, SymbolPoint(x=0.0, xi=1.0, h=0.1), [0.1, 0.05, 0.025, 0.0125], T=1.0)


def test_drift_rates(drift):
    data = xi_plus(drift, SymbolPoint(x=0.0, xi=1.0, h=0.1), LADDER, T=1.0)
    assert data.xi_plus[0] == pytest.approx(1.0, abs=1e-9)
    assert abs(data.momentum_rate - drift.sigma) <= 0.1
    growth = np.array(data.growth_by_h[:3])
    assert growth.max() <= 1.2 * growth.min()


def test_flat_deviation_vanishes(flat):
    report = flow_deviation(flat, SymbolPoint(x=0.0, xi=1.0, h=0.1), 0.1, 1.0)
    assert report.position_ratio == 0.0
    assert report.momentum_ratio == 0.0


def test_drift_deviation_stable_in_h(drift):
    start = SymbolPoint(x=1.0, xi=1.0, h=0.1)
    coarse = flow_deviation(drift, start, 0.1, 1.0)
    fine = flow_deviation(drift, start, 0.05, 1.0)
    ratio = fine.position_ratio / coarse.position_ratio
    assert 0.5 < ratio < 2.0
    assert 0.5 < fine.momentum_ratio / coarse.momentum_ratio < 2.0


def test_potential_deviation_finite(potential):
    report = flow_deviation(potential, SymbolPoint(x=2.0, xi=1.0, h=0.05), 0.05, 1.0)
    assert np.isfinite(report.momentum_ratio)
    assert np.isfinite(report.position_ratio)


def test_trajectory_rows(flat):
    traj = integrate_flow(flat, SymbolPoint(x=0.0, xi=1.0, h=0.5), T=1.0, h=0.5, samples=5)
    header, rows = trajectory_rows(traj)
    assert header == ["s", "re_x1", "im_x1", "re_xi1", "im_xi1", "q_drift"]
    assert len(rows) == 5
    assert rows[-1][0] == pytest.approx(2.0)