import numpy as np
import pytest

from internal.dependencies.errors import DomainExit, MarginViolated, PreconditionViolated
from stages.contour_lab.contour_lab_service import (
    MARGIN_HEADER,
    certify_deformation_A1,
    certify_deformation_A2,
    margin_rows,
    nested_contour,
    tilde_w1,
)
from stages.modevol.modevol_service import phase_slice

SAMPLES = 2000
T_GRID = [0.0, 0.5, 1.0]


def test_flat_a1_matches_quadratic_form(flat_phase):
    report = certify_deformation_A1(flat_phase, 0.3 - 1.5j, s_grid=[0.0], t_grid=T_GRID, R=1.0)
    assert len(report.rows) == 3
    for row in report.rows:
        assert row.closed_form is not None and row.closed_form > 0.0
        assert row.delta >= row.closed_form - 1e-8
        assert row.delta <= 1.2 * row.closed_form


def test_flat_a1_endpoints(flat_phase):
    report = certify_deformation_A1(flat_phase, 0.3 - 1.5j, s_grid=[10.0], t_grid=T_GRID, samples=SAMPLES)
    gaps = {row.t: row.endpoint_gap for row in report.rows}
    assert gaps[0.0] < 1e-9
    assert gaps[1.0] < 1e-9
    assert gaps[0.5] is None
    assert report.linearization_gap is not None


def test_bump_a1_passes(bump_phase):
    report = certify_deformation_A1(
        bump_phase, 5.0 - 1.0j, s_grid=[1.0, 10.0, 100.0], t_grid=T_GRID, samples=SAMPLES
    )
    assert len(report.rows) == 9
    assert report.delta > 0.0
    assert all(row.boundary > 0.0 for row in report.rows)
    assert all(row.closed_form is None for row in report.rows)
    assert set(report.delta_by_s) == {1.0, 10.0, 100.0}


def test_soft_a1_family_fails(flat_phase):
    with pytest.raises(MarginViolated) as info:
        certify_deformation_A1(flat_phase, 0.3 - 1.5j, s_grid=[10.0], t_grid=[0.0], samples=SAMPLES, R=0.5)
    assert info.value.details["t"] == 0.0
    assert info.value.details["s"] == 10.0


def test_a1_needs_momentum_above_floor(flat_phase):
    with pytest.raises(PreconditionViolated):
        certify_deformation_A1(flat_phase, 0.3 - 0.1j, s_grid=[1.0], samples=SAMPLES)


def test_flat_w1_is_the_mean_gradient(flat_phase):
    sl = phase_slice(flat_phase, 10.0)
    zeta = np.array([1.5 - 0.02j, 0.8 + 0.01j])
    eta = np.array([1.4 + 0.01j, 0.9 - 0.03j])
    assert np.allclose(tilde_w1(sl, zeta, eta), 10.0 * (zeta + eta) / 2, rtol=1e-8)
    assert np.allclose(tilde_w1(sl, zeta, zeta), sl.grad_tilde(zeta), rtol=1e-8)


def test_nested_contour_centre(bump_phase):
    s, z = 10.0, 5.0 - 0.6j
    sl = phase_slice(bump_phase, s)
    x, y, zeta, eta, _ = nested_contour(sl, s, z, np.zeros((1, 4)))
    assert x[0] == pytest.approx(z, abs=1e-9)
    assert y[0] == pytest.approx(z, abs=1e-9)
    assert zeta[0] == pytest.approx(0.6, abs=1e-12)
    assert eta[0] == pytest.approx(0.6, abs=1e-12)


def test_flat_a2_passes(flat_phase, flat):
    report = certify_deformation_A2(
        flat_phase, flat, 5.0 - 0.6j, s_grid=[1.0, 10.0], t_grid=T_GRID, samples=SAMPLES
    )
    assert len(report.rows) == 2 * 9 * 3
    assert report.delta > 0.0
    assert all(row.containment > 0.0 for row in report.rows)
    for row in report.rows:
        if row.t in (0.0, 1.0):
            assert row.endpoint_gap < 1e-9


def test_bump_a2_passes(bump_phase, bump):
    report = certify_deformation_A2(
        bump_phase, bump, 5.0 - 0.6j, s_grid=[1.0, 10.0, 100.0], t_grid=T_GRID, samples=SAMPLES, points=2
    )
    assert report.delta > 0.0
    assert all(row.boundary > 0.0 for row in report.rows)
    assert min(row.containment for row in report.rows) > 0.0


def test_inflated_neighbourhood_exits_domain(bump_phase, bump):
    with pytest.raises(DomainExit):
        certify_deformation_A2(bump_phase, bump, 5.0 - 0.6j, s_grid=[10.0], samples=SAMPLES, eps=1.0)


def test_margin_rows(flat_phase, flat):
    a1 = certify_deformation_A1(flat_phase, 0.3 - 1.5j, s_grid=[1.0], t_grid=[0.0, 1.0], samples=SAMPLES)
    header, rows = margin_rows(a1)
    assert header == MARGIN_HEADER
    assert [row[:3] for row in rows] == [["A1", 0.0, 1.0], ["A1", 1.0, 1.0]]
    assert rows[0][-1] == ""
    a2 = certify_deformation_A2(
        flat_phase, flat, 5.0 - 0.6j, s_grid=[1.0], t_grid=[1.0], samples=SAMPLES, points=1
    )
    _, rows = margin_rows(a2)
    assert len(rows) == 1 and rows[0][-1] > 0.0
