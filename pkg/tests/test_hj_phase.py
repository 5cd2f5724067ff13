import numpy as np
import pytest

from internal.dependencies.errors import NoAdmissibleR, PreconditionViolated
from stages.flow.flow_service import HamiltonFlow
from stages.hj_phase.hj_phase_service import (
    build_phase,
    choose_reference,
    eikonal_residual,
    eval_W,
    growth_across_ladder,
    invert_J,
    phase_from_rows,
    phase_growth,
    phase_rows,
)
from stages.symbols.symbols_model import MetricFamily


def test_flat_reference(flat):
    cfg = choose_reference(flat, 0.25, 0.05)
    assert cfg.R_delta == 8.0
    assert cfg.jacobian_defect < 1e-6
    assert cfg.coverage <= 0.25


def test_bump_reference(bump):
    cfg = choose_reference(bump, 0.25, 0.05)
    assert cfg.jacobian_defect <= 0.25
    assert cfg.delta <= cfg.delta0


def test_deflecting_potential_has_no_reference():
    with pytest.raises(NoAdmissibleR):
        choose_reference(MetricFamily.potential(eps=1.0), 0.25, 0.1)


def test_flat_inversion_is_identity(flat, make_reference):
    source = invert_J(make_reference(), flat, 30.0, [1.0, -2.0])
    assert np.allclose(source, [1.0, -2.0], atol=1e-12)


def test_bump_inversion_forward_check(bump, make_reference, defaults):
    cfg = make_reference()
    source = invert_J(cfg, bump, 20.0, 1.0)
    flow = HamiltonFlow(bump, cfg.h, tol=defaults.phase.flow_tol)
    image = flow.run(cfg.R_delta, source[0], 20.0).xi[-1, 0, 0].real
    assert abs(image - 1.0) <= 1e-10


def test_inversion_inside_floor(flat, make_reference):
    with pytest.raises(PreconditionViolated):
        invert_J(make_reference(), flat, 5.0, 0.125)


@pytest.mark.parametrize("xi", [1.5, -1.2])
def test_flat_phase_closed_form(flat_phase, xi):
    R, s = flat_phase.config.R_delta, 10.0
    value = eval_W(flat_phase, s, xi)
    assert value.W == pytest.approx(R * abs(xi) + s * xi**2 / 2, abs=1e-8)
    assert value.gradW == pytest.approx(R * np.sign(xi) + s * xi, abs=1e-8)
    assert value.hessW == pytest.approx(s, abs=1e-6)
    assert value.Wtilde == pytest.approx(s * xi**2 / 2, abs=1e-8)


def test_phase_at_zero_time(bump_phase):
    value = eval_W(bump_phase, 0.0, 2.0)
    assert value.W == pytest.approx(bump_phase.config.R_delta * 2.0)
    assert value.Wtilde == 0.0


def test_cache_matches_characteristics(bump_phase):
    exact = eval_W(bump_phase, 20.0, 1.3)
    cached = eval_W(bump_phase, 20.0, 1.3, exact=False)
    assert cached.W == pytest.approx(exact.W, abs=1e-7)
    assert cached.gradW == pytest.approx(exact.gradW, abs=1e-7)
    assert cached.hessW == pytest.approx(exact.hessW, abs=1e-5)


def test_complex_extension_flat(flat_phase):
    zeta = np.array([1.0 - 0.2j, -1.5 + 0.1j])
    s = 10.0
    assert np.allclose(flat_phase.Wtilde(s, zeta), s * zeta**2 / 2, atol=1e-9)
    assert np.allclose(flat_phase.grad_tilde(s, zeta), s * zeta, atol=1e-9)
    assert np.allclose(flat_phase.ds_W(s, zeta), zeta**2 / 2, atol=1e-6)


def test_potential_quadrature_refinement(make_reference, defaults):
    fam = MetricFamily.potential(eps=0.1)
    cfg = make_reference(h=0.02)
    settings = defaults.phase.model_copy(update={"s_knots": 2, "xi_knots": 4})
    phase = build_phase(fam, cfg, 1.0, settings)
    coarse = eval_W(phase, 50.0, 1.0, panels=4)
    fine = eval_W(phase, 50.0, 1.0, panels=8)
    assert abs(fine.W - coarse.W) <= 1e-8 * abs(fine.W)


def test_gradient_identity_and_growth(bump_phase):
    growth = phase_growth(bump_phase)
    assert growth.max_gradient_identity <= 1e-6
    assert growth.max_hess_ratio <= 1.5
    assert np.all(bump_phase.table.W[0] == bump_phase.config.R_delta * np.abs(bump_phase.table.xi_knots))


def test_growth_stable_across_ladder(bump, small_phase):
    ratios = [g.max_hess_ratio for g in growth_across_ladder(bump, 0.25, [0.1, 0.05], 50.0, small_phase)]
    assert max(ratios) <= 1.3 * min(ratios)


def test_bump_eikonal(bump_phase):
    report = eikonal_residual(bump_phase, [0.0, 1.0, 10.0, 50.0, 100.0], [0.5, 1.0, 2.0])
    assert report.passed
    assert report.points == 15


def test_eikonal_flags_injected_defect(flat_phase):
    clean = eikonal_residual(
        flat_phase, [0.0, 10.0, 100.0], [0.5, 1.5], w_evaluator=flat_phase.W
    )
    assert clean.passed

    def corrupted(s, xi):
        return flat_phase.W(s, xi) + 0.01 * np.asarray(s)

    report = eikonal_residual(flat_phase, [0.0, 10.0, 100.0], [0.5, 1.5], w_evaluator=corrupted)
    assert not report.passed
    assert report.max_normalized >= 0.01


def test_table_rows_rebuild_the_phase(bump_phase, bump):
    header, rows = phase_rows(bump_phase)
    again = phase_from_rows(header, np.array(rows), bump, bump_phase.config, bump_phase.settings)
    assert again.W(37.0, -1.7) == pytest.approx(bump_phase.W(37.0, -1.7), abs=1e-12)