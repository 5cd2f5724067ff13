import numpy as np
import pytest

from internal.dependencies.errors import (
    BandOverflow,
    BandUnderflow,
    MarginViolated,
    PreconditionViolated,
)
from stages.fbi_quantize.fbi_quantize_model import Packet
from stages.fbi_quantize.fbi_quantize_service import UNDERFLOW, transform_evaluator, transform_values
from stages.modevol.modevol_service import (
    EVOLVED_HEADER,
    apply_G0,
    apply_G0_multiplier,
    apply_G1,
    composition_residual,
    contour_margin,
    evolution_residual,
    evolved_rows,
    in_omega,
    mapping_bound,
    margin_sweep,
    multiplier,
    omega_points,
    phase_slice,
    preimage,
    roundtrip_residual,
    saddle_certificate,
    u_s,
    u_s_inverse,
    z_s,
)

H = 0.05


def _plane_wave(kappa):
    def at(h):
        return lambda y: np.exp(1j * kappa * np.asarray(y, dtype=complex) / h)

    return at


def _weighted_error(values, expected, z, h):
    weight = np.exp(-0.5 * np.asarray(z).imag ** 2 / h)
    return np.max(weight * np.abs(values - expected)) / np.max(weight * np.abs(expected))


def test_slice_matches_phase(bump_phase):
    sl = phase_slice(bump_phase, 20.0)
    xi = np.array([-2.7, -0.9, 0.6, 1.3, 3.1])
    assert np.allclose(sl.Wtilde(xi), bump_phase.Wtilde(20.0, xi), rtol=1e-6)
    zeta = np.array([1.3 - 0.2j, -0.9 + 0.1j])
    assert np.allclose(sl.grad_tilde(zeta), bump_phase.grad_tilde(20.0, zeta), rtol=1e-6)
    assert np.allclose(sl.hess(xi), bump_phase.hess(20.0, xi), rtol=1e-5)


def test_evolved_centre_maps(flat_phase):
    z0 = np.array([0.3 - 1.2j, -1.0 + 1.5j])
    s = 10.0
    moved = z_s(flat_phase, s, z0)
    assert np.allclose(moved, z0 + s * (-z0.imag), atol=1e-9)
    assert np.allclose(preimage(flat_phase, s, moved), z0, atol=1e-9)
    back, zeta = u_s(flat_phase, s, moved, -z0.imag)
    assert np.allclose(back, z0, atol=1e-9)
    z, same = u_s_inverse(flat_phase, s, back, zeta)
    assert np.allclose(z, moved) and np.allclose(same, zeta)


def test_omega_points_lie_in_omega():
    center = 2.0 - 1.0j
    points = omega_points(center, 0.1, 30.0, points=5)
    assert points.size == 25
    assert np.all(in_omega(points, center, 0.1, 30.0))
    assert not in_omega(center + 0.2j, center, 0.1, 30.0)
    # the real direction is stretched by <s>
    assert in_omega(center + 2.0, center, 0.1, 30.0)


@pytest.mark.parametrize("s", [0.0, 10.0])
def test_flat_saddle_certificate(flat_phase, s):
    z = 0.3 - 1.2j
    report = saddle_certificate(flat_phase, s, z)
    assert report.passed
    assert report.critical_y == pytest.approx(z + s * 1.2, abs=1e-9)
    assert report.signature == (2, 2)


def test_bump_saddle_certificate(bump_phase):
    report = saddle_certificate(bump_phase, 50.0, 5.0 - 1.0j)
    assert report.passed
    assert report.signature == (2, 2)


def test_saddle_needs_momentum_above_floor(flat_phase):
    with pytest.raises(PreconditionViolated):
        saddle_certificate(flat_phase, 10.0, 1.0 - 0.2j)


@pytest.mark.parametrize("s", [0.0, 1.0, 10.0])
def test_flat_margin_matches_closed_form(flat_phase, s):
    report = contour_margin(flat_phase, s, 0.3 - 1.5j)
    assert report.closed_form is not None
    assert report.delta == pytest.approx(report.closed_form, rel=1e-3)
    assert report.boundary_margin > 0.0


def test_bump_margin_stays_uniform(bump_phase):
    sweep = margin_sweep(bump_phase, [1.0, 10.0, 100.0, 1000.0], 5.0 - 1.0j)
    assert sweep.stable
    assert all(report.closed_form is None for report in sweep.reports)
    assert sweep.mean_delta > 0.1


def test_wide_contour_leaves_band(flat_phase):
    with pytest.raises(MarginViolated):
        contour_margin(flat_phase, 10.0, 0.3 - 1.2j, r=1.0)


def test_flat_plane_wave_evolution(flat_phase):
    s, kappa, z = 10.0, 1.2, np.array([0.3 - 1.2j])
    v = _plane_wave(kappa)(H)
    expected = np.exp(1j * s * kappa**2 / (2 * H)) * v(z)
    forward = apply_G0(flat_phase, v, s, z, H)
    assert forward.provenance == "quadrature"
    assert forward.values[0] == pytest.approx(expected, rel=1e-6)
    backward = apply_G1(flat_phase, v, s, z, H)
    assert backward.values[0] == pytest.approx(np.conj(expected / v(z)) * v(z), rel=1e-6)


def test_zero_time_is_identity(bump_phase):
    z = np.array([0.5 - 1.5j])
    v = _plane_wave(1.5)(H)
    field = apply_G0(bump_phase, v, 0.0, z, H)
    assert field.values[0] == pytest.approx(v(z), rel=1e-6)


def test_flat_multiplier_matches_free_packet(flat_phase):
    s = 10.0
    packet = Packet.coherent(0.0, 1.5, H)
    z = -15.0 + np.array([-0.2, 0.0, 0.2]) - 1.5j
    field = apply_G0_multiplier(flat_phase, packet, s, z, H)
    expected = transform_values(packet.evolve(-H * s), z, H)
    assert _weighted_error(field.values[0], expected, z, H) <= 1e-8


def test_multiplier_at_zero_time(flat_phase):
    packet = Packet.coherent(0.0, 1.5, H)
    z = np.array([-0.1 - 1.5j, 0.2 - 1.4j])
    field = apply_G0_multiplier(flat_phase, packet, 0.0, z, H)
    assert _weighted_error(field.values[0], transform_values(packet, z, H), z, H) <= 1e-8


def test_free_floor_continues_the_flat_phase(flat_phase):
    s = 10.0
    sl = phase_slice(flat_phase, s)
    xi = np.linspace(-3.0, 3.0, 241)
    inner = np.abs(xi) < sl.xi_max - 0.5
    free = multiplier(sl, xi, H, floor_phase="free")
    assert np.allclose(free[inner] * np.exp(-0.5j * s * xi[inner] ** 2 / H), 1.0, atol=1e-8)
    plain = multiplier(sl, xi, H)
    low = np.abs(xi) < sl.delta0
    assert np.allclose(plain[low], 1.0)
    assert not np.allclose(free[low], 1.0)
    with pytest.raises(ValueError):
        multiplier(sl, xi, H, floor_phase="zero")


@pytest.mark.parametrize("phase_name, tolerance", [("flat_phase", 1e-5), ("bump_phase", 1e-4)])
def test_quadrature_agrees_with_multiplier(request, phase_name, tolerance):
    phase = request.getfixturevalue(phase_name)
    s = 10.0
    packet = Packet.coherent(0.0, 1.5, H)
    z0 = complex(preimage(phase, s, -1.5j))
    z = z0 + np.array([-0.1, 0.1])
    by_multiplier = apply_G0_multiplier(phase, packet, s, z, H).values[0]
    by_quadrature = apply_G0(phase, transform_evaluator(packet, H), s, z, H).values[0]
    assert _weighted_error(by_quadrature, by_multiplier, z, H) <= tolerance


def test_spectral_mass_below_floor(flat_phase):
    with pytest.raises(BandUnderflow):
        apply_G0_multiplier(flat_phase, Packet.coherent(0.0, 0.3, H), 10.0, [-3.0 - 0.3j], H)


def test_spectral_mass_beyond_band(flat_phase):
    with pytest.raises(BandOverflow):
        apply_G0_multiplier(flat_phase, Packet.coherent(0.0, 3.3, H), 10.0, [-33.0 - 3.3j], H)


def test_multiplier_roundtrip_is_exact_on_flat(flat_phase):
    packet = Packet.coherent(0.0, 1.5, H)
    report = roundtrip_residual(flat_phase, packet, 10.0, [0.05, 0.025], -15.0 - 1.5j, path="multiplier")
    assert max(report.residuals) <= 1e-10


def test_bump_roundtrip_decays_exponentially(bump_phase):
    report = roundtrip_residual(bump_phase, _plane_wave(1.5), 5.0, [0.1, 0.05, 0.025], 0.3 - 1.5j)
    assert report.exponential
    assert report.residuals[-1] < report.residuals[0]


def test_zero_data_roundtrip_is_floored(bump_phase):
    def zero(h):
        return lambda y: np.zeros(np.shape(y), dtype=complex)

    report = roundtrip_residual(bump_phase, zero, 5.0, [0.1, 0.05], 0.3 - 1.5j)
    assert report.residuals == [UNDERFLOW, UNDERFLOW]


def test_reverse_composition_on_flat(flat_phase):
    report = composition_residual(
        flat_phase, _plane_wave(1.5), 5.0, [0.1, 0.05, 0.025], 0.3 - 1.5j, order="G0G1"
    )
    assert report.name == "composition_G0G1"
    assert report.exponential


def test_flat_evolution_equation(flat_phase):
    packet = Packet.coherent(0.0, 1.5, H)
    report = evolution_residual(flat_phase, packet, [5.0, 20.0], -1.5j, H)
    assert report.passed
    assert all(step <= 0.5 for step in report.steps)
    assert max(report.floor) < 1e-3


def test_corrupted_phase_fails_evolution(flat_phase):
    packet = Packet.coherent(0.0, 1.5, H)

    def shifted(t, xi):
        return flat_phase.Wtilde(t, xi).real + 0.01 * t

    report = evolution_residual(flat_phase, packet, [5.0, 20.0], -1.5j, H, alternate=shifted)
    assert not report.passed
    assert min(report.extrapolated) >= 5e-3


def test_bump_evolution_tracks_flat(flat_phase, bump_phase):
    packet = Packet.coherent(0.0, 1.5, H)
    s_grid = [5.0, 20.0, 80.0]
    flat = evolution_residual(flat_phase, packet, s_grid, -1.5j, H)
    bump = evolution_residual(bump_phase, packet, s_grid, -1.5j, H)
    assert bump.passed
    for b, f in zip(bump.extrapolated, flat.extrapolated):
        assert b <= 10 * f + 1e-4


def test_flat_mapping_is_contractive(flat_phase):
    report = mapping_bound(flat_phase, _plane_wave(1.2), [10.0], 0.3 - 1.2j, H)
    assert report.eps2 == pytest.approx(report.eps1 / 4)
    assert report.max_ratio <= 1.0 + 1e-5


def test_evolved_rows(flat_phase):
    packet = Packet.coherent(0.0, 1.5, H)
    field = apply_G0_multiplier(flat_phase, packet, 0.0, [-1.5j, 0.1 - 1.5j], H)
    header, rows = evolved_rows(field)
    assert header == EVOLVED_HEADER
    assert len(rows) == 2
    assert rows[0][-2:] == [0.0, "multiplier"]
