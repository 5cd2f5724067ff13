import numpy as np
import pytest

from internal.config.config_model import GaussianConfig, HeavisideConfig, KinkConfig
from internal.dependencies.errors import (
    PreconditionViolated,
    QuadratureNotConverged,
    UnresolvedIntegrand,
)
from stages.fbi_quantize.fbi_quantize_model import FBIField, FunctionData, GridData, Jump, Kink, Packet
from stages.fbi_quantize.fbi_quantize_service import (
    bargmann,
    bargmann_derivative,
    cauchy_riemann_residual,
    coefficient_function,
    decay_rate,
    derivative_residual,
    dx_intertwining_residual,
    field_rows,
    intertwining_residual,
    neighborhood_delta,
    neighborhood_grid,
    op_r_apply,
    transform_values,
    u0_function,
)

LADDER = [0.2, 0.1, 0.05, 0.025]


def _unit_gaussian_transform(z, h):
    return np.sqrt(2 * np.pi * h / (1 + h)) * np.exp(-(z**2) / (2 * (1 + h)))


@pytest.mark.parametrize("z", [0.3, -1.2, 0.5 - 1.0j])
def test_gaussian_transform(z):
    u = Packet(center=0.0, k=0.0, width=1.0)
    h = 0.1
    expected = _unit_gaussian_transform(z, h)
    assert transform_values(u, z, h) == pytest.approx(expected, rel=1e-12)
    assert transform_values(u, z, h, closed_form=False) == pytest.approx(expected, rel=1e-10)


def test_zero_data_gives_zero_field():
    u = FunctionData(lambda y: np.zeros_like(y, dtype=complex), -1.0, 1.0)
    field = bargmann(u, [0.0, 1.0 - 1.0j], LADDER)
    assert np.all(field.values == 0)


def test_heaviside_quadrature_matches_erfc(defaults):
    u = Jump(x_k=0.0, window=None)
    field = bargmann(u, [-1.0j, 1.0 - 1.0j], LADDER, closed_form=False)
    exact = bargmann(u, [-1.0j, 1.0 - 1.0j], LADDER)
    assert np.allclose(field.values, exact.values, rtol=1e-10, atol=0)


def test_windowed_jump_closed_form():
    u = Jump(x_k=0.2, window=1.5)
    z = np.array([0.1 - 0.8j, 1.0 - 1.0j])
    assert np.allclose(
        transform_values(u, z, 0.05), transform_values(u, z, 0.05, closed_form=False), rtol=1e-10
    )


def test_heaviside_singular_and_regular_points():
    field = bargmann(Jump(x_k=0.0, window=None), [-1.0j, 1.0 - 1.0j], LADDER)
    estimate = decay_rate(field)
    assert estimate.delta[0] < 1e-3
    assert abs(estimate.delta[0]) < 0.01
    assert estimate.delta[1] >= 0.05


def test_synthetic_exact_decay():
    z = np.array([0.4 - 1.0j, 2.0 - 0.5j])
    h = np.array(LADDER)
    values = np.exp((0.5 * z.imag[None, :] ** 2 - 0.2) / h[:, None]).astype(complex)
    estimate = decay_rate(FBIField(z=z, h_ladder=h, values=values))
    assert estimate.delta == pytest.approx([0.2, 0.2], abs=1e-9)
    assert estimate.r2[0] == pytest.approx(1.0)
    plain = decay_rate(FBIField(z=z, h_ladder=h, values=values), model="plain")
    assert plain.delta == pytest.approx([0.2, 0.2], abs=1e-9)


def test_underflow_is_infinite_rate():
    z = np.array([1.0 - 1.0j])
    h = np.array(LADDER)
    values = np.zeros((4, 1), dtype=complex)
    estimate = decay_rate(FBIField(z=z, h_ladder=h, values=values))
    assert estimate.delta[0] == np.inf
    assert estimate.r2[0] == 1.0


def test_short_ladder_rejected():
    field = bargmann(Jump(window=None), [-1.0j], [0.2, 0.1, 0.05])
    with pytest.raises(PreconditionViolated):
        decay_rate(field)


def test_delta_invariant_under_phase():
    u = Kink(x_k=0.0, window=2.0)
    turned = FunctionData(lambda y: np.exp(0.7j) * u(y), *u.support(), breakpoints=u.breakpoints)
    z = [-1.0j, 1.0 - 1.0j]
    one = decay_rate(bargmann(u, z, LADDER))
    two = decay_rate(bargmann(turned, z, LADDER))
    assert np.allclose(one.delta, two.delta, atol=1e-8)


def test_shift_covariance():
    z = np.array([0.5 - 1.0j, -0.3 + 0.2j])
    shifted = transform_values(Kink(x_k=0.3), z, 0.05)
    base = transform_values(Kink(x_k=0.0), z - 0.3, 0.05)
    assert np.allclose(shifted, base, rtol=1e-12)


def test_real_data_real_points():
    values = transform_values(Kink(x_k=0.0), np.array([0.2, 1.5]), 0.1)
    assert np.max(np.abs(values.imag)) <= 1e-14 * np.max(np.abs(values))


def test_grid_data():
    y = np.arange(-10.0, 10.0, 0.005)
    u = GridData(y=y, values=np.exp(-(y**2) / 2).astype(complex))
    z = 0.3 - 0.5j
    assert transform_values(u, z, 0.1) == pytest.approx(_unit_gaussian_transform(z, 0.1), rel=1e-10)
    coarse = GridData(y=y[::20], values=u.values[::20])
    with pytest.raises(UnresolvedIntegrand):
        transform_values(coarse, z, 0.1)


def test_linearity():
    a, b = Kink(x_k=0.0), Packet(center=0.5, k=3.0, width=0.5)
    combo = FunctionData(lambda y: 2.0 * a(y) - 1j * b(y), -18.0, 18.0, breakpoints=(0.0,))
    z = np.array([0.1 - 0.3j, 1.0 - 1.0j])
    expected = 2.0 * transform_values(a, z, 0.1) - 1j * transform_values(b, z, 0.1)
    assert np.allclose(transform_values(combo, z, 0.1), expected, rtol=1e-10)


def test_cauchy_riemann():
    x = np.linspace(-0.2, 0.2, 41)
    y = np.linspace(-1.1, -0.9, 21)
    z = x[None, :] + 1j * y[:, None]
    u = Packet(center=0.0, k=10.0, width=0.1)
    values = transform_values(u, z, 0.1)
    assert cauchy_riemann_residual(values, x, y) <= 1e-2
    assert cauchy_riemann_residual(np.conj(values), x, y) >= 0.5


def test_packet_derivatives_match_quadrature():
    u = Packet(center=0.0, k=10.0, width=0.1)
    z = np.array([0.1 - 1.0j])
    for order in (1, 2):
        exact = u.transform_derivative(z, 0.1, order)
        assert np.allclose(bargmann_derivative(u, z, 0.1, order), exact, rtol=1e-9)


def test_op_r_identity(defaults):
    h = 0.05
    u = Packet.coherent(0.0, 1.0, h)
    z = 0.2 - 1.0j
    v = lambda y: u.transform(y, h)  # noqa: E731
    value = op_r_apply(lambda zm, zeta: np.ones_like(zeta), v, z, h, defaults.fbi.R)
    weight = np.exp(-0.5 * z.imag**2 / h)
    assert abs(value - v(z)) * weight <= 1e-6


def test_op_r_coarse_quadrature_rejected(defaults):
    h = 0.05
    u = Packet.coherent(0.0, 1.0, h)
    with pytest.raises(QuadratureNotConverged):
        op_r_apply(
            lambda zm, zeta: zeta,
            lambda y: u.transform(y, h),
            0.2 - 1.0j,
            h,
            defaults.fbi.R,
            radial_nodes=4,
            angular_nodes=4,
        )


@pytest.mark.parametrize("order", [0, 1, 2])
def test_derivative_residual_is_exponentially_small(order):
    report = derivative_residual(
        lambda h: Packet.coherent(0.0, 1.0, h), [0.1 - 1.0j], [0.2, 0.1, 0.05], order=order
    )
    assert report.exponential
    assert report.residuals[-1] < report.residuals[0]


def test_linear_coefficient_intertwines(defaults):
    u = Packet(center=0.0, k=0.0, width=0.5)
    report = intertwining_residual(lambda x: x, u, [0.1 - 0.5j], [0.2, 0.1, 0.05], defaults.fbi.R)
    assert report.exponential


def test_constant_coefficient_intertwines(defaults):
    u = Packet(center=0.0, k=0.0, width=0.5)
    report = intertwining_residual(
        lambda x: np.ones_like(np.asarray(x), dtype=complex), u, [0.1 - 0.5j], [0.05], defaults.fbi.R
    )
    assert report.residuals[0] <= 1e-7


def test_potential_coefficient_intertwines(potential, defaults):
    u = Packet(center=4.0, k=0.0, width=0.5)
    a = coefficient_function(potential)
    report = intertwining_residual(a, u, [4.0 - 0.5j], [0.2, 0.1, 0.05], defaults.modevol.symbol_R)
    assert report.exponential


def test_dx_intertwining_is_exact():
    u = Packet(center=0.0, k=5.0, width=0.3)
    assert dx_intertwining_residual(u, [0.1 - 0.5j, -0.2 - 1.0j], 0.1) <= 1e-10


def test_neighbourhood_minimum():
    grid = neighborhood_grid(1.0 - 1.0j, 0.1)
    assert grid.size == 9
    field = bargmann(Jump(x_k=0.0, window=None), grid, LADDER)
    estimate = decay_rate(field)
    assert neighborhood_delta(estimate, 1.0 - 1.0j, 0.1) >= 0.05
    with pytest.raises(PreconditionViolated):
        neighborhood_delta(estimate, 5.0, 0.1)


def test_u0_descriptors():
    jump = u0_function(HeavisideConfig(kind="heaviside", x_k=0.5), 0.1)
    assert isinstance(jump, Jump) and jump.x_k == 0.5
    packet = u0_function(GaussianConfig(kind="gaussian", center=1.0, xi_c=2.0), 0.1)
    assert packet.k == pytest.approx(20.0)
    assert packet.width == pytest.approx(0.1)
    kink = u0_function(KinkConfig(kind="kink"), 0.1)
    assert kink(np.array([-1.0]))[0].real == pytest.approx(np.exp(-1.0 / 8.0))


def test_field_rows():
    field = bargmann(Packet(center=0.0, k=0.0, width=1.0), [0.0, -1.0j], [0.2, 0.1])
    header, rows = field_rows(field)
    assert header[-1] == "weighted"
    assert len(rows) == 4
    assert rows[0][5] == pytest.approx(abs(field.values[0, 0]))
