import numpy as np
import pytest

from internal.dependencies.errors import NewtonDiverged
from internal.numerics.fitting import extrapolate, least_squares, loglog_slope, richardson_pair
from internal.numerics.newton import ScalarBatchNewton, VectorBatchNewton
from internal.numerics.quadrature import composite_gauss_legendre, gauss_legendre, panel_breaks, smooth_step
from internal.numerics.sampling import halton_ball, sphere_shell

LADDER = [0.1, 0.05, 0.025, 0.0125]


def test_extrapolate_recovers_the_limit():
    h = np.array(LADDER)
    fit = extrapolate(h, 2.0 + 3.0 * h**0.5, 0.5)
    assert fit.limit == pytest.approx(2.0, abs=1e-10)
    assert fit.leading == pytest.approx(3.0, abs=1e-8)
    assert fit.error < 1e-10


def test_extrapolate_complex_columns():
    h = np.array(LADDER[:3])
    values = np.stack([1.0 - 1j + h, 2.0 * h**0.5], axis=1)
    fit = extrapolate(h, values, 1.0)
    assert fit.limit[0] == pytest.approx(1.0 - 1j, abs=1e-10)
    assert fit.limit.shape == (2,)


def test_constant_data_fits_perfectly():
    fit = least_squares(np.ones((3, 1)), np.full(3, 4.0))
    assert fit.r2 == 1.0
    assert fit.coeffs[0] == pytest.approx(4.0)


def test_loglog_slope():
    x = np.array([1.0, 10.0, 100.0])
    slope, r2 = loglog_slope(x, 5.0 * x**-1.5)
    assert slope == pytest.approx(-1.5)
    assert r2 == pytest.approx(1.0)


def test_loglog_slope_below_floor():
    slope, _ = loglog_slope([1.0, 10.0, 100.0], [1.0, 0.0, 0.0], floor=1e-300)
    assert slope == -np.inf


def test_richardson_pair_removes_the_leading_term():
    assert richardson_pair(1.0 + 0.04, 1.0 + 0.01, order=2) == pytest.approx(1.0)


def test_gauss_legendre_degree():
    x, w = gauss_legendre(4, 0.0, 2.0)
    assert np.sum(w * x**7) == pytest.approx(32.0)


def test_composite_rule_on_panels():
    breaks = panel_breaks(0.0, 1.0, 0.3, extra=(0.5, 2.0))
    assert breaks.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    x, w = composite_gauss_legendre(breaks, 6)
    assert np.sum(w * np.exp(x)) == pytest.approx(np.e - 1.0, abs=1e-12)


def test_smooth_step():
    t = np.array([-1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0])
    out = smooth_step(t)
    assert out[0] == 0.0 and out[1] == 0.0
    assert out[-1] == 1.0 and out[-2] == 1.0
    assert out[3] == pytest.approx(0.5)
    assert np.all(np.diff(out) >= 0.0)


def test_halton_ball_is_deterministic_and_inside():
    p = halton_ball(50, 4, 0.05, norm_groups=2)
    assert p.shape == (50, 4)
    norms = np.linalg.norm(p[:, :2], axis=1) + np.linalg.norm(p[:, 2:], axis=1)
    assert np.all(norms <= 0.05)
    assert np.array_equal(p, halton_ball(50, 4, 0.05, norm_groups=2))


def test_sphere_shell_on_the_rim():
    p = sphere_shell(20, 2, 0.3)
    assert np.allclose(np.linalg.norm(p, axis=1), 0.3)


def test_scalar_newton():
    result = ScalarBatchNewton(lambda x: x**3).solve(np.array([8.0, 27.0]), np.array([1.5, 2.5]))
    assert result.solution == pytest.approx([2.0, 3.0], abs=1e-10)
    assert result.residual <= 1e-10


def test_scalar_newton_without_a_root():
    with pytest.raises(NewtonDiverged) as e:
        ScalarBatchNewton(lambda x: x**2 + 1.0, max_iter=20).solve(np.array([0.0]), np.array([0.3]))
    assert e.value.details["max_iter"] == 20


def test_vector_newton_on_a_linear_map():
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    target = np.array([[1.0, 2.0], [-1.0, 0.5]])
    result = VectorBatchNewton(lambda x: x @ A.T).solve(target, np.zeros((2, 2)))
    assert np.allclose(result.solution @ A.T, target, atol=1e-9)
