import mpmath as mp
import numpy as np
import pytest

from internal.dependencies.errors import BoundViolated, PointOutsideDomain
from stages.symbols.symbols_model import MetricFamily, SymbolPoint
from stages.symbols.symbols_service import (
    check_assumption_a,
    eval_coeffs,
    q_total,
    symbol_parts,
    tilde_q,
)

mp.mp.dps = 30


def _oracle_q(name, x, xi, h, eps=0.1, sigma=0.5):
    x, xi = mp.mpc(x), mp.mpc(xi)
    bracket = mp.sqrt(1 + x * x)
    q0 = xi * xi / 2
    q1 = mp.mpf(0)
    q2 = mp.mpf(0)
    if name == "bump":
        q0 = q0 * (1 + eps * mp.exp(-x * x))
    elif name == "drift":
        q1 = eps * x * xi * bracket ** (-sigma)
    elif name == "potential":
        q2 = eps * bracket ** (2 - sigma)
    return complex(q0 + h * q1 + h * h * q2)


def test_flat_coefficients_are_identity(flat):
    c = eval_coeffs(flat, 3.0 - 0.5j)
    assert np.allclose(c.metric, np.eye(1))
    assert np.all(c.drift == 0)
    assert c.potential == 0


def test_potential_at_origin(potential):
    c = eval_coeffs(potential, 0.0)
    assert c.potential == pytest.approx(0.1)


def test_bump_metric_matches_high_precision(bump):
    x = 1 + 0.1j
    expected = complex(1 + mp.mpf("0.1") * mp.exp(-mp.mpc(1, 0.1) ** 2))
    value = eval_coeffs(bump, x).metric[0, 0]
    assert abs(value - expected) < 1e-14


def test_outside_domain_raises(bump):
    with pytest.raises(PointOutsideDomain):
        eval_coeffs(bump, 1.0 + 5.0j)


def test_q_total_values(flat, potential):
    assert q_total(flat, SymbolPoint(x=0.0, xi=2.0, h=0.3)) == pytest.approx(2.0)
    assert q_total(potential, SymbolPoint(x=0.0, xi=1.0, h=0.1)) == pytest.approx(0.501)


@pytest.mark.parametrize("name", ["bump", "drift", "potential"])
def test_q_total_matches_high_precision(name):
    fam = MetricFamily(name=name, params={"eps": 0.1})
    x, xi, h = 1 + 0.1j, 1 - 0.05j, 0.05
    value = q_total(fam, SymbolPoint(x=x, xi=xi, h=h))
    assert abs(value - _oracle_q(name, x, xi, h)) < 1e-14


def test_tilde_q_flat(flat):
    assert tilde_q(flat, 0.3 - 1j, 1.0, 0) == pytest.approx(0.5)
    assert tilde_q(flat, 0.3 - 1j, 1.0, 1) == 0


def test_tilde_q_reads_real_position(bump):
    z, zeta = 1 - 1j, 1.0
    direct = symbol_parts(bump, np.array([1.0]), np.array([1.0]))
    for order in range(3):
        assert tilde_q(bump, z, zeta, order) == pytest.approx(complex(direct[order]))


@pytest.mark.parametrize("name", ["bump", "drift", "potential"])
def test_reality_and_conjugate_symmetry(name):
    fam = MetricFamily(name=name, params={"eps": 0.1})
    real = q_total(fam, SymbolPoint(x=0.7, xi=-1.3, h=0.1))
    assert real.imag == 0.0
    pt = SymbolPoint(x=1.2 + 0.2j, xi=0.8 - 0.1j, h=0.1)
    conj = SymbolPoint(x=1.2 - 0.2j, xi=0.8 + 0.1j, h=0.1)
    assert q_total(fam, conj) == pytest.approx(np.conj(q_total(fam, pt)), abs=1e-14)


def test_assumption_a_flat(flat, defaults):
    report = check_assumption_a(flat, defaults.symbols)
    assert report.passed
    assert report.metric_ratio == 0.0
    assert report.drift_ratio == 0.0
    assert report.potential_ratio == 0.0
    assert report.min_eigenvalue == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["bump", "drift", "potential"])
def test_assumption_a_built_ins(name, defaults):
    report = check_assumption_a(MetricFamily(name=name, params={"eps": 0.1}), defaults.symbols)
    assert report.passed
    assert report.min_eigenvalue > 0.0


def test_potential_bound_saturates(defaults):
    fam = MetricFamily.potential(eps=1.0)
    report = check_assumption_a(fam, defaults.symbols)
    assert report.potential_ratio <= 1.0 + 1e-12
    assert report.potential_ratio > 0.99


def test_constructed_violation(defaults):
    fam = MetricFamily.bump(eps=2.0)
    grid = defaults.symbols.model_copy(update={"grid_points": 41})
    with pytest.raises(BoundViolated) as info:
        check_assumption_a(fam, grid)
    assert info.value.details["metric_ratio"] >= 2.0 - 1e-12