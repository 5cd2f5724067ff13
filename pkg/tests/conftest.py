import pytest

from internal.config.config_service import get_lab_defaults
from stages.hj_phase.hj_phase_model import ReferenceConfig
from stages.hj_phase.hj_phase_service import build_phase
from stages.symbols.symbols_model import MetricFamily


@pytest.fixture(scope="session")
def defaults():
    return get_lab_defaults()


@pytest.fixture(scope="session")
def flat():
    return MetricFamily.flat()


@pytest.fixture(scope="session")
def bump():
    return MetricFamily.bump(eps=0.1)


@pytest.fixture(scope="session")
def drift():
    return MetricFamily.drift(eps=0.1)


@pytest.fixture(scope="session")
def potential():
    return MetricFamily.potential(eps=0.1)


@pytest.fixture(scope="session")
def small_phase(defaults):
    """Knot budget used by the tests."""
    return defaults.phase.model_copy(update={"s_knots": 6, "xi_knots": 8})


def reference(h: float = 0.05, R: float = 8.0, delta0: float = 0.25) -> ReferenceConfig:
    return ReferenceConfig(delta0=delta0, delta=delta0 / 2, R_delta=R, h=h, s_horizon=2.0 / h)


@pytest.fixture(scope="session")
def make_reference():
    """Hand-built reference ray, skipping the R_delta search."""
    return reference


@pytest.fixture(scope="session")
def flat_phase(flat, small_phase):
    return build_phase(flat, reference(), 1200.0, small_phase, extra_s=(10.0, 100.0, 1000.0))


@pytest.fixture(scope="session")
def bump_phase(bump, small_phase):
    return build_phase(bump, reference(), 1200.0, small_phase, extra_s=(10.0, 20.0, 100.0, 1000.0))