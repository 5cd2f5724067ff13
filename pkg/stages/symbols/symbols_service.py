import logging
from typing import Tuple

import numpy as np

from internal.config.config_model import FamilyConfig, SymbolsSection
from internal.dependencies.errors import BoundViolated, PointOutsideDomain

from .symbols_model import AssumptionReport, CoefficientBundle, MetricFamily, SymbolPoint

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

DEFAULT_SAFETY = 0.9


def family_from_config(cfg: FamilyConfig) -> MetricFamily:
    params = {} if cfg.name == "flat" else {"eps": cfg.eps}
    return MetricFamily(name=cfg.name, sigma=cfg.sigma, nu=cfg.nu, C0=cfg.C0, params=params, dim=cfg.dim)


def as_points(fam: MetricFamily, x) -> np.ndarray:
    """Complex array of shape (..., n); scalars and flat arrays are 1-D points."""
    x = np.asarray(x, dtype=complex)
    if fam.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != fam.dim:
        raise ValueError(f"expected trailing dimension {fam.dim}, got shape {x.shape}")
    return x


def bracket(x: np.ndarray) -> np.ndarray:
    """Holomorphic <x> = (1 + sum x_j^2)^(1/2), principal branch."""
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


def domain_margin(fam: MetricFamily, x, safety: float = DEFAULT_SAFETY) -> np.ndarray:
    """safety*nu*<Re x> - |Im x|; positive inside the working domain."""
    x = as_points(fam, x)
    re_norm = np.linalg.norm(x.real, axis=-1)
    im_norm = np.linalg.norm(x.imag, axis=-1)
    return safety * fam.nu * np.sqrt(1.0 + re_norm**2) - im_norm


def require_domain(fam: MetricFamily, x, safety: float = DEFAULT_SAFETY) -> None:
    margin = domain_margin(fam, x, safety)
    if np.any(margin <= 0.0):
        x = as_points(fam, x)
        worst = np.unravel_index(np.argmin(margin), margin.shape)
        raise PointOutsideDomain(
            f"point outside the coefficient domain (safety {safety} nu)",
            {"x": x[worst], "margin": float(margin[worst])},
        )


def eval_coeffs(fam: MetricFamily, x, safety: float = DEFAULT_SAFETY) -> CoefficientBundle:
    """Exact holomorphic coefficients at x (shape (..., n) or scalar when n = 1)."""
    x = as_points(fam, x)
    require_domain(fam, x, safety)
    n = fam.dim
    shape = x.shape[:-1]
    eye = np.broadcast_to(np.eye(n, dtype=complex), shape + (n, n))
    metric = eye.copy()
    drift = np.zeros(shape + (n,), dtype=complex)
    potential = np.zeros(shape, dtype=complex)
    eps, sigma = fam.eps, fam.sigma
    if fam.name == "bump":
        metric = metric + eps * np.exp(-np.sum(x * x, axis=-1))[..., None, None] * eye
    elif fam.name == "drift":
        drift = eps * x * bracket(x)[..., None] ** (-sigma)
    elif fam.name == "potential":
        potential = eps * bracket(x) ** (2.0 - sigma)
    return CoefficientBundle(metric=metric, drift=drift, potential=potential)


def symbol_parts(fam: MetricFamily, x, xi) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(q0, q1, q2) without the h factors and without the domain check."""
    x = as_points(fam, x)
    xi = as_points(fam, xi)
    eps, sigma = fam.eps, fam.sigma
    kinetic = 0.5 * np.sum(xi * xi, axis=-1)
    zero = np.zeros(np.broadcast_shapes(x.shape, xi.shape)[:-1], dtype=complex)
    q0, q1, q2 = kinetic + zero, zero, zero
    if fam.name == "bump":
        q0 = kinetic * (1.0 + eps * np.exp(-np.sum(x * x, axis=-1)))
    elif fam.name == "drift":
        q1 = eps * np.sum(x * xi, axis=-1) * bracket(x) ** (-sigma)
    elif fam.name == "potential":
        q2 = eps * bracket(x) ** (2.0 - sigma) + zero
    return q0, q1, q2


def q_value(fam: MetricFamily, x, xi, h: float, principal: bool = False) -> np.ndarray:
    """q = q0 + h q1 + h^2 q2 (or q0 alone), vectorized, no domain check."""
    q0, q1, q2 = symbol_parts(fam, x, xi)
    if principal:
        return q0
    return q0 + h * q1 + h * h * q2


def q_gradients(
    fam: MetricFamily, x, xi, h: float, principal: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """(d_x q, d_xi q), each of shape (..., n)."""
    x = as_points(fam, x)
    xi = as_points(fam, xi)
    eps, sigma = fam.eps, fam.sigma
    x, xi = np.broadcast_arrays(x, xi)
    q_x = np.zeros(x.shape, dtype=complex)
    q_xi = xi.astype(complex)
    if fam.name == "bump":
        gauss = eps * np.exp(-np.sum(x * x, axis=-1))[..., None]
        q_x = -x * gauss * np.sum(xi * xi, axis=-1)[..., None]
        q_xi = xi * (1.0 + gauss)
    elif fam.name == "drift" and not principal:
        b = bracket(x)[..., None]
        x_dot_xi = np.sum(x * xi, axis=-1)[..., None]
        q_x = h * eps * (xi * b ** (-sigma) - sigma * x_dot_xi * x * b ** (-sigma - 2.0))
        q_xi = xi + h * eps * x * b ** (-sigma)
    elif fam.name == "potential" and not principal:
        b = bracket(x)[..., None]
        q_x = h * h * eps * (2.0 - sigma) * x * b ** (-sigma)
    return q_x, q_xi


def q_total(fam: MetricFamily, pt: SymbolPoint) -> complex:
    """q(x, xi; h) at one point, with the domain check."""
    x = pt.position()
    require_domain(fam, x)
    value = q_value(fam, x, pt.momentum(), pt.h)
    return complex(value.reshape(-1)[0])


def tilde_q(fam: MetricFamily, z, zeta, order: int) -> np.ndarray:
    """q_order evaluated at (z + i zeta, zeta)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    z = as_points(fam, z)
    zeta = as_points(fam, zeta)
    position = z + 1j * zeta
    require_domain(fam, position)
    parts = symbol_parts(fam, position, zeta)
    value = parts[order]
    return value if value.ndim else complex(value)


def _sample_grid(fam: MetricFamily, grid: SymbolsSection) -> np.ndarray:
    re = np.linspace(-grid.R_max, grid.R_max, grid.grid_points)
    frac = np.union1d(np.linspace(-1.0, 1.0, grid.grid_points) * (1.0 - 1e-9), [0.0])
    re_g, frac_g = np.meshgrid(re, frac, indexing="ij")
    im_g = frac_g * grid.safety * fam.nu * np.sqrt(1.0 + re_g**2)
    points = (re_g + 1j * im_g).ravel()
    x = np.zeros(points.shape + (fam.dim,), dtype=complex)
    x[:, 0] = points
    return x


def check_assumption_a(fam: MetricFamily, grid: SymbolsSection) -> AssumptionReport:
    """Sampled coefficient bounds on the domain plus the real positivity margin."""
    x = _sample_grid(fam, grid)
    coeffs = eval_coeffs(fam, x, safety=grid.safety)
    size = np.sqrt(1.0 + np.sum(np.abs(x) ** 2, axis=-1))
    eye = np.eye(fam.dim)
    metric_dev = np.max(np.abs(coeffs.metric - eye), axis=(-2, -1))
    ratios = np.stack(
        [
            metric_dev / (fam.C0 * size ** (-fam.sigma)),
            np.linalg.norm(coeffs.drift, axis=-1) / (fam.C0 * size ** (1.0 - fam.sigma)),
            np.abs(coeffs.potential) / (fam.C0 * size ** (2.0 - fam.sigma)),
        ]
    )
    real = np.abs(x.imag[:, 0]) == 0.0
    real_metric = coeffs.metric[real].real
    min_eig = float(np.min(np.linalg.eigvalsh(real_metric))) if real_metric.size else np.inf
    worst = int(np.argmax(np.max(ratios, axis=0)))
    worst_ratio = float(np.max(ratios))
    passed = worst_ratio <= 1.0 + 1e-12 and min_eig > 0.0
    report = AssumptionReport(
        metric_ratio=float(np.max(ratios[0])),
        drift_ratio=float(np.max(ratios[1])),
        potential_ratio=float(np.max(ratios[2])),
        min_eigenvalue=min_eig,
        samples=len(x),
        worst_sample=[float(x[worst, 0].real), float(x[worst, 0].imag)],
        passed=passed,
    )
    if not passed:
        logger.error(f"Assumption A check failed for {fam.name}: worst ratio {worst_ratio:.3e}")
        raise BoundViolated(
            f"coefficient bound violated for family {fam.name}",
            report.model_dump(),
        )
    logger.info(f"Successfully checked Assumption A for {fam.name} on {len(x)} samples")
    return report
