import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from internal.config.config_model import FbiSection, U0Config
from internal.config.config_service import get_lab_defaults
from internal.dependencies.errors import (
    FitDegenerate,
    PreconditionViolated,
    QuadratureNotConverged,
    UnresolvedIntegrand,
)
from internal.dependencies.workers import WorkerPool, default_pool
from internal.numerics.fitting import least_squares
from internal.numerics.quadrature import composite_gauss_legendre, gauss_legendre, panel_breaks
from stages.symbols.symbols_model import MetricFamily
from stages.symbols.symbols_service import eval_coeffs

from .fbi_quantize_model import (
    DecayEstimate,
    FBIField,
    FunctionData,
    GridData,
    Jump,
    Kink,
    Packet,
    ResidualReport,
    SampledFunction,
)

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

UNDERFLOW = 1e-300
FIELD_HEADER = ["re_z", "im_z", "h", "re_val", "im_val", "weighted"]
DECAY_HEADER = ["re_z", "im_z", "delta", "r2"]

Data = Union[SampledFunction, Callable[[float], SampledFunction]]


def _fbi_settings(settings: Optional[FbiSection]) -> FbiSection:
    return settings if settings is not None else get_lab_defaults().fbi


def u0_function(cfg: U0Config, h: float) -> SampledFunction:
    """Evaluator of a u0 descriptor at one h (carriers and coherent widths scale with h)."""
    if cfg.kind == "heaviside":
        return Jump(x_k=cfg.x_k, window=cfg.window, edge=cfg.edge)
    if cfg.kind == "gaussian":
        return Packet.coherent(cfg.center, cfg.xi_c, h, cfg.width)
    return Kink(x_k=cfg.x_k, window=cfg.window)


def _data_at(u: Data, h: float) -> SampledFunction:
    return u if isinstance(u, SampledFunction) else u(h)


def _kernel(z, y, h: float, order: int = 0):
    """d_z^order exp(-(z - y)^2 / 2h)."""
    d = z - y
    base = np.exp(-(d * d) / (2.0 * h))
    if order == 0:
        return base
    if order == 1:
        return -(d / h) * base
    if order == 2:
        return ((d * d) / (h * h) - 1.0 / h) * base
    raise ValueError(f"unsupported derivative order {order}")


def _grid_values(u: GridData, z: np.ndarray, h: float, settings: FbiSection, order: int = 0) -> np.ndarray:
    """Trapezoid rule over the grid nodes with |y - Re z| <= sqrt(2 h tail_L), batched over z."""
    dy = u.spacing
    if dy > np.sqrt(h) / 8.0:
        logger.error(f"Grid spacing {dy:.3e} does not resolve sqrt(h)/8 at h={h}")
        raise UnresolvedIntegrand("grid spacing exceeds sqrt(h)/8", {"spacing": dy, "h": h})
    flat = np.asarray(z, dtype=complex).ravel()
    half = np.sqrt(2.0 * h * settings.tail_L)
    size = u.y.size
    width = int(np.floor(2.0 * half / dy)) + 3
    offsets = np.arange(width)
    first = np.floor((flat.real - half - u.y[0]) / dy).astype(int)
    out = np.zeros(flat.size, dtype=complex)
    chunk = max(1, 2**21 // width)
    for start in range(0, flat.size, chunk):
        rows = slice(start, start + chunk)
        idx = first[rows, None] + offsets[None, :]
        inside = (idx >= 0) & (idx < size)
        idx = np.clip(idx, 0, size - 1)
        y = u.y[idx]
        inside &= np.abs(y - flat.real[rows, None]) <= half
        weights = dy * inside
        lead = np.argmax(inside, axis=1)
        tail = width - 1 - np.argmax(inside[:, ::-1], axis=1)
        line = np.arange(idx.shape[0])
        weights[line, lead] -= 0.5 * dy
        weights[line, tail] -= 0.5 * dy
        weights[inside.sum(axis=1) < 2] = 0.0
        kernel = _kernel(flat[rows, None], y, h, order)
        out[rows] = np.sum(weights * kernel * u.values[idx], axis=1)
    return out.reshape(np.shape(z))


def _transform_point(u: SampledFunction, z: complex, h: float, settings: FbiSection, order: int = 0):
    x = z.real
    half = np.sqrt(2.0 * h * settings.tail_L)
    lo, hi = u.support()
    a, b = max(x - half, lo), min(x + half, hi)
    if a >= b:
        return 0j
    breaks = panel_breaks(a, b, 2.0 * np.sqrt(h), u.breakpoints)
    y, w = composite_gauss_legendre(breaks, settings.quad_nodes)
    return complex(np.sum(w * _kernel(z, y, h, order) * u(y)))


def transform_values(
    u: SampledFunction,
    z,
    h: float,
    settings: Optional[FbiSection] = None,
    closed_form: bool = True,
) -> np.ndarray:
    """T u at every z; the closed form is used when the data provides one."""
    settings = _fbi_settings(settings)
    z = np.asarray(z, dtype=complex)
    if closed_form:
        exact = u.transform(z, h)
        if exact is not None:
            return np.asarray(exact, dtype=complex)
    if isinstance(u, GridData):
        return _grid_values(u, z, h, settings)
    flat = z.ravel()
    return np.array([_transform_point(u, zj, h, settings) for zj in flat]).reshape(z.shape)


def transform_evaluator(u: SampledFunction, h: float, settings: Optional[FbiSection] = None):
    """z -> T u(z) for the Op_R quadratures."""

    def v(z):
        return transform_values(u, z, h, settings)

    return v


def bargmann(
    u: Data,
    z_grid,
    h_ladder: Sequence[float],
    settings: Optional[FbiSection] = None,
    closed_form: bool = True,
    pool: WorkerPool = default_pool,
) -> FBIField:
    """T u(z, h) = int exp(-(z - y)^2 / 2h) u(y) dy over the z grid and the ladder.

    ``u`` is real-line data or a map h -> data for h-dependent inputs.
    """
    settings = _fbi_settings(settings)
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    ladder = np.asarray(h_ladder, dtype=float)
    rows = pool.map(
        lambda h: transform_values(_data_at(u, h), z, h, settings, closed_form), ladder
    )
    logger.info(f"Successfully transformed on {z.size} points x {ladder.size} ladder values")
    return FBIField(z=z, h_ladder=ladder, values=np.array(rows))


def bargmann_derivative(
    u: SampledFunction, z, h: float, order: int, settings: Optional[FbiSection] = None
) -> np.ndarray:
    """d_z^order T u by quadrature against the differentiated kernel."""
    settings = _fbi_settings(settings)
    z = np.asarray(z, dtype=complex)
    if isinstance(u, GridData):
        return _grid_values(u, z, h, settings, order)
    flat = z.ravel()
    return np.array([_transform_point(u, zj, h, settings, order) for zj in flat]).reshape(z.shape)


def _fit_column(h: np.ndarray, log_weighted: np.ndarray, phi0: float, model: str):
    raw = log_weighted + phi0 / h
    if not np.all(np.isfinite(raw)) or np.any(raw <= np.log(UNDERFLOW)):
        raise FitDegenerate("transform values underflow", {"min_log": float(np.min(raw))})
    columns = [np.ones_like(h), -1.0 / h]
    if model == "free":
        columns.insert(1, np.log(h))
    fit = least_squares(np.stack(columns, axis=1), log_weighted)
    power = float(fit.coeffs[1]) if model == "free" else 0.0
    return float(fit.coeffs[-1]), fit.r2, power


def decay_rate(field: FBIField, model: str = "free", threshold: Optional[float] = None) -> DecayEstimate:
    """Per-z fit of ln|T u| - Phi0/h = a (+ c ln h) - delta/h over the ladder."""
    h = field.h_ladder
    if h.size < 4 or h.max() / h.min() < 2.0:
        raise PreconditionViolated(
            "decay fit needs at least 4 ladder points spanning an octave", {"h_ladder": h}
        )
    if model not in ("free", "plain"):
        raise ValueError(f"unknown decay model {model}")
    logw = field.log_weighted()
    deltas, r2s, powers = [], [], []
    for j, phi0 in enumerate(field.phi0):
        try:
            delta, r2, power = _fit_column(h, logw[:, j], phi0, model)
        except FitDegenerate as e:
            logger.debug(f"Underflow at z={field.z[j]}: {e.details}")
            delta, r2, power = np.inf, 1.0, 0.0
        deltas.append(delta)
        r2s.append(r2)
        powers.append(power)
    return DecayEstimate(
        z=field.z.tolist(), delta=deltas, r2=r2s, power=powers, model=model, threshold=threshold
    )


def neighborhood_delta(estimate: DecayEstimate, center: complex, radius: float) -> float:
    """min delta over z with |Re(z - center)| <= radius and |Im(z - center)| <= radius."""
    z = np.asarray(estimate.z, dtype=complex)
    delta = np.asarray(estimate.delta, dtype=float)
    inside = (np.abs((z - center).real) <= radius + 1e-12) & (np.abs((z - center).imag) <= radius + 1e-12)
    if not inside.any():
        raise PreconditionViolated("no estimate inside the neighbourhood", {"center": center})
    return float(np.min(delta[inside]))


def neighborhood_grid(center: complex, radius: float, points: int = 3) -> np.ndarray:
    """points x points grid of the square neighbourhood of center."""
    offsets = np.linspace(-radius, radius, points) if points > 1 else np.zeros(1)
    return (center + offsets[None, :] + 1j * offsets[:, None]).ravel()


def _op_r_nodes(R: float, radial: int, angular: int):
    rho, w_rho = gauss_legendre(radial, 0.0, R**-0.5)
    theta = 2.0 * np.pi * np.arange(angular) / angular
    w = (rho[:, None] * np.exp(1j * theta[None, :])).ravel()
    area = (w_rho[:, None] * rho[:, None] * np.full((1, angular), 2.0 * np.pi / angular)).ravel()
    return w, area


def _op_r_sum(a_tilde, v, z: complex, h: float, R: float, nodes) -> complex:
    w, area = nodes
    y = z - w
    zeta = -z.imag + 1j * R * np.conj(w)
    integrand = np.exp(1j * w * zeta / h) * a_tilde(0.5 * (y + z), zeta) * v(y)
    return complex(R / (np.pi * h) * np.sum(area * integrand))


def op_r_apply(
    a_tilde: Callable,
    v: Callable,
    z: complex,
    h: float,
    R: float,
    radial_nodes: int = 48,
    angular_nodes: int = 64,
    check: bool = True,
    tol: float = 1e-8,
) -> complex:
    """Op_R(a) v(z) over zeta = -Im z + i R conj(z - y), |z - y| < R^(-1/2).

    The symbol is read at the midpoint ((y + z)/2, zeta); the contour is
    parametrized in polar coordinates around z.
    """
    z = complex(z)
    value = _op_r_sum(a_tilde, v, z, h, R, _op_r_nodes(R, radial_nodes, angular_nodes))
    if not check:
        return value
    fine = _op_r_sum(a_tilde, v, z, h, R, _op_r_nodes(R, 2 * radial_nodes, 2 * angular_nodes))
    scale = max(abs(fine), np.exp(0.5 * z.imag**2 / h))
    if abs(fine - value) > tol * scale:
        logger.error(f"Op_R quadrature moved by {abs(fine - value) / scale:.3e} under refinement")
        raise QuadratureNotConverged(
            "Op_R quadrature not reproducible under refinement",
            {"z": z, "h": h, "R": R, "relative_change": abs(fine - value) / scale},
        )
    return fine


def residual_report(name: str, h_ladder, residuals, details=None) -> ResidualReport:
    h = np.asarray(h_ladder, dtype=float)
    residuals = np.maximum(np.asarray(residuals, dtype=float), UNDERFLOW)
    fit = least_squares(np.stack([np.ones_like(h), 1.0 / h], axis=1), np.log(residuals))
    slope = float(fit.coeffs[1])
    return ResidualReport(
        name=name,
        h_ladder=h.tolist(),
        residuals=residuals.tolist(),
        slope=slope,
        r2=fit.r2,
        exponential=slope < 0.0,
        details=details or {},
    )


def _weight(z, h: float) -> np.ndarray:
    return np.exp(-0.5 * np.asarray(z).imag ** 2 / h)


def derivative_residual(
    u: Data,
    z_points,
    h_ladder: Sequence[float],
    order: int = 1,
    R: Optional[float] = None,
    settings: Optional[FbiSection] = None,
) -> ResidualReport:
    """Weighted sup of |Op_R(zeta^order) T u - (h D_z)^order T u| per ladder point."""
    settings = _fbi_settings(settings)
    R = settings.R if R is None else R
    z_points = np.atleast_1d(np.asarray(z_points, dtype=complex))

    def symbol(_, zeta):
        return zeta**order

    residuals = []
    for h in h_ladder:
        data = _data_at(u, h)
        v = transform_evaluator(data, h, settings)
        if isinstance(data, Packet):
            exact = data.transform_derivative(z_points, h, order)
        else:
            exact = bargmann_derivative(data, z_points, h, order, settings)
        exact = (h / 1j) ** order * exact
        approx = np.array(
            [
                op_r_apply(symbol, v, zj, h, R, settings.radial_nodes, settings.angular_nodes)
                for zj in z_points
            ]
        )
        residuals.append(float(np.max(_weight(z_points, h) * np.abs(approx - exact))))
    report = residual_report(f"derivative_order_{order}", h_ladder, residuals, {"R": R})
    logger.info(f"Successfully measured the order-{order} derivative residual, slope {report.slope:.3g}")
    return report


def coefficient_function(fam: MetricFamily, part: str = "potential") -> Callable:
    """Holomorphic coefficient x -> a(x) of a family, as a multiplication symbol."""

    def a(x):
        c = eval_coeffs(fam, np.asarray(x, dtype=complex))
        if part == "potential":
            return c.potential
        if part == "metric":
            return c.metric[..., 0, 0]
        if part == "drift":
            return c.drift[..., 0]
        raise ValueError(f"unknown coefficient {part}")

    return a


def intertwining_residual(
    a: Callable,
    u: SampledFunction,
    z_region,
    h_ladder: Sequence[float],
    R: float,
    settings: Optional[FbiSection] = None,
) -> ResidualReport:
    """Weighted sup over the region of |T(a u) - Op_R(a(z + i zeta)) T u| per ladder point."""
    settings = _fbi_settings(settings)
    z_region = np.atleast_1d(np.asarray(z_region, dtype=complex))
    lo, hi = u.support()
    product = FunctionData(lambda y: a(y) * u(y), lo, hi, tuple(u.breakpoints))

    def a_tilde(z_mid, zeta):
        return a(z_mid + 1j * zeta)

    residuals = []
    for h in h_ladder:
        direct = transform_values(product, z_region, h, settings)
        v = transform_evaluator(u, h, settings)
        quantized = np.array(
            [
                op_r_apply(a_tilde, v, zj, h, R, settings.radial_nodes, settings.angular_nodes)
                for zj in z_region
            ]
        )
        residuals.append(float(np.max(_weight(z_region, h) * np.abs(direct - quantized))))
    report = residual_report("intertwining", h_ladder, residuals, {"R": R})
    logger.info(f"Successfully measured the intertwining residual, slope {report.slope:.3g}")
    return report


def dx_intertwining_residual(
    u: Packet, z_points, h: float, settings: Optional[FbiSection] = None
) -> float:
    """Weighted sup of |T(D_x u) - D_z T u|; an exact identity up to quadrature."""
    settings = _fbi_settings(settings)
    z_points = np.atleast_1d(np.asarray(z_points, dtype=complex))
    lo, hi = u.support()
    derivative = FunctionData(lambda y: u.derivative(y) / 1j, lo, hi)
    direct = transform_values(derivative, z_points, h, settings)
    exact = u.transform_derivative(z_points, h, 1) / 1j
    return float(np.max(_weight(z_points, h) * np.abs(direct - exact)))


def cauchy_riemann_residual(values: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """max |d_zbar f| / max |d_z f| by central differences on a grid values[i, j] = f(x[j] + i y[i])."""
    values = np.asarray(values, dtype=complex)
    dx = x[1] - x[0]
    dy = y[1] - y[0]
    fx = (values[1:-1, 2:] - values[1:-1, :-2]) / (2.0 * dx)
    fy = (values[2:, 1:-1] - values[:-2, 1:-1]) / (2.0 * dy)
    dbar = 0.5 * (fx + 1j * fy)
    dz = 0.5 * (fx - 1j * fy)
    scale = float(np.max(np.abs(dz)))
    return float(np.max(np.abs(dbar))) / scale if scale > 0.0 else 0.0


def field_rows(field: FBIField):
    weighted = field.weighted()
    rows = []
    for i, h in enumerate(field.h_ladder):
        for j, z in enumerate(field.z):
            v = field.values[i, j]
            rows.append([z.real, z.imag, h, v.real, v.imag, weighted[i, j]])
    return FIELD_HEADER, rows


def decay_rows(estimate: DecayEstimate):
    return DECAY_HEADER, [[z.real, z.imag, d, r2] for z, d, r2 in zip(estimate.z, estimate.delta, estimate.r2)]


def decay_slope(h_ladder: Sequence[float], residuals: Sequence[float]) -> Tuple[float, float]:
    """Slope of ln residual against 1/h and its r^2."""
    report = residual_report("residual", h_ladder, residuals)
    return report.slope, report.r2

