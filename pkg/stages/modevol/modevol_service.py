import logging
from dataclasses import replace
from functools import lru_cache
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
from scipy.fft import fft, fftfreq
from scipy.linalg import eigvalsh

from internal.config.config_model import FbiSection, ModevolSection
from internal.config.config_service import get_lab_defaults
from internal.dependencies.errors import (
    BandOverflow,
    BandUnderflow,
    CertificateFailed,
    MarginViolated,
    PreconditionViolated,
    QuadratureNotConverged,
    UnresolvedIntegrand,
)
from internal.dependencies.workers import WorkerPool, default_pool
from internal.numerics.fitting import richardson_pair
from internal.numerics.quadrature import composite_gauss_legendre, gauss_legendre, smooth_step
from internal.numerics.sampling import halton_ball, sphere_shell
from stages.fbi_quantize.fbi_quantize_model import GridData, ResidualReport, SampledFunction
from stages.fbi_quantize.fbi_quantize_service import (
    FIELD_HEADER,
    op_r_apply,
    residual_report,
    transform_evaluator,
    transform_values,
)
from stages.hj_phase.hj_phase_service import PhaseW

from .modevol_model import (
    ContourSpec,
    EvolutionReport,
    EvolvedField,
    MappingReport,
    MarginReport,
    MarginSweep,
    PhaseSlice,
    SaddleReport,
    SpectralGrid,
)

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

EVOLVED_HEADER = FIELD_HEADER + ["s", "provenance"]

# e^-TAIL_EXPONENT is the Gaussian tail left outside the default box
TAIL_EXPONENT = 36.0
REFINEMENT_TOL = 1e-6
CERTIFICATE_TOL = 1e-8
PREFLIGHT_SAMPLES = 512
BAND_FRACTION = 0.01
FIRST_LEVEL = 2
MAX_LEVEL = 7
PANEL_NODES = 16
CHUNK = 64
BLOCK = 1 << 18
SLICE_POINTS = 513
PHASE_ADVANCE = 0.05
FLOOR_MARGIN = 1.02

Evaluator = Callable[[np.ndarray], np.ndarray]
Source = Union[SampledFunction, Callable[[float], Evaluator]]


def _modevol_settings(settings: Optional[ModevolSection]) -> ModevolSection:
    return settings if settings is not None else get_lab_defaults().modevol


def _fbi_settings(settings: Optional[FbiSection]) -> FbiSection:
    return settings if settings is not None else get_lab_defaults().fbi


def _evaluator(source: Source, h: float, fbi: FbiSection) -> Evaluator:
    if isinstance(source, SampledFunction):
        return transform_evaluator(source, h, fbi)
    return source(h)


def _bracket(s: float) -> float:
    return float(np.sqrt(1.0 + s * s))


def _weight(z, h: float) -> np.ndarray:
    return np.exp(-0.5 * np.asarray(z).imag ** 2 / h)


def phase_slice(phase: PhaseW, s: float, points: int = SLICE_POINTS) -> PhaseSlice:
    """W~(s, .), d W~(s, .) and A(s, .) resampled on both branches of the cache."""
    delta0 = phase.config.delta0
    ray = np.linspace(delta0, phase.xi_max, points)
    branches = []
    for xi in (-ray[::-1], ray):
        branches.append(
            (xi, phase.Wtilde(s, xi).real, phase.grad_tilde(s, xi).real, phase.hess(s, xi))
        )
    return PhaseSlice(s, delta0, phase.xi_max, branches)


def z_s(phase: PhaseW, s: float, z0):
    """Z_s(z0) = z0 + d W~(s, -Im z0)."""
    z0 = np.asarray(z0, dtype=complex)
    return z0 + phase.grad_tilde(s, -z0.imag).real


def preimage(phase: PhaseW, s: float, Z):
    """The z0 with Z_s(z0) = Z."""
    Z = np.asarray(Z, dtype=complex)
    return Z - phase.grad_tilde(s, -Z.imag).real


def u_s(phase: PhaseW, s: float, z, zeta):
    """U_s(z, zeta) = (z - d W~(s, zeta), zeta)."""
    return np.asarray(z) - phase.grad_tilde(s, zeta), np.asarray(zeta)


def u_s_inverse(phase: PhaseW, s: float, z, zeta):
    return np.asarray(z) + phase.grad_tilde(s, zeta), np.asarray(zeta)


def in_omega(z, center: complex, eps: float, s: float) -> np.ndarray:
    """Membership in Omega_s(center, eps) = {<s>^-1 |Re(z - Z)| + |Im(z - Z)| < eps}."""
    d = np.asarray(z, dtype=complex) - center
    return np.abs(d.real) / _bracket(s) + np.abs(d.imag) < eps


def omega_points(center: complex, eps: float, s: float, points: int = 3) -> np.ndarray:
    """points x points grid inside Omega_s(center, eps)."""
    offsets = 0.49 * eps * (np.linspace(-1.0, 1.0, points) if points > 1 else np.zeros(1))
    return (center + _bracket(s) * offsets[None, :] + 1j * offsets[:, None]).ravel()


def _contour(
    sl: PhaseSlice, kind: str, s: float, z, h: float, radius: Optional[float] = None
) -> ContourSpec:
    z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    xi = -z.imag
    G = sl.grad_tilde(xi).real
    A = sl.hess(xi)
    band = np.minimum(np.abs(xi) - FLOOR_MARGIN * sl.delta0, sl.xi_max - np.abs(xi))
    if radius is None:
        q_cap = np.minimum(np.sqrt(2.0 * TAIL_EXPONENT * h), band)
        u_cap = np.sqrt(TAIL_EXPONENT * h) + np.abs(A) * q_cap / _bracket(s)
    else:
        q_cap = np.minimum(radius, band)
        u_cap = np.full(z.shape, float(radius))
    if np.any(q_cap <= 0.0):
        logger.error(f"Contour momentum leaves the cached band at s={s}")
        raise PreconditionViolated(
            "readout momentum -Im z too close to the band edges",
            {"xi": xi[q_cap <= 0.0], "delta0": sl.delta0, "xi_max": sl.xi_max},
        )
    return ContourSpec(kind=kind, s=float(s), z=z, G=G, A=A, u_cap=u_cap, q_cap=q_cap)


def _subset(cs: ContourSpec, index) -> ContourSpec:
    return replace(
        cs,
        z=cs.z[index],
        G=cs.G[index],
        A=cs.A[index],
        u_cap=cs.u_cap[index],
        q_cap=cs.q_cap[index],
    )


def _contour_sum(cs: ContourSpec, sl: PhaseSlice, v: Evaluator, h: float, u_rule, q_rule) -> np.ndarray:
    """(2 pi h)^-1 sum over the box of exp(i((z - y) eta +- W~(eta))/h) v(y) dy deta."""
    u_nodes, u_w = u_rule
    q_nodes, q_w = q_rule
    U, Q = np.meshgrid(u_nodes, q_nodes, indexing="ij")
    U, Q = U.ravel(), Q.ravel()
    weights = np.outer(u_w, q_w).ravel()
    total = np.zeros(cs.z.size, dtype=complex)
    block = max(1, BLOCK // cs.z.size)
    for start in range(0, weights.size, block):
        part = slice(start, start + block)
        y, eta = cs.points(U[part], Q[part])
        exponent = (cs.z[:, None] - y) * eta + cs.sign * sl.Wtilde(eta)
        total += (np.exp(1j * exponent / h) * v(y)) @ weights[part]
    return cs.jacobian * total / (2.0 * np.pi * h)


def _adaptive_point(cs: ContourSpec, sl: PhaseSlice, v: Evaluator, h: float) -> complex:
    """Doubles the panels in both box directions until two levels agree."""
    scale = float(np.exp(0.5 * cs.z[0].imag ** 2 / h))
    previous, change = None, np.inf
    for level in range(FIRST_LEVEL, MAX_LEVEL + 1):
        rule = composite_gauss_legendre(np.linspace(-1.0, 1.0, 2**level + 1), PANEL_NODES)
        value = complex(_contour_sum(cs, sl, v, h, rule, rule)[0])
        if previous is not None:
            change = abs(value - previous)
            if change <= REFINEMENT_TOL * max(abs(value), scale):
                return value
        previous = value
    logger.error(f"Contour quadrature at z={cs.z[0]} did not settle by {2**MAX_LEVEL} panels")
    raise QuadratureNotConverged(
        "contour quadrature not stable under panel refinement",
        {"z": cs.z[0], "s": cs.s, "panels": 2**MAX_LEVEL, "change": change, "scale": max(abs(value), scale)},
    )


def _fixed_apply(kind: str, sl: PhaseSlice, v: Evaluator, s: float, z, h: float, radius: float, nodes: int):
    """G0 or G1 with one fixed tensor rule, batched over z; used inside compositions."""
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    rule = gauss_legendre(nodes, -1.0, 1.0)
    out = np.empty(flat.size, dtype=complex)
    for start in range(0, flat.size, CHUNK):
        cs = _contour(sl, kind, s, flat[start : start + CHUNK], h, radius)
        out[start : start + CHUNK] = _contour_sum(cs, sl, v, h, rule, rule)
    return out.reshape(z.shape)


@lru_cache(maxsize=8)
def _disc(samples: int, r: float):
    interior = halton_ball(samples, 2, r)
    rim = sphere_shell(max(samples // 10, 64), 2, r)
    interior.setflags(write=False)
    rim.setflags(write=False)
    return interior, rim


def _flat_margin(A: float, s: float) -> float:
    alpha = A / _bracket(s)
    return float(np.linalg.eigvalsh(np.array([[1.0, alpha], [alpha, alpha**2 + 0.5]]))[0])


def _margin(sl: PhaseSlice, kind: str, s: float, z: complex, r: float, samples: int, flat: bool) -> MarginReport:
    xi = -z.imag
    unit = ContourSpec(
        kind=kind,
        s=float(s),
        z=np.array([z]),
        G=np.atleast_1d(sl.grad_tilde(xi).real),
        A=np.atleast_1d(sl.hess(xi)),
        u_cap=np.ones(1),
        q_cap=np.ones(1),
    )
    interior, rim = _disc(samples, float(r))

    def excess(points: np.ndarray) -> np.ndarray:
        y, eta = unit.points(points[:, 0], points[:, 1])
        y, eta = y[0], eta[0]
        re = eta.real
        outside = (np.abs(re) < sl.delta0) | (np.abs(re) > sl.xi_max) | (np.sign(re) != np.sign(xi))
        if np.any(outside):
            j = int(np.argmax(outside))
            logger.error(f"Contour momentum {re[j]:.3f} leaves the band at s={s}, z={z}")
            raise MarginViolated(
                "contour momentum leaves [delta0, xi_max]",
                {"s": s, "z": z, "r": r, "u": points[j, 0], "q": points[j, 1], "re_eta": re[j]},
            )
        psi = 0.5 * y.imag**2 - ((z - y) * eta + unit.sign * sl.Wtilde(eta)).imag
        return psi - 0.5 * z.imag**2

    norm2 = np.sum(interior**2, axis=1)
    keep = norm2 > 0.0
    ratio = -excess(interior[keep]) / norm2[keep]
    worst = int(np.argmin(ratio))
    boundary = float(-np.max(excess(rim)))
    report = MarginReport(
        kind=kind,
        s=float(s),
        z=complex(z),
        r=float(r),
        samples=int(samples),
        delta=float(ratio[worst]),
        boundary_margin=boundary,
        worst_u=float(interior[keep][worst, 0]),
        worst_q=float(interior[keep][worst, 1]),
        closed_form=_flat_margin(float(unit.A[0]), s) if flat else None,
    )
    if report.delta <= 0.0 or report.boundary_margin <= 0.0:
        logger.error(f"Contour margin failed at s={s}, z={z}: delta={report.delta:.3e}")
        raise MarginViolated("phase is not negative definite on the contour", report.model_dump())
    return report


def contour_margin(
    phase: PhaseW,
    s: float,
    z: complex,
    r: Optional[float] = None,
    samples: Optional[int] = None,
    kind: str = "G0",
    settings: Optional[ModevolSection] = None,
) -> MarginReport:
    """Sampled inf of (Phi0(z) - Psi_{s,z}) / (u^2 + q^2) and the rim margin on a disc of radius r.

    In box coordinates u^2 + q^2 = <s>^-2 |Re a|^2 + |Im a|^2 with
    a = y - z - d W~(s, -Im z).
    """
    settings = _modevol_settings(settings)
    r = settings.r if r is None else r
    samples = get_lab_defaults().contours.samples if samples is None else samples
    report = _margin(phase_slice(phase, s), kind, s, complex(z), r, samples, not phase.family.perturbed)
    logger.info(f"Successfully certified the {kind} contour at s={s}, delta={report.delta:.4f}")
    return report


def margin_sweep(
    phase: PhaseW,
    s_grid: Sequence[float],
    z: complex,
    r: Optional[float] = None,
    samples: Optional[int] = None,
    kind: str = "G0",
    settings: Optional[ModevolSection] = None,
    pool: WorkerPool = default_pool,
) -> MarginSweep:
    """contour_margin over an s grid; stable when delta and the rim margin stay within 30% of their means."""
    reports = pool.map(lambda s: contour_margin(phase, s, z, r, samples, kind, settings), list(s_grid))
    deltas = np.array([rep.delta for rep in reports])
    rims = np.array([rep.boundary_margin for rep in reports])
    stable = bool(
        np.all(np.abs(deltas - deltas.mean()) <= 0.3 * deltas.mean())
        and np.all(np.abs(rims - rims.mean()) <= 0.3 * rims.mean())
    )
    return MarginSweep(
        reports=reports, mean_delta=float(deltas.mean()), mean_boundary=float(rims.mean()), stable=stable
    )


def saddle_certificate(phase: PhaseW, s: float, z: complex, step: float = 1e-5) -> SaddleReport:
    """Gradient, critical value and Hessian signature of Psi_{s,z} at U_s^-1(z, -Im z)."""
    z = complex(z)
    xi = -z.imag
    if abs(xi) <= phase.config.delta0:
        raise PreconditionViolated("|Im z| must exceed delta0", {"z": z, "delta0": phase.config.delta0})
    y_c = z + float(phase.grad_tilde(s, xi).real)

    def gradient(p: np.ndarray) -> np.ndarray:
        y = p[0] + 1j * p[1]
        eta = p[2] + 1j * p[3]
        g = z - y + complex(phase.grad_tilde(s, eta))
        return np.array([eta.imag, y.imag + eta.real, -g.imag, -g.real])

    p0 = np.array([y_c.real, y_c.imag, xi, 0.0])
    value = 0.5 * y_c.imag**2 - ((z - y_c) * xi + complex(phase.Wtilde(s, xi))).imag
    gap = abs(value - 0.5 * z.imag**2)
    grad_norm = float(np.linalg.norm(gradient(p0)))
    hessian = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = step
        hessian[:, j] = (gradient(p0 + e) - gradient(p0 - e)) / (2.0 * step)
    eig = eigvalsh(0.5 * (hessian + hessian.T))
    report = SaddleReport(
        s=float(s),
        z=z,
        critical_y=y_c,
        critical_eta=complex(xi),
        gradient_norm=grad_norm,
        value_gap=float(gap),
        eigenvalues=eig.tolist(),
        signature=(int(np.sum(eig > 0.0)), int(np.sum(eig < 0.0))),
        passed=bool(grad_norm <= CERTIFICATE_TOL and gap <= CERTIFICATE_TOL and np.min(np.abs(eig)) > 1e-6),
    )
    if not report.passed:
        logger.error(f"Saddle certificate failed at s={s}, z={z}")
        raise CertificateFailed("saddle point certificate failed", report.model_dump())
    logger.info(f"Successfully certified the saddle at s={s}, z={z}")
    return report


def _apply(
    kind: str,
    phase: PhaseW,
    v: Evaluator,
    s: float,
    z_grid,
    h: Optional[float],
    settings: Optional[ModevolSection],
    radius: Optional[float],
    pool: WorkerPool,
) -> EvolvedField:
    settings = _modevol_settings(settings)
    h = phase.config.h if h is None else h
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex)).ravel()
    sl = phase_slice(phase, s)
    flat = not phase.family.perturbed
    for zj in np.unique(z):
        _margin(sl, kind, s, complex(zj), settings.r, PREFLIGHT_SAMPLES, flat)
    cs = _contour(sl, kind, s, z, h, radius)
    values = pool.map(
        lambda j: _adaptive_point(_subset(cs, [j]), sl, v, h), range(z.size)
    )
    logger.info(f"Successfully applied {kind}(s={s}) by quadrature on {z.size} points")
    return EvolvedField(
        z=z, h_ladder=np.array([h]), values=np.array(values)[None, :], s=float(s), provenance="quadrature"
    )


def apply_G0(
    phase: PhaseW,
    v: Evaluator,
    s: float,
    z_grid,
    h: Optional[float] = None,
    settings: Optional[ModevolSection] = None,
    radius: Optional[float] = None,
    pool: WorkerPool = default_pool,
) -> EvolvedField:
    """G0(s) v on z_grid by contour quadrature; v is a holomorphic evaluator near Z_s(z)."""
    return _apply("G0", phase, v, s, z_grid, h, settings, radius, pool)


def apply_G1(
    phase: PhaseW,
    v: Evaluator,
    s: float,
    z_grid,
    h: Optional[float] = None,
    settings: Optional[ModevolSection] = None,
    radius: Optional[float] = None,
    pool: WorkerPool = default_pool,
) -> EvolvedField:
    """G1(s) v: the phase -W~ over the mirrored contour."""
    return _apply("G1", phase, v, s, z_grid, h, settings, radius, pool)


def _reach(phase: PhaseW, s_values: Sequence[float]) -> float:
    ray = np.linspace(phase.config.delta0, phase.xi_max, 64)
    both = np.concatenate([-ray, ray])
    return max(float(np.max(np.abs(phase.grad_tilde(s, both).real))) for s in s_values)


def spectral_grid(
    phase: PhaseW,
    u0: SampledFunction,
    h: float,
    readout,
    s_values: Sequence[float],
    fbi: Optional[FbiSection] = None,
) -> SpectralGrid:
    """Periodic grid wide enough that u0 moved by d W~ stays clear of the wrap.

    Grid data keep their own spacing and are zero padded; other data are
    sampled with dx proportional to h, a breakpoint sitting half-way between nodes.
    """
    fbi = _fbi_settings(fbi)
    re = np.atleast_1d(np.asarray(readout, dtype=complex)).real
    reach = _reach(phase, s_values)
    pad = np.sqrt(2.0 * h * fbi.tail_L) + 8.0 * np.sqrt(h)
    lo_u, hi_u = u0.support()
    if not (np.isfinite(lo_u) and np.isfinite(hi_u)):
        raise PreconditionViolated("multiplier path needs compactly supported data", {"support": (lo_u, hi_u)})
    lo = min(lo_u, re.min()) - reach - pad
    hi = max(hi_u, re.max()) + reach + pad
    if isinstance(u0, GridData):
        dx = u0.spacing
        if dx > np.sqrt(h) / 8.0:
            raise UnresolvedIntegrand("grid spacing exceeds sqrt(h)/8", {"spacing": dx, "h": h})
        left = int(np.ceil((u0.y[0] - lo) / dx))
        right = int(np.ceil((hi - u0.y[-1]) / dx))
        N = 1 << int(np.ceil(np.log2(left + u0.y.size + right)))
        y = u0.y[0] + dx * (np.arange(N) - left)
        values = np.zeros(N, dtype=complex)
        values[left : left + u0.y.size] = u0.values
    else:
        dx = 0.999 * min(np.sqrt(h) / 8.0, np.pi * h / (2.0 * (phase.xi_max + 1.0)))
        N = 1 << int(np.ceil(np.log2((hi - lo) / dx + 2.0)))
        start = lo
        if u0.breakpoints:
            bp = u0.breakpoints[0]
            start = bp - (np.floor((bp - lo) / dx) + 0.5) * dx
        y = start + dx * np.arange(N)
        values = np.asarray(u0(y), dtype=complex)
    return SpectralGrid(y=y, xi=2.0 * np.pi * h * fftfreq(y.size, dx), spectrum=fft(values), h=h)


def band_check(grid: SpectralGrid, readout, delta0: float, xi_max: float, taper: float) -> None:
    """Spectral mass weighted by the readout frequency window, checked against both band edges."""
    im = np.unique(np.atleast_1d(np.asarray(readout, dtype=complex)).imag)
    gap = np.min((grid.xi[:, None] + im[None, :]) ** 2, axis=1)
    mass = np.abs(grid.spectrum) ** 2 * np.exp(-gap / grid.h)
    total = float(np.sum(mass))
    if total == 0.0:
        return
    a = np.abs(grid.xi)
    low = float(np.sum(mass[a < 1.5 * delta0])) / total
    high = float(np.sum(mass[a > xi_max - taper])) / total
    if low > BAND_FRACTION:
        logger.error(f"{low:.2%} of the weighted spectral mass lies below 3 delta0/2")
        raise BandUnderflow("spectral mass inside the momentum floor", {"fraction": low, "delta0": delta0})
    if high > BAND_FRACTION:
        logger.error(f"{high:.2%} of the weighted spectral mass lies in the taper")
        raise BandOverflow("spectral mass beyond the cached band", {"fraction": high, "xi_max": xi_max})


FloorPhase = Literal["identity", "free"]


def multiplier(
    sl: PhaseSlice,
    xi: np.ndarray,
    h: float,
    sign: float = 1.0,
    taper: float = 0.5,
    alternate: Optional[Callable] = None,
    floor_phase: FloorPhase = "identity",
) -> np.ndarray:
    """taper(|xi|) exp(i sign P(xi) / h) with P = chi W~(s, xi) + (1 - chi) P_floor.

    chi switches on over [delta0, 3 delta0/2]. Below the floor P_floor is 0
    ("identity") or the free phase s xi^2 / 2 ("free").
    """
    a = np.abs(xi)
    chi = smooth_step((a - sl.delta0) / (0.5 * sl.delta0))
    cut = 1.0 - smooth_step((a - (sl.xi_max - taper)) / taper)
    W = alternate(sl.s, xi) if alternate is not None else sl.Wtilde(xi).real
    phase = chi * W
    if floor_phase == "free":
        phase = phase + (1.0 - chi) * 0.5 * sl.s * xi * xi
    elif floor_phase != "identity":
        raise ValueError(f"unknown floor phase {floor_phase}")
    return cut * np.exp(1j * sign * phase / h)


def evolved_samples(
    phase: PhaseW,
    u0: SampledFunction,
    s: float,
    readout,
    h: Optional[float] = None,
    sign: float = 1.0,
    settings: Optional[ModevolSection] = None,
    fbi: Optional[FbiSection] = None,
    alternate: Optional[Callable] = None,
    floor_phase: FloorPhase = "identity",
) -> GridData:
    """Samples of e^{+-i W~(s, hD)/h} u0 on the spectral grid."""
    settings = _modevol_settings(settings)
    h = phase.config.h if h is None else h
    grid = spectral_grid(phase, u0, h, readout, [s], fbi)
    band_check(grid, readout, phase.config.delta0, phase.xi_max, settings.taper)
    sl = phase_slice(phase, s)
    return grid.samples(multiplier(sl, grid.xi, h, sign, settings.taper, alternate, floor_phase))


def _apply_multiplier(sign, phase, u0, s, z_grid, h, settings, fbi, alternate, floor_phase) -> EvolvedField:
    h = phase.config.h if h is None else h
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex)).ravel()
    samples = evolved_samples(phase, u0, s, z, h, sign, settings, fbi, alternate, floor_phase)
    values = transform_values(samples, z, h, _fbi_settings(fbi))
    name = "G0" if sign > 0 else "G1"
    logger.info(f"Successfully applied {name}(s={s}) by multiplier on {z.size} points")
    return EvolvedField(z=z, h_ladder=np.array([h]), values=values[None, :], s=float(s), provenance="multiplier")


def apply_G0_multiplier(
    phase: PhaseW,
    u0: SampledFunction,
    s: float,
    z_grid,
    h: Optional[float] = None,
    settings: Optional[ModevolSection] = None,
    fbi: Optional[FbiSection] = None,
    alternate: Optional[Callable] = None,
    floor_phase: FloorPhase = "identity",
) -> EvolvedField:
    """T(e^{iW~(s, hD)/h} u0) on z_grid, the Fourier multiplier fast path."""
    return _apply_multiplier(1.0, phase, u0, s, z_grid, h, settings, fbi, alternate, floor_phase)


def apply_G1_multiplier(
    phase: PhaseW,
    u0: SampledFunction,
    s: float,
    z_grid,
    h: Optional[float] = None,
    settings: Optional[ModevolSection] = None,
    fbi: Optional[FbiSection] = None,
    floor_phase: FloorPhase = "identity",
) -> EvolvedField:
    return _apply_multiplier(-1.0, phase, u0, s, z_grid, h, settings, fbi, None, floor_phase)


def composition_residual(
    phase: PhaseW,
    source: Source,
    s: float,
    h_ladder: Sequence[float],
    z0: complex,
    order: str = "G1G0",
    path: str = "quadrature",
    radius: Optional[float] = None,
    points: int = 1,
    settings: Optional[ModevolSection] = None,
    fbi: Optional[FbiSection] = None,
) -> ResidualReport:
    """Weighted |G1 G0 v - v| on Omega_s(Z_s(z0), eps2), or |G0 G1 v - v| on Omega_s(z0, eps2).

    Residuals are relative to the largest weighted |v| on the readout points.
    The quadrature path nests two fixed-rule contour sums over a box of the
    given radius, so the truncation shows up as e^{-c/h}.
    """
    settings = _modevol_settings(settings)
    fbi = _fbi_settings(fbi)
    if order not in ("G1G0", "G0G1"):
        raise ValueError(f"unknown composition order {order}")
    radius = settings.roundtrip_radius if radius is None else radius
    center = complex(z_s(phase, s, z0)) if order == "G1G0" else complex(z0)
    readout = omega_points(center, settings.eps1 / 4.0, s, points)
    first, second = ("G0", "G1") if order == "G1G0" else ("G1", "G0")
    sl = phase_slice(phase, s)
    nodes = settings.quad_nodes
    residuals = []
    for h in h_ladder:
        if path == "multiplier":
            if not isinstance(source, SampledFunction):
                raise PreconditionViolated(
                    "the multiplier path needs real-line data", {"source": type(source).__name__}
                )
            grid = spectral_grid(phase, source, h, readout, [s], fbi)
            band_check(grid, readout, phase.config.delta0, phase.xi_max, settings.taper)
            both = multiplier(sl, grid.xi, h, 1.0, settings.taper) * multiplier(sl, grid.xi, h, -1.0, settings.taper)
            out = transform_values(grid.samples(both), readout, h, fbi)
            exact = transform_values(grid.samples(), readout, h, fbi)
        elif path == "quadrature":
            v = _evaluator(source, h, fbi)

            def inner(y, v=v, h=h):
                return _fixed_apply(first, sl, v, s, y, h, radius, nodes)

            out = _fixed_apply(second, sl, inner, s, readout, h, radius, nodes)
            exact = np.asarray(v(readout), dtype=complex)
        else:
            raise ValueError(f"unknown path {path}")
        weight = _weight(readout, h)
        scale = float(np.max(weight * np.abs(exact)))
        residuals.append(float(np.max(weight * np.abs(out - exact))) / scale if scale > 0.0 else 0.0)
        logger.debug(f"{order} residual at h={h}: {residuals[-1]:.3e}")
    report = residual_report(
        f"composition_{order}", h_ladder, residuals, {"s": s, "path": path, "radius": radius}
    )
    logger.info(f"Successfully measured the {order} residual, slope {report.slope:.3g}")
    return report


def roundtrip_residual(
    phase: PhaseW,
    source: Source,
    s: float,
    h_ladder: Sequence[float],
    z0: complex,
    path: str = "quadrature",
    radius: Optional[float] = None,
    points: int = 1,
    settings: Optional[ModevolSection] = None,
) -> ResidualReport:
    """G1(s) G0(s) against the identity over an h ladder."""
    return composition_residual(phase, source, s, h_ladder, z0, "G1G0", path, radius, points, settings)


def _max_symbol(phase: PhaseW, s: float) -> float:
    ray = np.linspace(phase.config.delta0, phase.xi_max, 64)
    return float(np.max(np.abs(phase.ds_W(s, np.concatenate([-ray, ray])))))


def evolution_residual(
    phase: PhaseW,
    u0: SampledFunction,
    s_grid: Sequence[float],
    source: complex,
    h: Optional[float] = None,
    points: int = 3,
    tolerance: float = 1e-3,
    settings: Optional[ModevolSection] = None,
    fbi: Optional[FbiSection] = None,
    alternate: Optional[Callable] = None,
) -> EvolutionReport:
    """ih d_s G0 v + (d_s W)(s, hD_z) G0 v on Omega_s(z0, eps2), with Z_s(z0) = source.

    G0 runs on the multiplier path; d_s uses centred differences at steps ds
    and ds/2, combined by Richardson. The symbol d_s W(s, zeta) is quantized
    with Op_R at the phase radius symbol_R.
    """
    settings = _modevol_settings(settings)
    fbi = _fbi_settings(fbi)
    h = phase.config.h if h is None else h
    steps, raw, floors, extrapolated = [], [], [], []
    for s in s_grid:
        if s <= 0.0:
            raise PreconditionViolated("centred differences need s > 0", {"s": s})
        ds = min(settings.ds, PHASE_ADVANCE * h / _max_symbol(phase, s), s)
        readout = omega_points(complex(preimage(phase, s, source)), settings.eps1 / 4.0, s, points)
        grid = spectral_grid(phase, u0, h, readout, [s + ds], fbi)
        band_check(grid, readout, phase.config.delta0, phase.xi_max, settings.taper)

        def samples_at(t: float) -> GridData:
            return grid.samples(multiplier(phase_slice(phase, t), grid.xi, h, 1.0, settings.taper, alternate))

        def field(t: float) -> np.ndarray:
            return transform_values(samples_at(t), readout, h, fbi)

        centre = samples_at(s)
        value = transform_values(centre, readout, h, fbi)
        coarse = (field(s + ds) - field(s - ds)) / (2.0 * ds)
        fine = (field(s + 0.5 * ds) - field(s - 0.5 * ds)) / ds
        limit = richardson_pair(coarse, fine, 2)
        v = transform_evaluator(centre, h, fbi)

        def symbol(_, zeta, s=s):
            return phase.ds_W(s, zeta)

        quantized = np.array(
            [
                op_r_apply(symbol, v, zj, h, settings.symbol_R, fbi.radial_nodes, fbi.angular_nodes, check=False)
                for zj in readout
            ]
        )
        weight = _weight(readout, h)
        scale = float(np.max(weight * np.abs(value)))
        steps.append(ds)
        raw.append(float(np.max(weight * np.abs(1j * h * coarse + quantized))) / scale)
        floors.append(float(np.max(weight * np.abs(1j * h * (coarse - limit)))) / scale)
        extrapolated.append(float(np.max(weight * np.abs(1j * h * limit + quantized))) / scale)
        logger.debug(f"Evolution residual at s={s}: raw {raw[-1]:.3e}, extrapolated {extrapolated[-1]:.3e}")
    report = EvolutionReport(
        h=h,
        s_grid=[float(s) for s in s_grid],
        steps=steps,
        raw=raw,
        floor=floors,
        extrapolated=extrapolated,
        tolerance=tolerance,
        passed=bool(max(extrapolated) <= tolerance),
    )
    if report.passed:
        logger.info(f"Successfully checked the evolution equation on {len(steps)} s values")
    else:
        logger.error(f"Evolution residual {max(extrapolated):.3e} above {tolerance:.1e}")
    return report


def mapping_bound(
    phase: PhaseW,
    source_data: Source,
    s_grid: Sequence[float],
    source: complex,
    h: Optional[float] = None,
    points: int = 3,
    settings: Optional[ModevolSection] = None,
    fbi: Optional[FbiSection] = None,
) -> MappingReport:
    """sup weighted |G0 v| on Omega_s(z0, eps1/4) over sup weighted |v| on Omega_s(Z_s(z0), eps1)."""
    settings = _modevol_settings(settings)
    fbi = _fbi_settings(fbi)
    h = phase.config.h if h is None else h
    eps1, eps2 = settings.eps1, settings.eps1 / 4.0
    v = _evaluator(source_data, h, fbi)
    ratios = []
    for s in s_grid:
        inner = omega_points(source, eps1, s, points)
        outer = omega_points(complex(preimage(phase, s, source)), eps2, s, points)
        evolved = apply_G0(phase, v, s, outer, h, settings).values[0]
        top = float(np.max(_weight(outer, h) * np.abs(evolved)))
        bottom = float(np.max(_weight(inner, h) * np.abs(v(inner))))
        ratios.append(top / bottom if bottom > 0.0 else 0.0)
    logger.info(f"Successfully bounded G0 on {len(ratios)} s values, max ratio {max(ratios):.4g}")
    return MappingReport(
        source=complex(source),
        s_grid=[float(s) for s in s_grid],
        ratios=ratios,
        eps1=eps1,
        eps2=eps2,
        max_ratio=float(max(ratios)),
    )


def evolved_rows(field: EvolvedField):
    weighted = field.weighted()
    rows = []
    for i, h in enumerate(field.h_ladder):
        for j, z in enumerate(field.z):
            v = field.values[i, j]
            rows.append([z.real, z.imag, h, v.real, v.imag, weighted[i, j], field.s, field.provenance])
    return EVOLVED_HEADER, rows
