import logging
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from internal.config.config_model import ContoursSection
from internal.config.config_service import get_lab_defaults
from internal.dependencies.errors import DomainExit, MarginViolated, PreconditionViolated
from internal.dependencies.workers import WorkerPool, default_pool
from internal.numerics.newton import VectorBatchNewton
from internal.numerics.quadrature import gauss_legendre
from internal.numerics.sampling import halton_ball, sphere_shell
from stages.hj_phase.hj_phase_service import PhaseW
from stages.modevol.modevol_model import PhaseSlice
from stages.modevol.modevol_service import omega_points, phase_slice
from stages.symbols.symbols_model import MetricFamily
from stages.symbols.symbols_service import domain_margin

from .contour_lab_model import DeformationFamily, DeformationReport, DeformationSample

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

MARGIN_HEADER = ["kind", "t", "s", "delta", "boundary", "containment"]
POLARIZATION_STEP = 0.01
STABILITY = 0.3
NEWTON_TOL = 1e-11
NEWTON_STEP = 1e-7


def _contours_settings(settings: Optional[ContoursSection]) -> ContoursSection:
    return settings if settings is not None else get_lab_defaults().contours


def _bracket(s: float) -> float:
    return float(np.sqrt(1.0 + s * s))


@lru_cache(maxsize=8)
def _ball(samples: int, r: float) -> Tuple[np.ndarray, np.ndarray]:
    """Interior and rim of {|a_1 + i a_2| + |a_3 + i a_4| < r} in R^4."""
    interior = halton_ball(samples, 4, r, norm_groups=2)
    interior = interior[np.sum(interior**2, axis=1) > 0.0]
    rim = sphere_shell(max(samples // 10, 64), 4, r, norm_groups=2)
    interior.setflags(write=False)
    rim.setflags(write=False)
    return interior, rim


def _in_band(sl: PhaseSlice, xi: float, re) -> np.ndarray:
    re = np.asarray(re, dtype=float)
    return (np.abs(re) >= sl.delta0) & (np.abs(re) <= sl.xi_max) & (np.sign(re) == np.sign(xi))


def _require_readout(sl: PhaseSlice, z: complex, error) -> None:
    xi = -z.imag
    if abs(xi) < sl.delta0 or abs(xi) > sl.xi_max:
        logger.error(f"Readout point {z} has momentum -Im z outside [delta0, xi_max]")
        raise error(
            "-Im z must lie in [delta0, xi_max]",
            {"z": z, "delta0": sl.delta0, "xi_max": sl.xi_max},
        )


def _slices(phase: PhaseW, s_grid: Sequence[float], pool: WorkerPool) -> Dict[float, PhaseSlice]:
    return dict(zip(s_grid, pool.map(lambda s: phase_slice(phase, s), list(s_grid))))


def _quadratic_infimum(phase_fn: Callable, norm_fn: Callable) -> float:
    """min of -phase/norm over R^4 when both are homogeneous quadratics.

    The forms are recovered by polarization and the infimum is the smallest
    generalized eigenvalue of the pair.
    """
    basis = POLARIZATION_STEP * np.eye(4)
    pairs = (basis[:, None, :] + basis[None, :, :]).reshape(16, 4)

    def form(fn: Callable) -> np.ndarray:
        diag = fn(basis)
        cross = fn(pairs).reshape(4, 4)
        return 0.5 * (cross - diag[:, None] - diag[None, :]) / POLARIZATION_STEP**2

    return float(eigh(-form(phase_fn), form(norm_fn), eigvals_only=True)[0])


def _summarize(
    family: DeformationFamily, samples: int, rows: List[DeformationSample], linearization_gap=None
) -> DeformationReport:
    delta_by_s = {s: min(row.delta for row in rows if row.s == s) for s in family.s_grid}
    deltas = np.array(list(delta_by_s.values()))
    stable = bool(np.all(np.abs(deltas - deltas.mean()) <= STABILITY * deltas.mean()))
    t_lo, t_hi = min(family.t_grid), max(family.t_grid)
    bracketed = True
    for key in {(row.s, row.z) for row in rows}:
        group = [row for row in rows if (row.s, row.z) == key]
        ends = min(row.delta for row in group if row.t in (t_lo, t_hi))
        inner = [row.delta for row in group if row.t not in (t_lo, t_hi)]
        if inner and min(inner) < ends * (1.0 - 1e-9):
            bracketed = False
    return DeformationReport(
        family=family,
        samples=samples,
        rows=rows,
        delta_by_s=delta_by_s,
        stable=stable,
        bracketed=bracketed,
        linearization_gap=linearization_gap,
    )


def _gate(row: DeformationSample) -> DeformationSample:
    if row.delta <= 0.0 or row.boundary <= 0.0:
        logger.error(f"Deformation {row.kind} fails at t={row.t}, s={row.s}: delta={row.delta:.3e}")
        raise MarginViolated(
            "phase is not negative definite along the deformation",
            {"kind": row.kind, "t": row.t, "s": row.s, "z": row.z, "point": row.worst_point,
             "delta": row.delta, "boundary": row.boundary},
        )
    return row


# ---------------------------------------------------------------------------
# A1: (z', y, zeta, eta) family between the z'-first and the y-first contours


def _a1_points(sl: PhaseSlice, s: float, z: complex, t: float, R: float, p: np.ndarray):
    """Contour points of the t-family for tilde coordinates p = (Re y~, Im y~, Re z~, Im z~)."""
    b = _bracket(s)
    xi = -z.imag
    G = float(sl.grad_tilde(xi).real)
    At = float(sl.hess(xi)) / b
    ry, iy, rz, iz = p.T
    z_prime = z + rz + 1j * iz
    a_s = (-rz + G - sl.grad_tilde(xi - iz).real) / b
    eta_t = -iy - 1j * (ry + At * iy + (1.0 - t) * a_s)
    zeta_t = -R * iz - t * iy - 1j * (R * rz + t * (ry + At * iy) / b)
    y = z + G + b * ry + 1j * iy
    eta = xi + eta_t.real + 1j * eta_t.imag / b
    zeta = xi + zeta_t
    return y, eta, z_prime, zeta, eta_t, zeta_t


def _a1_phase(sl: PhaseSlice, z: complex, y, eta, z_prime, zeta) -> np.ndarray:
    """Phi0(y) - Phi0(z) - Im((z - z') zeta + (z' - y) eta + W~(s, eta))."""
    lin = (z - z_prime) * zeta + (z_prime - y) * eta + sl.Wtilde(eta)
    return 0.5 * y.imag**2 - 0.5 * z.imag**2 - lin.imag


def _a1_evaluate(sl: PhaseSlice, s: float, z: complex, t: float, R: float, p: np.ndarray):
    xi = -z.imag
    y, eta, z_prime, zeta, eta_t, zeta_t = _a1_points(sl, s, z, t, R, p)
    outside = ~(_in_band(sl, xi, eta.real) & _in_band(sl, xi, xi - p[:, 3]))
    if np.any(outside):
        j = int(np.argmax(outside))
        logger.error(f"Deformation momentum leaves the band at t={t}, s={s}")
        raise MarginViolated(
            "contour momentum leaves [delta0, xi_max]",
            {"kind": "A1", "t": t, "s": s, "point": p[j].tolist(), "re_eta": float(eta.real[j])},
        )
    phase = _a1_phase(sl, z, y, eta, z_prime, zeta)
    norm2 = np.abs(eta_t) ** 2 + np.abs(zeta_t) ** 2
    return phase, norm2, (y, eta, z_prime, zeta)


def _a1_endpoint_gaps(sl: PhaseSlice, s: float, z: complex, t: float, R: float, points) -> Tuple[float, float]:
    """(distance to the endpoint contour, miss of the gamma(s, z') momentum relation)."""
    y, eta, z_prime, zeta = points
    b = _bracket(s)
    xi = -z.imag
    real_part = np.abs(eta.real + y.imag)
    if t == 1.0:
        G = float(sl.grad_tilde(xi).real)
        A = float(sl.hess(xi))
        on_gamma = np.abs(eta.imag - ((z - y).real + G + A * (z - y).imag) / b**2)
        first = np.abs(z_prime - (z - 1j * np.conj(zeta - eta) / R))
        return float(np.max(first + real_part + on_gamma)), 0.0
    if t == 0.0:
        first = np.abs(zeta - (xi + 1j * R * np.conj(z - z_prime)))
        xi_p = -z_prime.imag
        G_p = sl.grad_tilde(xi_p).real
        A_p = sl.hess(xi_p)
        drift = np.abs(b * eta.imag - ((z_prime - y).real + G_p + A_p * (z_prime - y).imag) / b)
        return float(np.max(first + real_part)), float(np.max(drift))
    return np.nan, 0.0


def _a1_certificate(
    sl: PhaseSlice, s: float, z: complex, t: float, R: float, samples: int, r: float, flat: bool
) -> Tuple[DeformationSample, float]:
    interior, rim = _ball(samples, r)
    phase, norm2, points = _a1_evaluate(sl, s, z, t, R, interior)
    ratio = -phase / norm2
    worst = int(np.argmin(ratio))
    rim_phase, _, _ = _a1_evaluate(sl, s, z, t, R, rim)
    gap, drift = _a1_endpoint_gaps(sl, s, z, t, R, points)
    closed_form = None
    if flat:
        closed_form = _quadratic_infimum(
            lambda p: _a1_evaluate(sl, s, z, t, R, p)[0],
            lambda p: _a1_evaluate(sl, s, z, t, R, p)[1],
        )
    row = DeformationSample(
        kind="A1",
        t=float(t),
        s=float(s),
        z=complex(z),
        delta=float(ratio[worst]),
        boundary=float(-np.max(rim_phase)),
        endpoint_gap=None if np.isnan(gap) else gap,
        worst_point=interior[worst].tolist(),
        closed_form=closed_form,
    )
    return _gate(row), drift


def certify_deformation_A1(
    phase: PhaseW,
    z: complex,
    s_grid: Optional[Sequence[float]] = None,
    t_grid: Optional[Sequence[float]] = None,
    samples: Optional[int] = None,
    R: Optional[float] = None,
    r: Optional[float] = None,
    settings: Optional[ContoursSection] = None,
    pool: WorkerPool = default_pool,
) -> DeformationReport:
    """Sample the interpolating family between the contours of (d_s W)(s, hD_z) G0(s).

    In tilde coordinates (|y~| + |z~| < r):
        eta~  = -i conj(y~) - i (A~ Im y~ + (1 - t) a_s)
        zeta~ = -i R conj(z~) - t Im y~ - i t <s>^-1 (Re y~ + A~ Im y~)
    and the certificate is inf of -Phi1 / (|eta~|^2 + |zeta~|^2) per (t, s).
    """
    settings = _contours_settings(settings)
    family = DeformationFamily(
        kind="A1",
        t_grid=list(settings.t_grid if t_grid is None else t_grid),
        s_grid=list(settings.s_grid if s_grid is None else s_grid),
        z=complex(z),
        radius=settings.r if r is None else r,
        R=settings.R if R is None else R,
    )
    samples = settings.samples if samples is None else samples
    slices = _slices(phase, family.s_grid, pool)
    _require_readout(slices[family.s_grid[0]], family.z, PreconditionViolated)
    flat = not phase.family.perturbed

    def run(s: float):
        return [
            _a1_certificate(slices[s], s, family.z, t, family.R, samples, family.radius, flat)
            for t in family.t_grid
        ]

    results = [item for batch in pool.map(run, family.s_grid) for item in batch]
    rows = [row for row, _ in results]
    drift = max(d for _, d in results)
    report = _summarize(family, samples, rows, linearization_gap=drift)
    logger.info(f"Successfully certified the A1 deformation, delta={report.delta:.4f}")
    return report


# ---------------------------------------------------------------------------
# A2: (x, y, zeta, eta) family between the nested G0/G1 contour and the flat one


def tilde_w1(sl: PhaseSlice, zeta, eta, nodes: int = 16) -> np.ndarray:
    """W~1(s, zeta, eta) = int_0^1 dW~(s, t zeta + (1 - t) eta) dt by Gauss-Legendre."""
    theta, weights = gauss_legendre(nodes, 0.0, 1.0)
    zeta = np.asarray(zeta, dtype=complex)[..., None]
    eta = np.asarray(eta, dtype=complex)[..., None]
    return np.sum(weights * sl.grad_tilde(theta * zeta + (1.0 - theta) * eta), axis=-1)


def nested_contour(sl: PhaseSlice, s: float, z: complex, p: np.ndarray, nodes: int = 16):
    """Points (x, y, zeta, eta, xi_w) of the nested contour for p = (u1, q1, u2, q2).

    (Y, zeta) runs over the G0 contour at z with box coordinates (u1, q1),
    (x, eta) over the G1 contour at Y with (u2, q2), and y = Y - W~1(s, zeta, eta).
    """
    b = _bracket(s)
    xi = -z.imag
    G = float(sl.grad_tilde(xi).real)
    A = float(sl.hess(xi))
    u1, q1, u2, q2 = np.asarray(p, dtype=float).T
    Y = z + G + b * u1 + 1j * q1
    zeta = xi - q1 - 1j * (u1 + A * q1 / b) / b
    xi_w = -Y.imag
    G_w = sl.grad_tilde(xi_w).real
    A_w = sl.hess(xi_w)
    x = Y - G_w + b * u2 + 1j * q2
    eta = xi_w - q2 - 1j * (u2 - A_w * q2 / b) / b
    y = Y - tilde_w1(sl, zeta, eta, nodes)
    return x, y, zeta, eta, xi_w


def _scaled(z: complex, b: float, x, y) -> np.ndarray:
    return np.stack([(x - z).real / b, (x - z).imag, (y - z).real / b, (y - z).imag], axis=-1)


def _nested_inverse(sl: PhaseSlice, s: float, z: complex, target: np.ndarray, nodes: int):
    """(F0, G0, residual): the (zeta, eta) of the nested contour over scaled (x - z, y - z)."""
    b = _bracket(s)

    def forward(p: np.ndarray) -> np.ndarray:
        x, y, _, _, _ = nested_contour(sl, s, z, p, nodes)
        return _scaled(z, b, x, y)

    base = forward(np.zeros((1, 4)))[0]
    jacobian = (forward(NEWTON_STEP * np.eye(4)) - base).T / NEWTON_STEP
    guess = np.linalg.solve(jacobian, (target - base).T).T
    result = VectorBatchNewton(forward, tolerance=NEWTON_TOL, step=NEWTON_STEP).solve(target, guess)
    _, _, F0, G0, xi_w = nested_contour(sl, s, z, result.solution, nodes)
    xi = -z.imag
    outside = ~(_in_band(sl, xi, F0.real) & _in_band(sl, xi, G0.real) & _in_band(sl, xi, xi_w))
    if np.any(outside):
        j = int(np.argmax(outside))
        logger.error(f"Nested contour momentum leaves the band at s={s}, z={z}")
        raise DomainExit(
            "nested contour momentum leaves [delta0, xi_max]",
            {"s": s, "z": z, "point": target[j].tolist(), "re_zeta": float(F0.real[j]), "re_eta": float(G0.real[j])},
        )
    return F0, G0, result.residual


def _a2_rows(
    sl: PhaseSlice,
    fam: MetricFamily,
    family: DeformationFamily,
    s: float,
    z: complex,
    samples: int,
    nodes: int,
) -> List[DeformationSample]:
    interior, rim = _ball(samples, family.radius)
    a = np.concatenate([interior, rim])
    b = _bracket(s)
    F0, G0, residual = _nested_inverse(sl, s, z, a, nodes)
    # t-independent images on the two endpoint contours
    x1 = z + a[:, 0] + 1j * a[:, 1]
    y1 = z + a[:, 2] + 1j * a[:, 3]
    G1 = -z.imag + 1j * np.conj(z - x1)
    F1 = G1 + 1j * np.conj(z - y1)
    xi = -z.imag
    norm2 = np.sum(interior**2, axis=1)
    rows = []
    for t in family.t_grid:
        rho = family.rho(t, s)
        x = z + a[:, 0] / rho + 1j * a[:, 1]
        y = z + a[:, 2] / rho + 1j * a[:, 3]
        zeta = (1.0 - t) * F0.real + t * F1.real + 1j * ((1.0 - t) * b * rho * F0.imag + t * F1.imag)
        eta = (1.0 - t) * G0.real + t * G1.real + 1j * ((1.0 - t) * b * rho * G0.imag + t * G1.imag)
        outside = ~(_in_band(sl, xi, zeta.real) & _in_band(sl, xi, eta.real))
        if np.any(outside):
            j = int(np.argmax(outside))
            logger.error(f"Deformation momentum leaves the band at t={t}, s={s}, z={z}")
            raise DomainExit(
                "deformed momentum leaves [delta0, xi_max]",
                {"kind": "A2", "t": t, "s": s, "z": z, "point": a[j].tolist()},
            )
        containment = domain_margin(fam, y + tilde_w1(sl, zeta, eta, nodes), safety=1.0)
        if np.any(containment <= 0.0):
            j = int(np.argmin(containment))
            logger.error(f"y + W~1 leaves the coefficient domain at t={t}, s={s}, z={z}")
            raise DomainExit(
                "y + W~1(s, zeta, eta) leaves the coefficient domain",
                {"kind": "A2", "t": t, "s": s, "z": z, "point": a[j].tolist(), "margin": float(containment[j])},
            )
        phase = 0.5 * x.imag**2 - 0.5 * z.imag**2 - ((y - x) * eta + (z - y) * zeta).imag
        ratio = -phase[: len(interior)] / norm2
        worst = int(np.argmin(ratio))
        if t == 0.0:
            gap = residual
        elif t == 1.0:
            on_flat = np.abs(eta - (xi + 1j * np.conj(z - x))) + np.abs(zeta - eta - 1j * np.conj(z - y))
            gap = float(np.max(on_flat))
        else:
            gap = None
        rows.append(
            _gate(
                DeformationSample(
                    kind="A2",
                    t=float(t),
                    s=float(s),
                    z=complex(z),
                    delta=float(ratio[worst]),
                    boundary=float(-np.max(phase[len(interior) :])),
                    containment=float(np.min(containment)),
                    endpoint_gap=gap,
                    worst_point=interior[worst].tolist(),
                )
            )
        )
    return rows


def certify_deformation_A2(
    phase: PhaseW,
    fam: MetricFamily,
    z_plus: complex,
    s_grid: Optional[Sequence[float]] = None,
    t_grid: Optional[Sequence[float]] = None,
    samples: Optional[int] = None,
    eps: Optional[float] = None,
    r: Optional[float] = None,
    points: int = 3,
    settings: Optional[ContoursSection] = None,
    pool: WorkerPool = default_pool,
) -> DeformationReport:
    """Sample the deformation between the nested contour and the explicit one, for z in Omega_s(z+, eps).

    Along x, y in B_t(s, z) the momenta are
        Re F_t = (1 - t) Re F0(x_t^0, y_t^0) + t Re F1(x_t^1, y_t^1)
        Im F_t = (1 - t) <s> rho_t Im F0(x_t^0, y_t^0) + t Im F1(x_t^1, y_t^1)
    (likewise G_t), with F1, G1 the explicit contour eta = -Im z + i conj(z - x),
    zeta = eta + i conj(z - y).
    """
    settings = _contours_settings(settings)
    family = DeformationFamily(
        kind="A2",
        t_grid=list(settings.t_grid if t_grid is None else t_grid),
        s_grid=list(settings.s_grid if s_grid is None else s_grid),
        z=complex(z_plus),
        radius=settings.r if r is None else r,
        eps=settings.eps if eps is None else eps,
    )
    samples = settings.samples if samples is None else samples
    slices = _slices(phase, family.s_grid, pool)
    tasks = []
    for s in family.s_grid:
        for z in omega_points(family.z, family.eps, s, points):
            _require_readout(slices[s], complex(z), DomainExit)
            tasks.append((s, complex(z)))

    rows = [
        row
        for batch in pool.map(
            lambda task: _a2_rows(slices[task[0]], fam, family, task[0], task[1], samples, settings.quad_nodes),
            tasks,
        )
        for row in batch
    ]
    report = _summarize(family, samples, rows)
    logger.info(f"Successfully certified the A2 deformation, delta={report.delta:.4f}")
    return report


def margin_rows(report: DeformationReport):
    """CSV rows (one per t, s and readout point) for the margin report."""
    rows = []
    for row in report.rows:
        containment = "" if row.containment is None else row.containment
        rows.append([row.kind, row.t, row.s, row.delta, row.boundary, containment])
    return MARGIN_HEADER, rows
