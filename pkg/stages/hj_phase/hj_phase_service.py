import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from internal.config.config_model import FlowSection, PhaseSection
from internal.config.config_service import get_lab_defaults
from internal.dependencies.errors import NoAdmissibleR, PreconditionViolated
from internal.dependencies.workers import WorkerPool, default_pool
from internal.numerics.newton import ScalarBatchNewton
from internal.numerics.quadrature import composite_gauss_legendre
from stages.flow.flow_service import HamiltonFlow, classify_batch
from stages.symbols.symbols_model import MetricFamily
from stages.symbols.symbols_service import q_gradients, q_value

from .hj_phase_model import EikonalReport, PhaseGrowth, PhaseTable, ReferenceConfig, WEvaluation

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

TABLE_HEADER = ["s", "xi", "W", "grad", "hess"]


def _phase_settings(settings: Optional[PhaseSection]) -> PhaseSection:
    return settings if settings is not None else get_lab_defaults().phase


def _flow_settings(settings: Optional[FlowSection]) -> FlowSection:
    return settings if settings is not None else get_lab_defaults().flow


def reference_start(R: float, eta) -> Tuple[np.ndarray, np.ndarray]:
    """X_delta(eta) = (R eta/|eta|, eta) for real n = 1 momenta."""
    eta = np.asarray(eta, dtype=float).reshape(-1)
    return R * np.where(eta < 0.0, -1.0, 1.0), eta


def _reference_flow(fam: MetricFamily, cfg: ReferenceConfig, settings: PhaseSection):
    return HamiltonFlow(fam, cfg.h, tol=settings.flow_tol)


def _bracket(s) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)


def _scalar_q(fam: MetricFamily, x, xi, h: float) -> np.ndarray:
    return q_value(fam, np.asarray(x)[..., None], np.asarray(xi)[..., None], h)


def _scalar_q_gradients(fam: MetricFamily, x, xi, h: float):
    q_x, q_xi = q_gradients(fam, np.asarray(x)[..., None], np.asarray(xi)[..., None], h)
    return q_x[..., 0], q_xi[..., 0]


class CharacteristicSolver:
    """Sources and characteristic values of the reference-ray flow at one h.

    Every call is one batched Newton solve of Re xi(s_j, X_delta(eta_j)) = target_j
    followed by one flow run carrying the action.
    """

    def __init__(self, fam: MetricFamily, cfg: ReferenceConfig, settings: PhaseSection):
        self.fam = fam
        self.cfg = cfg
        self.settings = settings
        self.flow = _reference_flow(fam, cfg, settings)

    def _forward(self, s_ends: np.ndarray):
        tiled = np.concatenate([s_ends, s_ends])

        def forward(eta: np.ndarray) -> np.ndarray:
            x0, xi0 = reference_start(self.cfg.R_delta, eta)
            run = self.flow.endpoints(x0, xi0, tiled[: eta.size], check_energy=False)
            return run.xi[0, :, 0].real

        return forward

    def sources(self, s_ends, targets, guess=None) -> np.ndarray:
        s_ends = np.asarray(s_ends, dtype=float).reshape(-1)
        targets = np.asarray(targets, dtype=float).reshape(-1)
        s_ends = np.broadcast_to(s_ends, targets.shape).copy()
        if np.all(s_ends == 0.0):
            return targets.copy()
        newton = ScalarBatchNewton(
            self._forward(s_ends),
            tolerance=self.settings.newton_tol,
            max_iter=self.settings.max_iter,
            step=self.settings.newton_fd_step,
        )
        start = targets if guess is None else np.asarray(guess, dtype=float).reshape(-1)
        return newton.solve(targets, start).solution

    def values(self, s_ends, targets, guess=None):
        """(source, x_hat, W) at each (s_j, target_j)."""
        targets = np.asarray(targets, dtype=float).reshape(-1)
        s_ends = np.broadcast_to(np.asarray(s_ends, dtype=float).reshape(-1), targets.shape)
        eta = self.sources(s_ends, targets, guess)
        x0, xi0 = reference_start(self.cfg.R_delta, eta)
        run = self.flow.endpoints(x0, xi0, s_ends, with_action=True)
        x_end = run.x[0, :, 0].real
        xi_end = run.xi[0, :, 0].real
        W = self.cfg.R_delta * np.abs(eta) + run.action[0].real + x_end * (targets - xi_end)
        return eta, x_end, W


def choose_reference(
    fam: MetricFamily,
    delta0: float,
    h: float,
    settings: Optional[PhaseSection] = None,
    flow_settings: Optional[FlowSection] = None,
    s_horizon: Optional[float] = None,
) -> ReferenceConfig:
    """Smallest doubled R_delta whose reference rays escape with a near-identity J_{s,delta}."""
    if delta0 <= 0.0:
        raise PreconditionViolated("delta0 must be positive", {"delta0": delta0})
    settings = _phase_settings(settings)
    flow_settings = _flow_settings(flow_settings)
    if s_horizon is None:
        s_horizon = 2.0 * flow_settings.T / h
    probe = np.linspace(0.0, s_horizon, 9)[1:]
    flow = HamiltonFlow(fam, h, tol=settings.flow_tol)
    R = settings.R_start
    tried = []
    while R <= settings.R_cap:
        trapped = False
        for delta in (0.5 * delta0, 0.25 * delta0):
            ray = np.linspace(delta, settings.Xi_max, settings.momentum_samples)
            eta = np.concatenate([-ray[::-1], ray])
            x0, xi0 = reference_start(R, eta)
            reports = classify_batch(
                fam, x0, xi0, h, flow_settings.s_probe, flow_settings.probe_samples, flow_settings.tol
            )
            if not all(r.nontrapping for r in reports):
                trapped = True
                break
            d = settings.newton_fd_step * np.maximum(1.0, np.abs(eta))
            both = np.concatenate([eta, eta + d])
            bx0, bxi0 = reference_start(R, both)
            run = flow.run(bx0, bxi0, s_horizon, t_eval=np.concatenate([[0.0], probe]))
            xi = run.xi[1:, :, 0].real
            jac = (xi[:, eta.size :] - xi[:, : eta.size]) / d
            defect = float(np.max(np.abs(jac - 1.0)))
            edge = np.array([-delta, delta])
            ex0, exi0 = reference_start(R, edge)
            edge_run = flow.run(ex0, exi0, s_horizon, t_eval=np.concatenate([[0.0], probe]))
            coverage = float(np.max(np.abs(edge_run.xi[:, :, 0])))
            tried.append({"R": R, "delta": delta, "jacobian_defect": defect, "coverage": coverage})
            if defect > settings.jacobian_budget:
                break
            if coverage <= delta0:
                logger.info(f"Successfully chose R_delta={R} (delta={delta}) for {fam.name} at h={h}")
                return ReferenceConfig(
                    delta0=delta0,
                    delta=delta,
                    R_delta=R,
                    h=h,
                    s_horizon=s_horizon,
                    jacobian_defect=defect,
                    coverage=coverage,
                )
        if trapped:
            tried.append({"R": R, "trapped": True})
        R *= 2.0
    logger.error(f"No admissible R_delta up to {settings.R_cap} for {fam.name}")
    raise NoAdmissibleR(
        "doubling R_delta exceeded the cap", {"R_cap": settings.R_cap, "attempts": tried[-4:]}
    )


def invert_J(
    cfg: ReferenceConfig,
    fam: MetricFamily,
    s: float,
    xi_target,
    settings: Optional[PhaseSection] = None,
    guess=None,
) -> np.ndarray:
    """Source momenta eta with xi(s, X_delta(eta); h) = xi_target."""
    targets = np.atleast_1d(np.asarray(xi_target, dtype=float))
    if np.any(np.abs(targets) <= cfg.delta0):
        raise PreconditionViolated(
            "target momentum inside the floor |xi| <= delta0",
            {"xi_target": targets, "delta0": cfg.delta0},
        )
    solver = CharacteristicSolver(fam, cfg, _phase_settings(settings))
    return solver.sources(np.full(targets.shape, float(s)), targets, guess)


def _richardson_derivative(plus1, minus1, plus2, minus2, step: float):
    first = (plus1 - minus1) / (2.0 * step)
    second = (plus2 - minus2) / (4.0 * step)
    return (4.0 * first - second) / 3.0


class PhaseW:
    """Cached W(s, xi) with its complex extension W~(s, zeta) in zeta.

    Knot data are interpolated by cubic Hermite splines in xi (per branch) and
    in s, using the exact s-derivatives d_s W = q(x_hat, xi; h) and
    d_s x_hat = q_x A + q_xi. A = d_xi^2 W is linear in s between knots.
    """

    def __init__(
        self,
        family: MetricFamily,
        config: ReferenceConfig,
        table: PhaseTable,
        settings: PhaseSection,
    ):
        self.family = family
        self.config = config
        self.table = table
        self.settings = settings
        R = config.R_delta
        xi = table.xi_knots
        self._branches = [xi < 0.0, xi > 0.0]
        self._splines = []
        for k in range(len(table.s_knots)):
            per_branch = []
            for mask in self._branches:
                knots = xi[mask]
                sign = np.sign(knots)
                Wt = table.W[k, mask] - R * np.abs(knots)
                Gt = table.grad[k, mask] - R * sign
                H = table.hess[k, mask]
                per_branch.append(
                    (
                        CubicHermiteSpline(knots, Wt, Gt),
                        CubicHermiteSpline(knots, Gt, H),
                        CubicSpline(knots, H),
                    )
                )
            self._splines.append(per_branch)
        self._xi_max = float(np.max(np.abs(xi)))

    @property
    def s_max(self) -> float:
        return float(self.table.s_knots[-1])

    @property
    def xi_max(self) -> float:
        return self._xi_max

    def _clip(self, a: np.ndarray) -> np.ndarray:
        lo, hi = self.config.delta0, self._xi_max
        return np.where(a < 0.0, -np.clip(-a, lo, hi), np.clip(a, lo, hi))

    def _knot_values(self, a: np.ndarray):
        """W~, x_hat - R sgn and A on every s-knot at real momenta a, shape (K, N)."""
        a = self._clip(a)
        K = len(self.table.s_knots)
        out = np.zeros((3, K, a.size))
        negative = a < 0.0
        for k in range(K):
            for b, mask in enumerate((negative, ~negative)):
                if not np.any(mask):
                    continue
                for j, spline in enumerate(self._splines[k][b]):
                    out[j, k, mask] = spline(a[mask])
        return out[0], out[1], out[2], a

    def _s_derivatives(self, a: np.ndarray, Gt: np.ndarray, H: np.ndarray):
        x_hat = Gt + self.config.R_delta * np.where(a < 0.0, -1.0, 1.0)
        xi = np.broadcast_to(a, x_hat.shape)
        h = self.config.h
        dW = _scalar_q(self.family, x_hat, xi, h).real
        q_x, q_xi = _scalar_q_gradients(self.family, x_hat, xi, h)
        dG = q_x.real * H + q_xi.real
        return dW, dG

    def _real(self, s, a):
        """(W~, x_hat - R sgn, A, momenta used) at real (s, a)."""
        s, a = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(a, dtype=float))
        shape = s.shape
        s, a = s.reshape(-1), a.reshape(-1)
        if np.any(s < 0.0) or np.any(s > self.s_max * (1.0 + 1e-12)):
            raise PreconditionViolated(
                "s outside the cached range", {"s_max": self.s_max, "s": [float(s.min()), float(s.max())]}
            )
        Wt, Gt, H, a_used = self._knot_values(a)
        dW, dG = self._s_derivatives(a_used, Gt, H)
        knots = self.table.s_knots
        k = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(knots) - 2)
        s0, s1 = knots[k], knots[k + 1]
        step = s1 - s0
        t = (s - s0) / step
        cols = np.arange(s.size)

        def hermite(values, slopes):
            v0, v1 = values[k, cols], values[k + 1, cols]
            d0, d1 = slopes[k, cols], slopes[k + 1, cols]
            return (
                (2 * t**3 - 3 * t**2 + 1) * v0
                + (t**3 - 2 * t**2 + t) * step * d0
                + (-2 * t**3 + 3 * t**2) * v1
                + (t**3 - t**2) * step * d1
            )

        W_t = hermite(Wt, dW)
        G_t = hermite(Gt, dG)
        H_s = (1.0 - t) * H[k, cols] + t * H[k + 1, cols]
        return W_t.reshape(shape), G_t.reshape(shape), H_s.reshape(shape), a_used.reshape(shape)

    def _sign(self, a):
        return np.where(np.asarray(a) < 0.0, -1.0, 1.0)

    def W(self, s, xi) -> np.ndarray:
        W_t, _, _, _ = self._real(s, xi)
        return W_t + self.config.R_delta * np.abs(np.asarray(xi, dtype=float))

    def x_hat(self, s, xi) -> np.ndarray:
        _, G_t, _, _ = self._real(s, xi)
        return G_t + self.config.R_delta * self._sign(xi)

    def hess(self, s, xi) -> np.ndarray:
        return self._real(s, xi)[2]

    def Wtilde(self, s, zeta) -> np.ndarray:
        """W~(s, a + ib) = W~(s, a) + ib d W~(s, a) - b^2 A(s, a) / 2."""
        zeta = np.asarray(zeta, dtype=complex)
        b = zeta.imag
        W_t, G_t, H, _ = self._real(s, zeta.real)
        return W_t + 1j * b * G_t - 0.5 * b * b * H

    def grad_tilde(self, s, zeta) -> np.ndarray:
        """d_zeta W~(s, zeta) = d W~(s, a) + ib A(s, a)."""
        zeta = np.asarray(zeta, dtype=complex)
        _, G_t, H, _ = self._real(s, zeta.real)
        return G_t + 1j * zeta.imag * H

    def _ds_real(self, s, a):
        W_t, G_t, H, a_used = self._real(s, a)
        x_hat = G_t + self.config.R_delta * self._sign(a_used)
        h = self.config.h
        f = _scalar_q(self.family, x_hat, a_used, h).real
        q_x, q_xi = _scalar_q_gradients(self.family, x_hat, a_used, h)
        return f, q_x.real * H + q_xi.real

    def ds_W(self, s, zeta, step: float = 1e-4) -> np.ndarray:
        """d_s W at complex zeta, second order in Im zeta."""
        zeta = np.asarray(zeta, dtype=complex)
        a, b = zeta.real, zeta.imag
        f, fp = self._ds_real(s, a)
        _, fp_plus = self._ds_real(s, a + step)
        _, fp_minus = self._ds_real(s, a - step)
        fpp = (fp_plus - fp_minus) / (2.0 * step)
        return f + 1j * b * fp - 0.5 * b * b * fpp

    def evaluate(self, s: float, xi: float) -> WEvaluation:
        W_t, G_t, H, _ = self._real(s, xi)
        R = self.config.R_delta
        return WEvaluation(
            s=float(s),
            xi=float(xi),
            W=float(W_t + R * abs(xi)),
            gradW=float(G_t + R * np.sign(xi)),
            hessW=float(H),
            Wtilde=float(W_t),
        )


def _s_knots(s_max: float, count: int, extra: Sequence[float]) -> np.ndarray:
    top = max(float(s_max), 1.0)
    base = np.concatenate([[0.0], np.geomspace(1.0, top, count - 1)])
    extra = [float(e) for e in extra if 0.0 <= e <= top]
    return np.unique(np.concatenate([base, extra]))


def _xi_knots(delta0: float, xi_max: float, count: int) -> np.ndarray:
    ray = np.linspace(delta0, xi_max, count)
    return np.concatenate([-ray[::-1], ray])


def build_phase(
    fam: MetricFamily,
    cfg: ReferenceConfig,
    s_max: float,
    settings: Optional[PhaseSection] = None,
    extra_s: Sequence[float] = (),
) -> PhaseW:
    """Populate the knot table along characteristics and freeze it into a PhaseW.

    s-knots are swept in increasing order so that each Newton solve starts
    from the sources of the previous knot.
    """
    settings = _phase_settings(settings)
    solver = CharacteristicSolver(fam, cfg, settings)
    s_knots = _s_knots(s_max, settings.s_knots, extra_s)
    xi_knots = _xi_knots(cfg.delta0, settings.Xi_max, settings.xi_knots)
    d = settings.fd_step
    offsets = np.array([0.0, d, -d, 2.0 * d, -2.0 * d])
    targets = (xi_knots[None, :] + offsets[:, None]).ravel()
    shape = (len(s_knots), len(xi_knots))
    W, grad, hess, identity = (np.zeros(shape) for _ in range(4))
    guess = targets.copy()
    for k, s in enumerate(s_knots):
        eta, x_hat, w = solver.values(np.full(targets.shape, s), targets, guess)
        guess = eta
        x_hat = x_hat.reshape(5, -1)
        w = w.reshape(5, -1)
        W[k], grad[k] = w[0], x_hat[0]
        hess[k] = _richardson_derivative(x_hat[1], x_hat[2], x_hat[3], x_hat[4], d)
        fd_grad = _richardson_derivative(w[1], w[2], w[3], w[4], d)
        identity[k] = np.abs(fd_grad - x_hat[0]) / np.maximum(1.0, np.abs(x_hat[0]))
        logger.debug(f"Phase knot s={s:.4g} done, gradient identity {identity[k].max():.2e}")
    table = PhaseTable(
        s_knots=s_knots, xi_knots=xi_knots, W=W, grad=grad, hess=hess, gradient_identity=identity
    )
    logger.info(f"Successfully built W for {fam.name} on {shape[0]}x{shape[1]} knots")
    return PhaseW(fam, cfg, table, settings)


def reference_phase(
    fam: MetricFamily,
    delta0: float,
    h: float,
    s_max: float,
    settings: Optional[PhaseSection] = None,
    flow_settings: Optional[FlowSection] = None,
    extra_s: Sequence[float] = (),
) -> PhaseW:
    """choose_reference certified up to s_max, then build_phase on it."""
    settings = _phase_settings(settings).model_copy(update={"delta0": delta0})
    cfg = choose_reference(fam, delta0, h, settings, flow_settings, s_horizon=s_max)
    return build_phase(fam, cfg, s_max, settings, extra_s)


def _log_panels(s: float, panels: int) -> np.ndarray:
    return np.expm1(np.linspace(0.0, np.log1p(s), panels + 1))


def eval_W(
    phase: PhaseW,
    s: float,
    xi: float,
    exact: bool = True,
    panels: int = 4,
    nodes: int = 16,
) -> WEvaluation:
    """W, d_xi W, d_xi^2 W and W~ at one real (s, xi).

    The exact path integrates q(x_hat(s', xi), xi; h) over s' with composite
    Gauss-Legendre panels uniform in log(1 + s'); every x_hat(s', xi) comes from
    one batched Newton inversion with per-node end times.
    """
    cfg = phase.config
    if abs(xi) <= cfg.delta0:
        raise PreconditionViolated("|xi| must exceed delta0", {"xi": xi, "delta0": cfg.delta0})
    if s < 0.0:
        raise PreconditionViolated("s must be non-negative", {"s": s})
    if not exact:
        return phase.evaluate(s, xi)
    R = cfg.R_delta
    if s == 0.0:
        return WEvaluation(s=0.0, xi=xi, W=R * abs(xi), gradW=R * np.sign(xi), hessW=0.0, Wtilde=0.0)
    solver = CharacteristicSolver(phase.family, cfg, phase.settings)
    s_nodes, weights = composite_gauss_legendre(_log_panels(s, panels), nodes)
    d = phase.settings.fd_step
    local = xi + np.array([0.0, d, -d, 2.0 * d, -2.0 * d])
    s_ends = np.concatenate([s_nodes, np.full(5, s)])
    targets = np.concatenate([np.full(s_nodes.shape, xi), local])
    _, x_hat, _ = solver.values(s_ends, targets)
    q = _scalar_q(phase.family, x_hat[: s_nodes.size], np.full(s_nodes.shape, xi), cfg.h).real
    W = R * abs(xi) + float(np.dot(weights, q))
    at_s = x_hat[s_nodes.size :]
    hess = _richardson_derivative(at_s[1], at_s[2], at_s[3], at_s[4], d)
    return WEvaluation(
        s=float(s), xi=float(xi), W=W, gradW=float(at_s[0]), hessW=float(hess), Wtilde=W - R * abs(xi)
    )


def characteristic_W(phase: PhaseW, s_values, xi_values) -> Tuple[np.ndarray, np.ndarray]:
    """Exact (W, x_hat) at paired (s_j, xi_j) from the characteristics."""
    solver = CharacteristicSolver(phase.family, phase.config, phase.settings)
    _, x_hat, W = solver.values(s_values, xi_values)
    return W, x_hat


def eikonal_residual(
    phase: PhaseW,
    s_grid: Sequence[float],
    xi_grid: Sequence[float],
    step: float = 0.25,
    w_evaluator: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> EikonalReport:
    """max <s>^(1+sigma) |d_s W - q(d_xi W, xi; h)| with d_s W by differences of step ``step``.

    ``w_evaluator(s, xi)`` replaces the characteristic W when given; its
    momentum derivative is then taken by differences as well.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    xi_grid = np.asarray(xi_grid, dtype=float)
    S, X = np.meshgrid(s_grid, xi_grid, indexing="ij")
    S, X = S.ravel(), X.ravel()
    forward = S < step
    lo = np.where(forward, S, S - step)
    mid = np.where(forward, S + step, S)
    hi = np.where(forward, S + 2.0 * step, S + step)
    d = phase.settings.fd_step
    if w_evaluator is None:
        s_all = np.concatenate([lo, mid, hi, S])
        x_all = np.tile(X, 4)
        W_all, x_hat_all = characteristic_W(phase, s_all, x_all)
        W_lo, W_mid, W_hi, _ = np.split(W_all, 4)
        x_hat = np.split(x_hat_all, 4)[3]
    else:
        W_lo, W_mid, W_hi = (np.asarray(w_evaluator(t, X), dtype=float) for t in (lo, mid, hi))
        x_hat = _richardson_derivative(
            w_evaluator(S, X + d), w_evaluator(S, X - d), w_evaluator(S, X + 2 * d), w_evaluator(S, X - 2 * d), d
        )
    ds = np.where(
        forward,
        (-3.0 * W_lo + 4.0 * W_mid - W_hi) / (2.0 * step),
        (W_hi - W_lo) / (2.0 * step),
    )
    target = _scalar_q(phase.family, x_hat, X, phase.config.h).real
    normalized = np.abs(ds - target) * _bracket(S) ** (1.0 + phase.family.sigma)
    worst = int(np.argmax(normalized))
    tol = phase.settings.eikonal_tol
    report = EikonalReport(
        max_normalized=float(normalized[worst]),
        tol=tol,
        passed=bool(normalized[worst] <= tol),
        worst_s=float(S[worst]),
        worst_xi=float(X[worst]),
        step=step,
        points=int(S.size),
    )
    if report.passed:
        logger.info(f"Successfully certified the eikonal equation on {S.size} points")
    else:
        logger.error(f"Eikonal residual {report.max_normalized:.3e} above {tol:.1e}")
    return report


def phase_growth(phase: PhaseW) -> PhaseGrowth:
    table = phase.table
    positive = table.s_knots > 0.0
    scale = _bracket(table.s_knots[positive])[:, None]
    return PhaseGrowth(
        max_grad_ratio=float(np.max(np.abs(table.grad[positive]) / scale)),
        max_hess_ratio=float(np.max(np.abs(table.hess[positive]) / scale)),
        max_gradient_identity=float(np.max(table.gradient_identity)),
    )


def growth_across_ladder(
    fam: MetricFamily,
    delta0: float,
    h_ladder: Sequence[float],
    s_max: float,
    settings: Optional[PhaseSection] = None,
    pool: WorkerPool = default_pool,
) -> list[PhaseGrowth]:
    """Phase growth ratios for each h of a ladder, one reference per h."""
    settings = _phase_settings(settings)

    def one(h: float) -> PhaseGrowth:
        cfg = choose_reference(fam, delta0, h, settings)
        return phase_growth(build_phase(fam, cfg, s_max, settings))

    return pool.map(one, list(h_ladder))


def phase_rows(phase: PhaseW):
    """CSV header and rows in long format, one row per (s-knot, xi-knot)."""
    table = phase.table
    rows = []
    for k, s in enumerate(table.s_knots):
        for j, xi in enumerate(table.xi_knots):
            rows.append([s, xi, table.W[k, j], table.grad[k, j], table.hess[k, j]])
    return TABLE_HEADER, rows


def phase_from_rows(
    header: Sequence[str],
    data: np.ndarray,
    fam: MetricFamily,
    cfg: ReferenceConfig,
    settings: Optional[PhaseSection] = None,
) -> PhaseW:
    """Rebuild a PhaseW from rows written by phase_rows."""
    if list(header) != TABLE_HEADER:
        raise ValueError(f"unexpected phase table header {header}")
    s_knots = np.unique(data[:, 0])
    xi_knots = np.unique(data[:, 1])
    shape = (len(s_knots), len(xi_knots))
    if data.shape[0] != shape[0] * shape[1]:
        raise ValueError("phase table is not a full tensor grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    grid = data[order]
    table = PhaseTable(
        s_knots=s_knots,
        xi_knots=xi_knots,
        W=grid[:, 2].reshape(shape),
        grad=grid[:, 3].reshape(shape),
        hess=grid[:, 4].reshape(shape),
        gradient_identity=np.zeros(shape),
    )
    return PhaseW(fam, cfg, table, _phase_settings(settings))