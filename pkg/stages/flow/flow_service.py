import logging
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from internal.dependencies.errors import (
    DomainExit,
    EnergyDriftExceeded,
    FitDiverged,
    Inconclusive,
    PreconditionViolated,
    StepFailure,
    TrappedOrbit,
)
from internal.numerics.fitting import extrapolate, loglog_slope, power_law_limit
from stages.symbols.symbols_model import MetricFamily, SymbolPoint
from stages.symbols.symbols_service import (
    DEFAULT_SAFETY,
    as_points,
    domain_margin,
    q_gradients,
    q_value,
    require_domain,
)

from .flow_model import AsymptoticData, BatchFlow, DeviationReport, NontrappingReport, Trajectory

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)


class HamiltonFlow:
    """Hamilton field of q(x, xi; h) (or of q0 alone) for one family.

    States of ``m`` starts are integrated together as one complex vector
    ``[x (m*n), xi (m*n), action (m)]``; the action column carries
    ``int (q - x . d_x q) ds`` used by the phase construction.
    """

    def __init__(
        self,
        fam: MetricFamily,
        h: float,
        principal: bool = False,
        tol: float = 1e-9,
        safety: float = DEFAULT_SAFETY,
    ):
        self.fam = fam
        self.h = h
        self.principal = principal
        self.tol = tol
        self.safety = safety

    def _unpack(self, y: np.ndarray, m: int):
        n = self.fam.dim
        x = y[: m * n].reshape(m, n)
        xi = y[m * n : 2 * m * n].reshape(m, n)
        return x, xi

    def _field(self, m: int, with_action: bool):
        fam, h, principal = self.fam, self.h, self.principal

        def rhs(s, y):
            x, xi = self._unpack(y, m)
            q_x, q_xi = q_gradients(fam, x, xi, h, principal)
            parts = [q_xi.ravel(), (-q_x).ravel()]
            if with_action:
                q = q_value(fam, x, xi, h, principal)
                parts.append(q - np.sum(x * q_x, axis=-1))
            return np.concatenate(parts)

        return rhs

    def _exit_event(self, m: int):
        def leaves_domain(s, y):
            x, _ = self._unpack(y, m)
            return float(np.min(domain_margin(self.fam, x, self.safety)))

        leaves_domain.terminal = True
        leaves_domain.direction = -1
        return leaves_domain

    def _initial_state(self, x0, xi0, with_action: bool):
        x0 = as_points(self.fam, x0).reshape(-1, self.fam.dim)
        xi0 = as_points(self.fam, xi0).reshape(-1, self.fam.dim)
        m = x0.shape[0]
        y0 = [x0.ravel(), xi0.ravel()]
        if with_action:
            y0.append(np.zeros(m, dtype=complex))
        return np.concatenate(y0).astype(complex), m

    def _solve(self, y0: np.ndarray, m: int, s_end: float, with_action: bool, **kwargs):
        sol = solve_ivp(
            self._field(m, with_action),
            (0.0, s_end),
            y0,
            method="DOP853",
            events=self._exit_event(m),
            rtol=0.1 * self.tol,
            atol=1e-3 * self.tol,
            **kwargs,
        )
        if sol.status == 1:
            s_exit = float(sol.t_events[0][0])
            logger.error(f"Flow left the domain at s={s_exit:.4g}")
            raise DomainExit("trajectory left the coefficient domain", {"s": s_exit})
        if sol.status != 0:
            logger.error(f"Flow integration failed: {sol.message}")
            raise StepFailure(f"integrator failure: {sol.message}", {"s": float(sol.t[-1])})
        return sol

    def _energy_drift(self, x, xi, x0, xi0, check_energy: bool) -> float:
        q = q_value(self.fam, x, xi, self.h, self.principal)
        q0 = q_value(self.fam, x0, xi0, self.h, self.principal)
        drift = np.abs(q - q0) / np.maximum(np.abs(q0), 1e-300)
        energy_drift = float(np.max(drift)) if drift.size else 0.0
        if check_energy and energy_drift > 10.0 * self.tol:
            logger.error(f"Energy drift {energy_drift:.3e} above budget {10.0 * self.tol:.1e}")
            raise EnergyDriftExceeded(
                "relative drift of q above the integrator budget",
                {"energy_drift": energy_drift, "budget": 10.0 * self.tol},
            )
        return energy_drift

    def run(
        self,
        x0,
        xi0,
        s_end: float,
        t_eval: Optional[Sequence[float]] = None,
        with_action: bool = False,
        check_energy: bool = True,
    ) -> BatchFlow:
        """Integrate every start over [0, s_end] and sample at ``t_eval``."""
        y0, m = self._initial_state(x0, xi0, with_action)
        n = self.fam.dim
        if t_eval is None:
            t_eval = np.array([0.0, s_end])
        t_eval = np.asarray(t_eval, dtype=float)
        if s_end == 0.0:
            states = np.repeat(y0[:, None], len(t_eval), axis=1)
            s = t_eval
        else:
            sol = self._solve(y0, m, s_end, with_action, t_eval=t_eval)
            states, s = sol.y, sol.t
        k = len(s)
        x = states[: m * n].T.reshape(k, m, n)
        xi = states[m * n : 2 * m * n].T.reshape(k, m, n)
        action = states[2 * m * n :].T.reshape(k, m) if with_action else None
        energy_drift = self._energy_drift(x, xi, x[:1], xi[:1], check_energy)
        return BatchFlow(s=s, x=x, xi=xi, action=action, energy_drift=energy_drift)

    def endpoints(
        self, x0, xi0, s_ends, with_action: bool = False, check_energy: bool = True
    ) -> BatchFlow:
        """State of start j at its own time s_ends[j], read from one dense-output run.

        The returned BatchFlow has a single sample axis entry; ``s`` holds the
        per-start end times.
        """
        y0, m = self._initial_state(x0, xi0, with_action)
        n = self.fam.dim
        s_ends = np.broadcast_to(np.asarray(s_ends, dtype=float), (m,)).copy()
        s_end = float(np.max(s_ends)) if m else 0.0
        if s_end == 0.0:
            states = np.repeat(y0[:, None], m, axis=1)
        else:
            sol = self._solve(y0, m, s_end, with_action, dense_output=True)
            states = sol.sol(s_ends)
        own = np.arange(m)
        x = states[: m * n].reshape(m, n, m)[own, :, own]
        xi = states[m * n : 2 * m * n].reshape(m, n, m)[own, :, own]
        action = states[2 * m * n :][own, own][None] if with_action else None
        start = y0[: 2 * m * n]
        energy_drift = self._energy_drift(
            x, xi, start[: m * n].reshape(m, n), start[m * n :].reshape(m, n), check_energy
        )
        return BatchFlow(s=s_ends, x=x[None], xi=xi[None], action=action, energy_drift=energy_drift)


def integrate_flow(
    fam: MetricFamily,
    start: SymbolPoint,
    T: float,
    h: float,
    tol: float = 1e-9,
    s_max: float = 1e4,
    samples: int = 401,
    principal: bool = False,
) -> Trajectory:
    """Dense samples of exp sH_q(start) over s in [0, T/h]."""
    s_end = T / h
    if s_end > s_max:
        raise PreconditionViolated("T/h exceeds s_max", {"s_end": s_end, "s_max": s_max})
    require_domain(fam, start.position())
    flow = HamiltonFlow(fam, h, principal=principal, tol=tol)
    grid = np.linspace(0.0, s_end, samples)
    run = flow.run(start.position(), start.momentum(), s_end, t_eval=grid)
    q = q_value(fam, run.x[:, 0], run.xi[:, 0], h, principal)
    drift = np.abs(q - q[0]) / max(abs(q[0]), 1e-300)
    logger.info(f"Successfully integrated {fam.name} flow to s={s_end:.4g}")
    return Trajectory(
        s=run.s, x=run.x[:, 0], xi=run.xi[:, 0], q_drift=drift, h=h, principal=principal
    )


def _growth_constants(s: np.ndarray, r: np.ndarray) -> tuple[float, float]:
    tail = s >= 0.9 * s[-1]
    if tail.sum() < 2 or s[-1] == s[tail][0]:
        return np.inf, np.inf
    v_inf = (r[-1] - r[tail][0]) / (s[-1] - s[tail][0])
    upper = float(np.max(r / (s + 1.0)))
    if v_inf <= 0.0:
        return np.inf, upper
    c1 = 1.0 / v_inf
    c2 = float(np.max(s / c1 - r))
    return max(c1, c2), upper


def classify_batch(
    fam: MetricFamily,
    x0,
    xi0,
    h: float,
    s_probe: float = 200.0,
    samples: int = 2001,
    tol: float = 1e-9,
) -> list[NontrappingReport]:
    """Non-trapping probe for several starts integrated together."""
    flow = HamiltonFlow(fam, h, tol=tol)
    grid = np.linspace(0.0, s_probe, samples)
    run = flow.run(x0, xi0, s_probe, t_eval=grid, check_energy=False)
    C = fam.C0 if fam.perturbed else 0.0
    c_eff = max(C, 1.0)
    reports = []
    for j in range(run.x.shape[1]):
        r = np.linalg.norm(np.abs(run.x[:, j]), axis=-1)
        growth, upper = _growth_constants(run.s, r)
        convex = np.sqrt(1.0 + r**2) ** fam.sigma > 3.0 * C * C
        rising = np.append(r[1:] > r[:-1], False)
        hits = np.flatnonzero(convex & rising)
        if hits.size == 0:
            reports.append(
                NontrappingReport(
                    nontrapping=False, s0=None, C=C, growth_constant=growth, upper_constant=upper
                )
            )
            continue
        i0 = int(hits[0])
        s0 = float(run.s[i0])
        after = run.s >= s0
        margin = r[after] ** 2 - (run.s[after] - s0) ** 2 / (2.0 * c_eff)
        reports.append(
            NontrappingReport(
                nontrapping=bool(np.all(margin >= 0.0)),
                s0=s0,
                C=C,
                min_growth_margin=float(np.min(margin)),
                growth_constant=growth,
                upper_constant=upper,
            )
        )
    return reports


def classify_nontrapping(
    fam: MetricFamily,
    start: SymbolPoint,
    h: float,
    s_probe: float = 200.0,
    samples: int = 2001,
    tol: float = 1e-9,
) -> NontrappingReport:
    """True iff |x(s)| passes the convexity and linear-growth probe.

    Raises Inconclusive when no probed time meets the convexity criterion.
    """
    require_domain(fam, start.position())
    report = classify_batch(fam, start.position(), start.momentum(), h, s_probe, samples, tol)[0]
    if report.s0 is None:
        logger.error(f"No convexity time found within s_probe={s_probe}")
        raise Inconclusive(
            "neither growth criterion fired within the probe horizon",
            {"s_probe": s_probe, "C": report.C},
        )
    return report


def xi_plus(
    fam: MetricFamily,
    start: SymbolPoint,
    h_ladder: Sequence[float],
    T: float,
    tol: float = 1e-9,
    s_max: float = 1e4,
    s_probe: float = 200.0,
    samples: int = 2001,
) -> AsymptoticData:
    """Momentum limit by a tail fit of the q0-flow, cross-checked on the h-ladder."""
    x0, p0 = start.position(), start.momentum()
    require_domain(fam, x0)
    growth_by_h, uppers = [], []
    for h in h_ladder:
        try:
            report = classify_nontrapping(fam, start, h, s_probe, samples, tol)
        except Inconclusive as e:
            raise TrappedOrbit("start is not forward non-trapping", {"h": h, **e.details})
        if not report.nontrapping:
            logger.error(f"Trapped orbit at h={h}: growth margin {report.min_growth_margin}")
            raise TrappedOrbit(
                "|x(s)| fails the linear-growth test",
                {"h": h, "min_growth_margin": report.min_growth_margin},
            )
        growth_by_h.append(report.growth_constant)
        uppers.append(report.upper_constant)

    sigma = fam.sigma
    tail_s = np.geomspace(s_max / 10.0, s_max, 64)
    principal = HamiltonFlow(fam, 1.0, principal=True, tol=tol)
    run = principal.run(x0, p0, s_max, t_eval=np.concatenate([[0.0], tail_s]))
    tail = power_law_limit(tail_s, run.xi[1:, 0].real, (-sigma,))
    limit = np.atleast_1d(tail.coeffs[0])
    tail_error = tail.max_deviation

    values = []
    for h in h_ladder:
        flow = HamiltonFlow(fam, h, tol=tol)
        values.append(flow.run(x0, p0, T / h).xi[-1, 0].real)
    values = np.array(values)
    ladder = extrapolate(h_ladder, values, sigma)
    gap = float(np.max(np.abs(ladder.limit - limit)))
    allowed = 3.0 * (ladder.error + tail_error) + max(1e-9, 10.0 * tol)
    if gap > allowed:
        logger.error(f"Ladder limit disagrees with the tail fit by {gap:.3e}")
        raise FitDiverged(
            "h-ladder extrapolation disagrees with the tail fit",
            {"gap": gap, "allowed": allowed, "xi_plus": limit, "ladder_limit": ladder.limit},
        )

    deviations = np.linalg.norm(values - limit, axis=-1)
    slope, _ = loglog_slope(T / np.asarray(h_ladder), deviations, floor=100.0 * tol)
    logger.info(f"Successfully extracted xi_plus={limit} for {fam.name}")
    return AsymptoticData(
        xi_plus=limit.tolist(),
        nontrapping=True,
        growth_constant=float(max(growth_by_h)),
        momentum_rate=float(-slope),
        upper_constant=float(max(uppers)),
        tail_error=tail_error,
        ladder_limit=np.atleast_1d(ladder.limit).tolist(),
        ladder_error=ladder.error,
        ladder_values=values.reshape(len(h_ladder), -1).tolist(),
        growth_by_h=[float(g) for g in growth_by_h],
    )


def flow_deviation(
    fam: MetricFamily, start: SymbolPoint, h: float, T: float, tol: float = 1e-9, samples: int = 401
) -> DeviationReport:
    """sup |x - y| / (h <s>^(2-sigma)) and sup |xi - eta| / (h <s>^(1-sigma)) on [0, T/h]."""
    s_end = T / h
    grid = np.linspace(0.0, s_end, samples)
    full = HamiltonFlow(fam, h, tol=tol).run(start.position(), start.momentum(), s_end, grid)
    free = HamiltonFlow(fam, h, principal=True, tol=tol).run(
        start.position(), start.momentum(), s_end, grid
    )
    bracket_s = np.sqrt(1.0 + grid**2)
    dx = np.linalg.norm(np.abs(full.x[:, 0] - free.x[:, 0]), axis=-1)
    dxi = np.linalg.norm(np.abs(full.xi[:, 0] - free.xi[:, 0]), axis=-1)
    return DeviationReport(
        h=h,
        T=T,
        position_ratio=float(np.max(dx / (h * bracket_s ** (2.0 - fam.sigma)))),
        momentum_ratio=float(np.max(dxi / (h * bracket_s ** (1.0 - fam.sigma)))),
    )


def semigroup_residual(
    fam: MetricFamily, start: SymbolPoint, h: float, s1: float, s2: float, tol: float = 1e-9
) -> float:
    """max |exp(s2 - s1)H exp(s1 H) - exp(s2 H)| over the state."""
    flow = HamiltonFlow(fam, h, tol=tol)
    direct = flow.run(start.position(), start.momentum(), s2)
    first = flow.run(start.position(), start.momentum(), s1)
    second = flow.run(first.x[-1], first.xi[-1], s2 - s1)
    return float(
        max(
            np.max(np.abs(second.x[-1] - direct.x[-1])),
            np.max(np.abs(second.xi[-1] - direct.xi[-1])),
        )
    )


def tolerance_refinement_residual(
    fam: MetricFamily, start: SymbolPoint, h: float, T: float, tol: float = 1e-9, samples: int = 201
) -> float:
    """Pointwise distance to a re-integration with a 2^8 times tighter tolerance.

    DOP853 steps scale like tol^(1/8), so the rerun takes steps about half as long.
    """
    s_end = T / h
    grid = np.linspace(0.0, s_end, samples)
    coarse = HamiltonFlow(fam, h, tol=tol).run(start.position(), start.momentum(), s_end, grid)
    fine = HamiltonFlow(fam, h, tol=tol / 256.0).run(
        start.position(), start.momentum(), s_end, grid
    )
    return float(
        max(np.max(np.abs(coarse.x - fine.x)), np.max(np.abs(coarse.xi - fine.xi)))
    )


def trajectory_rows(traj: Trajectory):
    """CSV header and rows: s, Re x_j, Im x_j, Re xi_j, Im xi_j, q_drift."""
    n = traj.x.shape[1]
    header = ["s"]
    for j in range(n):
        header += [f"re_x{j + 1}", f"im_x{j + 1}"]
    for j in range(n):
        header += [f"re_xi{j + 1}", f"im_xi{j + 1}"]
    header.append("q_drift")
    rows = []
    for k, s in enumerate(traj.s):
        row = [s]
        for j in range(n):
            row += [traj.x[k, j].real, traj.x[k, j].imag]
        for j in range(n):
            row += [traj.xi[k, j].real, traj.xi[k, j].imag]
        row.append(traj.q_drift[k])
        rows.append(row)
    return header, rows
