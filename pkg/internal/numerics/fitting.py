from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class LinearFit:
    """Least-squares coefficients plus goodness-of-fit."""

    coeffs: np.ndarray
    residuals: np.ndarray
    r2: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


@dataclass(frozen=True)
class Extrapolation:
    """Limit of a ladder as the step goes to zero, with an error estimate."""

    limit: np.ndarray
    error: float
    leading: np.ndarray
    ladder: np.ndarray


def least_squares(design: np.ndarray, values: np.ndarray) -> LinearFit:
    """Solve ``design @ coeffs ~ values`` and report r²."""
    design = np.asarray(design, dtype=float)
    values = np.asarray(values, dtype=float)
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    residuals = values - design @ coeffs
    spread = np.sum((values - values.mean(axis=0)) ** 2)
    r2 = 1.0 if spread == 0.0 else float(1.0 - np.sum(residuals**2) / spread)
    return LinearFit(coeffs=coeffs, residuals=residuals, r2=r2)


def power_law_limit(
    steps: Sequence[float], values: np.ndarray, exponents: Sequence[float]
) -> LinearFit:
    """Fit ``values = limit + sum_k c_k * step**exponents[k]``; coeffs[0] is the limit.

    ``values`` may carry trailing dimensions; each column is fitted on its own
    and the residuals keep the input shape.
    """
    steps = np.asarray(steps, dtype=float)
    values = np.asarray(values)
    columns = [np.ones_like(steps)] + [steps**p for p in exponents]
    design = np.stack(columns, axis=1)
    flat = values.reshape(len(steps), -1)
    if np.iscomplexobj(flat):
        re = least_squares(design, flat.real)
        im = least_squares(design, flat.imag)
        coeffs = re.coeffs + 1j * im.coeffs
        residuals = re.residuals + 1j * im.residuals
        r2 = min(re.r2, im.r2)
    else:
        fit = least_squares(design, flat)
        coeffs, residuals, r2 = fit.coeffs, fit.residuals, fit.r2
    return LinearFit(
        coeffs=coeffs.reshape((len(columns),) + values.shape[1:]),
        residuals=residuals.reshape(values.shape),
        r2=r2,
    )


def extrapolate(steps: Sequence[float], values: np.ndarray, exponent: float) -> Extrapolation:
    """Extrapolate a ladder to step 0 with the model ``L + c*step**p (+ d*step**2p)``.

    With four or more points the second-order model is used and the error is
    the larger of its worst residual and its distance to the first-order limit.
    """
    values = np.asarray(values)
    first = power_law_limit(steps, values, (exponent,))
    if len(steps) < 4:
        return Extrapolation(
            limit=first.coeffs[0],
            error=first.max_deviation,
            leading=first.coeffs[1],
            ladder=values,
        )
    second = power_law_limit(steps, values, (exponent, 2.0 * exponent))
    gap = float(np.max(np.abs(second.coeffs[0] - first.coeffs[0])))
    return Extrapolation(
        limit=second.coeffs[0],
        error=max(second.max_deviation, gap),
        leading=second.coeffs[1],
        ladder=values,
    )


def loglog_slope(x: Sequence[float], y: Sequence[float], floor: float = 0.0) -> Tuple[float, float]:
    """Slope of ln y against ln x and its r²; samples with y <= floor are dropped.

    Returns ``(-inf, 1.0)`` when fewer than two samples survive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > floor) & np.isfinite(y)
    if keep.sum() < 2:
        return -np.inf, 1.0
    design = np.stack([np.ones(keep.sum()), np.log(x[keep])], axis=1)
    fit = least_squares(design, np.log(y[keep]))
    return float(fit.coeffs[1]), fit.r2


def richardson_pair(coarse, fine, order: int) -> np.ndarray:
    """One elimination step for a method of the given order with halved step."""
    factor = 2.0**order
    return (factor * np.asarray(fine) - np.asarray(coarse)) / (factor - 1.0)
