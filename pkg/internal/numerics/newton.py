import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from internal.dependencies.errors import NewtonDiverged

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonResult:
    solution: np.ndarray
    residual: float
    iterations: int


class ScalarBatchNewton:
    """Vectorized Newton solver for independent scalar equations F_j(x_j) = target_j.

    ``forward`` maps an array of unknowns to an array of images of the same
    shape and is called once per iteration on the stacked batch
    ``[x, x + step]`` so that the finite-difference slope shares every
    integrator step with the value it differentiates.
    """

    def __init__(
        self,
        forward: Callable[[np.ndarray], np.ndarray],
        tolerance: float = 1e-10,
        max_iter: int = 50,
        step: float = 1e-6,
    ):
        self.forward = forward
        self.tolerance = tolerance
        self.max_iter = max_iter
        self.step = step

    def solve(self, target: np.ndarray, guess: np.ndarray) -> NewtonResult:
        target = np.asarray(target, dtype=float)
        x = np.array(guess, dtype=float, copy=True)
        residual = np.inf
        for iteration in range(1, self.max_iter + 1):
            d = self.step * np.maximum(1.0, np.abs(x))
            images = self.forward(np.concatenate([x, x + d]))
            value, shifted = images[: x.size], images[x.size :]
            error = value - target
            residual = float(np.max(np.abs(error))) if error.size else 0.0
            if residual <= self.tolerance:
                logger.debug(f"Newton converged in {iteration} iterations, residual {residual:.3e}")
                return NewtonResult(solution=x, residual=residual, iterations=iteration)
            slope = (shifted - value) / d
            if not np.all(np.isfinite(slope)) or np.any(slope == 0.0):
                break
            x = x - error / slope
        logger.error(f"Newton failed after {self.max_iter} iterations, residual {residual:.3e}")
        raise NewtonDiverged(
            "Newton iteration did not reach the residual tolerance",
            {"residual": residual, "tolerance": self.tolerance, "max_iter": self.max_iter},
        )


class VectorBatchNewton:
    """Vectorized Newton solver for a batch of independent d-dimensional systems.

    ``forward`` maps unknowns of shape (B, d) to images of the same shape. Each
    iteration makes one call on the stacked batch ``[x, x + d e_1, ..., x + d e_d]``
    and solves the (B, d, d) finite-difference Jacobian systems at once.
    """

    def __init__(
        self,
        forward: Callable[[np.ndarray], np.ndarray],
        tolerance: float = 1e-10,
        max_iter: int = 50,
        step: float = 1e-7,
    ):
        self.forward = forward
        self.tolerance = tolerance
        self.max_iter = max_iter
        self.step = step

    def solve(self, target: np.ndarray, guess: np.ndarray) -> NewtonResult:
        target = np.asarray(target, dtype=float)
        x = np.array(guess, dtype=float, copy=True)
        count, dim = x.shape
        residual = np.inf
        for iteration in range(1, self.max_iter + 1):
            d = self.step * np.maximum(1.0, np.abs(x))
            shifted = [x] + [x + d[:, k, None] * np.eye(dim)[k] for k in range(dim)]
            images = self.forward(np.concatenate(shifted)).reshape(dim + 1, count, dim)
            error = images[0] - target
            residual = float(np.max(np.abs(error))) if error.size else 0.0
            if residual <= self.tolerance:
                logger.debug(f"Newton converged in {iteration} iterations, residual {residual:.3e}")
                return NewtonResult(solution=x, residual=residual, iterations=iteration)
            jacobian = np.stack([(images[k + 1] - images[0]) / d[:, k, None] for k in range(dim)], axis=-1)
            if not np.all(np.isfinite(jacobian)):
                break
            try:
                x = x - np.linalg.solve(jacobian, error[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
        logger.error(f"Newton failed after {self.max_iter} iterations, residual {residual:.3e}")
        raise NewtonDiverged(
            "Newton iteration did not reach the residual tolerance",
            {"residual": residual, "tolerance": self.tolerance, "max_iter": self.max_iter},
        )
