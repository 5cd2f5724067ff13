from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import erfc

# |u| below e^-TAIL counts as outside the essential support
TAIL = 40.0


def gaussian_integral(a, b, c0):
    """int_R exp(-a y^2 + b y + c0) dy for Re a > 0."""
    return np.sqrt(np.pi / a) * np.exp(b * b / (4.0 * a) + c0)


def half_line_gaussian(a, b, c0, lower: float):
    """int_lower^inf exp(-a y^2 + b y + c0) dy for Re a > 0."""
    root = np.sqrt(a)
    return 0.5 * gaussian_integral(a, b, c0) * erfc(root * (lower - b / (2.0 * a)))


class SampledFunction(ABC):
    """Real-line data u(y) read by the transform quadratures."""

    breakpoints: Tuple[float, ...] = ()

    @abstractmethod
    def __call__(self, y: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def support(self) -> Tuple[float, float]: ...

    def transform(self, z, h: float) -> Optional[np.ndarray]:
        """Closed-form T u(z), when one is known."""
        return None


@dataclass(frozen=True)
class FunctionData(SampledFunction):
    fn: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float
    breakpoints: Tuple[float, ...] = ()

    def __call__(self, y):
        return self.fn(np.asarray(y))

    def support(self):
        return self.lo, self.hi


@dataclass(frozen=True)
class GridData(SampledFunction):
    """Samples on a uniform grid."""

    y: np.ndarray
    values: np.ndarray
    breakpoints: Tuple[float, ...] = ()

    @property
    def spacing(self) -> float:
        return float(self.y[1] - self.y[0])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.interp(y, self.y, self.values.real) + 1j * np.interp(y, self.y, self.values.imag)

    def support(self):
        return float(self.y[0]), float(self.y[-1])


@dataclass(frozen=True)
class Jump(SampledFunction):
    """Heaviside jump at x_k, times an optional Gaussian window, optionally erfc-mollified."""

    x_k: float = 0.0
    window: Optional[float] = 2.0
    edge: Optional[float] = None

    @property
    def breakpoints(self):
        return (self.x_k,) if self.edge is None else ()

    def _envelope(self, y):
        if self.window is None:
            return np.ones_like(y, dtype=float)
        return np.exp(-((y - self.x_k) ** 2) / (2.0 * self.window**2))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.edge is None:
            step = np.where(y >= self.x_k, 1.0, 0.0)
        else:
            step = 0.5 * erfc((self.x_k - y) / self.edge)
        return (step * self._envelope(y)).astype(complex)

    def support(self):
        if self.window is None:
            lo = self.x_k if self.edge is None else self.x_k - self.edge * np.sqrt(TAIL)
            return lo, np.inf
        reach = self.window * np.sqrt(2.0 * TAIL)
        lo = self.x_k if self.edge is None else self.x_k - reach
        return lo, self.x_k + reach

    def transform(self, z, h):
        if self.edge is not None:
            return None
        z = np.asarray(z, dtype=complex)
        inv = 0.0 if self.window is None else 1.0 / self.window**2
        a = 1.0 / (2.0 * h) + 0.5 * inv
        b = z / h + self.x_k * inv
        c0 = -(z * z) / (2.0 * h) - 0.5 * self.x_k**2 * inv
        return half_line_gaussian(a, b, c0, self.x_k)


@dataclass(frozen=True)
class Kink(SampledFunction):
    """|y - x_k| times a Gaussian window."""

    x_k: float = 0.0
    window: Optional[float] = 2.0

    @property
    def breakpoints(self):
        return (self.x_k,)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        envelope = 1.0 if self.window is None else np.exp(-((y - self.x_k) ** 2) / (2.0 * self.window**2))
        return (np.abs(y - self.x_k) * envelope).astype(complex)

    def support(self):
        if self.window is None:
            return -np.inf, np.inf
        reach = self.window * np.sqrt(2.0 * TAIL)
        return self.x_k - reach, self.x_k + reach


@dataclass(frozen=True)
class Packet(SampledFunction):
    """A exp(-(y - c)^2 / 2w + i k y) with complex width w (Re 1/w > 0)."""

    center: float
    k: float
    width: complex
    amplitude: complex = 1.0
    breakpoints: Tuple[float, ...] = field(default=())

    @classmethod
    def coherent(cls, center: float, xi_c: float, h: float, width: Optional[float] = None) -> "Packet":
        """Carrier frequency xi_c/h; the variance defaults to h."""
        return cls(center=center, k=xi_c / h, width=complex(h if width is None else width))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.amplitude * np.exp(-((y - self.center) ** 2) / (2.0 * self.width) + 1j * self.k * y)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        return (-(y - self.center) / self.width + 1j * self.k) * self(y)

    def support(self):
        spread = 1.0 / np.sqrt((1.0 / self.width).real)
        reach = spread * np.sqrt(2.0 * TAIL)
        return self.center - reach, self.center + reach

    def _exponent(self, z, h):
        a = 1.0 / (2.0 * h) + 1.0 / (2.0 * self.width)
        b = z / h + self.center / self.width + 1j * self.k
        c0 = -(z * z) / (2.0 * h) - self.center**2 / (2.0 * self.width)
        return a, b, c0

    def transform(self, z, h):
        z = np.asarray(z, dtype=complex)
        return self.amplitude * gaussian_integral(*self._exponent(z, h))

    def transform_derivative(self, z, h: float, order: int) -> np.ndarray:
        """d_z^order T u(z) for order 0, 1, 2."""
        z = np.asarray(z, dtype=complex)
        a, b, _ = self._exponent(z, h)
        value = self.transform(z, h)
        g1 = b / (2.0 * a * h) - z / h
        if order == 0:
            return value
        if order == 1:
            return g1 * value
        if order == 2:
            g2 = 1.0 / (2.0 * a * h * h) - 1.0 / h
            return (g1 * g1 + g2) * value
        raise ValueError(f"unsupported derivative order {order}")

    def evolve(self, tau: float) -> "Packet":
        """exp(-i tau H0) with H0 = -d^2/2."""
        w = self.width + 1j * tau
        return Packet(
            center=self.center + self.k * tau,
            k=self.k,
            width=w,
            amplitude=self.amplitude * np.sqrt(self.width / w) * np.exp(-0.5j * self.k**2 * tau),
        )


@dataclass(frozen=True)
class FBIField:
    """T u on a z grid for every h of a ladder; values[i, j] is at (h_ladder[i], z[j])."""

    z: np.ndarray
    h_ladder: np.ndarray
    values: np.ndarray

    @property
    def phi0(self) -> np.ndarray:
        return 0.5 * self.z.imag**2

    def log_weighted(self) -> np.ndarray:
        """ln |value| - Phi0(z)/h, -inf where the value vanishes."""
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.values)) - self.phi0[None, :] / self.h_ladder[:, None]

    def weighted(self) -> np.ndarray:
        return np.exp(self.log_weighted())


class DecayEstimate(BaseModel):
    """Fitted exponential rate delta(z) of the weighted transform."""

    z: List[complex]
    delta: List[float]
    r2: List[float]
    power: List[float] = Field(description="Fitted h-power of the prefactor (0 for the plain model)")
    model: str
    threshold: Optional[float] = None


class ResidualReport(BaseModel):
    """Weighted residual per ladder point and its ln-vs-1/h slope."""

    name: str
    h_ladder: List[float]
    residuals: List[float]
    slope: float
    r2: float
    exponential: bool = Field(description="True when the fitted slope is negative")
    details: dict = Field(default_factory=dict)
