from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.fft import ifft
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from stages.fbi_quantize.fbi_quantize_model import FBIField, GridData


class PhaseSlice:
    """W~(s, .) frozen at one s, resampled per momentum branch.

    Clipping to [delta0, xi_max] and the complex extension follow PhaseW, so a
    slice can stand in for the phase inside the contour sums.
    """

    def __init__(self, s: float, delta0: float, xi_max: float, branches):
        self.s = float(s)
        self.delta0 = float(delta0)
        self.xi_max = float(xi_max)
        self._splines = [
            (CubicHermiteSpline(xi, W, G), CubicHermiteSpline(xi, G, H), CubicSpline(xi, H))
            for xi, W, G, H in branches
        ]

    def _clip(self, a: np.ndarray) -> np.ndarray:
        lo, hi = self.delta0, self.xi_max
        return np.where(a < 0.0, -np.clip(-a, lo, hi), np.clip(a, lo, hi))

    def _real(self, a):
        a = self._clip(np.asarray(a, dtype=float))
        out = np.zeros((3,) + a.shape)
        for mask, splines in zip((a < 0.0, a >= 0.0), self._splines):
            if np.any(mask):
                for j, spline in enumerate(splines):
                    out[j][mask] = spline(a[mask])
        return out[0], out[1], out[2]

    def hess(self, xi) -> np.ndarray:
        return self._real(xi)[2]

    def Wtilde(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=complex)
        b = zeta.imag
        W, G, H = self._real(zeta.real)
        return W + 1j * b * G - 0.5 * b * b * H

    def grad_tilde(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=complex)
        _, G, H = self._real(zeta.real)
        return G + 1j * zeta.imag * H


@dataclass(frozen=True)
class ContourSpec:
    """Parametrized contours of G0 (sign +1) or G1 (sign -1) around each z.

    In box coordinates (u, q):
        y   = z + sign dW~(s, xi) + <s> u + i q
        eta = xi - q - i (u + sign A q / <s>) / <s>,      xi = -Im z
    so that the flat phase reads Psi - Phi0(z) = -(u + A q/<s>)^2 - q^2/2.
    """

    kind: str
    s: float
    z: np.ndarray
    G: np.ndarray
    A: np.ndarray
    u_cap: np.ndarray
    q_cap: np.ndarray

    @property
    def sign(self) -> float:
        return 1.0 if self.kind == "G0" else -1.0

    @property
    def bracket(self) -> float:
        return float(np.sqrt(1.0 + self.s**2))

    @property
    def xi(self) -> np.ndarray:
        return -self.z.imag

    def points(self, u: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(y, eta) with shape (len(z),) + u.shape for parameters scaled to [-1, 1]."""
        b = self.bracket
        u = self.u_cap[:, None] * np.asarray(u)[None, :]
        q = self.q_cap[:, None] * np.asarray(q)[None, :]
        y = self.z[:, None] + self.sign * self.G[:, None] + b * u + 1j * q
        eta = self.xi[:, None] - q - 1j * (u + self.sign * self.A[:, None] * q / b) / b
        return y, eta

    @property
    def jacobian(self) -> np.ndarray:
        """Oriented dy deta per du dq, times the box scaling."""
        b = self.bracket
        return (1.0 + b**-2 + 1j * self.sign * self.A * b**-2) * b * self.u_cap * self.q_cap


@dataclass(frozen=True)
class EvolvedField(FBIField):
    """An FBIField produced by G0 or G1 at a fixed s."""

    s: float = 0.0
    provenance: str = "multiplier"


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform samples of u0 and their discrete spectrum at frequencies xi = h k."""

    y: np.ndarray
    xi: np.ndarray
    spectrum: np.ndarray
    h: float

    @property
    def spacing(self) -> float:
        return float(self.y[1] - self.y[0])

    def samples(self, multiplier: Optional[np.ndarray] = None) -> GridData:
        spectrum = self.spectrum if multiplier is None else self.spectrum * multiplier
        return GridData(y=self.y, values=ifft(spectrum))


class SaddleReport(BaseModel):
    """Critical point of Psi_{s,z} and its nondegeneracy."""

    s: float
    z: complex
    critical_y: complex
    critical_eta: complex
    gradient_norm: float
    value_gap: float
    eigenvalues: List[float]
    signature: Tuple[int, int] = Field(description="(positive, negative) eigenvalue counts")
    passed: bool


class MarginReport(BaseModel):
    """Sampled inf of (Phi0(z) - Psi) / (u^2 + q^2) on a contour disc of radius r."""

    kind: str
    s: float
    z: complex
    r: float
    samples: int
    delta: float = Field(description="Sampled infimum of the ratio")
    boundary_margin: float = Field(description="min over the rim of Phi0(z) - Psi")
    worst_u: float
    worst_q: float
    closed_form: Optional[float] = Field(None, description="Flat-family value of delta, when known")


class MarginSweep(BaseModel):
    """The margin over an s grid and its uniformity."""

    reports: List[MarginReport]
    mean_delta: float
    mean_boundary: float
    stable: bool


class EvolutionReport(BaseModel):
    """Weighted ih d_s G0 v + (d_s W)(s, hD_z) G0 v, normalized by max weighted |G0 v|."""

    h: float
    s_grid: List[float]
    steps: List[float]
    raw: List[float]
    floor: List[float] = Field(description="Differencing floor estimated by step halving")
    extrapolated: List[float]
    tolerance: float
    passed: bool


class MappingReport(BaseModel):
    """sup weighted |G0 v| on Omega_s(z0, eps2) over sup weighted |v| on Omega_s(Z_s(z0), eps1)."""

    source: complex
    s_grid: List[float]
    ratios: List[float]
    eps1: float
    eps2: float
    max_ratio: float
