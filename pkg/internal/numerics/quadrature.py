from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre


@lru_cache(maxsize=64)
def _legendre(m: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(m)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(m: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the m-point rule on [a, b]."""
    nodes, weights = _legendre(int(m))
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def composite_gauss_legendre(breaks: Sequence[float], m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenate m-point rules over consecutive panels [breaks[i], breaks[i+1]]."""
    breaks = np.asarray(breaks, dtype=float)
    nodes, weights = _legendre(int(m))
    half = 0.5 * np.diff(breaks)
    x = breaks[:-1, None] + half[:, None] * (nodes[None, :] + 1.0)
    w = half[:, None] * weights[None, :]
    return x.ravel(), w.ravel()


def panel_breaks(lo: float, hi: float, width: float, extra: Sequence[float] = ()) -> np.ndarray:
    """Uniform panel edges of at most ``width`` on [lo, hi], split at ``extra`` points."""
    count = max(1, int(np.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, count + 1)
    inner = [p for p in extra if lo < p < hi]
    return np.unique(np.concatenate([edges, inner]))


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.empty_like(t)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    a = np.exp(-1.0 / t[mid])
    b = np.exp(-1.0 / (1.0 - t[mid]))
    out[lo] = 0.0
    out[hi] = 1.0
    out[mid] = a / (a + b)
    return out
