import numpy as np
from scipy.stats import qmc


def halton_ball(count: int, dim: int, radius: float, norm_groups: int = 1) -> np.ndarray:
    """Deterministic quasi-random points in the l1-of-l2 ball of ``radius``.

    The ``dim`` coordinates are split into ``norm_groups`` equal blocks; a point
    is kept when the sum of the block norms is below ``radius``. Halton points
    are drawn from the enclosing cube until ``count`` survive.
    """
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    kept = []
    total = 0
    while total < count:
        cube = 2.0 * sampler.random(max(4 * count, 64)) - 1.0
        blocks = cube.reshape(len(cube), norm_groups, dim // norm_groups)
        inside = np.sum(np.linalg.norm(blocks, axis=2), axis=1) < 1.0
        kept.append(cube[inside])
        total += int(inside.sum())
    return radius * np.concatenate(kept)[:count]


def sphere_shell(count: int, dim: int, radius: float, norm_groups: int = 1) -> np.ndarray:
    """Halton points pushed onto the boundary of the same ball."""
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    cube = 2.0 * sampler.random(count) - 1.0
    blocks = cube.reshape(count, norm_groups, dim // norm_groups)
    scale = np.sum(np.linalg.norm(blocks, axis=2), axis=1)
    scale[scale == 0.0] = 1.0
    return radius * cube / scale[:, None]
