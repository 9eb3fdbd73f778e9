import math

import numpy as np

from pathito.paths import Grid, SegmentedPath
from pathito.sde import path_generator


def brownian(seed: int, segments: int, horizon: float = 1.0, sigma: float = 1.0) -> np.ndarray:
    """Brownian samples on ``segments + 1`` nodes, starting at 0."""
    dw = path_generator(seed, 0).standard_normal(segments) * math.sqrt(horizon / segments)
    return np.concatenate([[0.0], np.cumsum(sigma * dw)])


def smooth_path(grid: Grid, rng: np.random.Generator, pinned: bool = False) -> SegmentedPath:
    """Random trigonometric path; ``pinned`` forces zero at the left end."""
    a0, a1, a2 = rng.normal(size=3)
    w1, w2 = rng.uniform(0.5, 3.0, size=2)
    c = rng.uniform(0, 2 * math.pi)

    def f(x):
        return a0 + a1 * np.sin(w1 * x + c) + 0.5 * a2 * np.cos(w2 * x)

    x0 = -grid.horizon
    shift = f(np.array([x0]))[0] if pinned else 0.0
    return SegmentedPath.from_function(grid, lambda x: f(x) - shift)
