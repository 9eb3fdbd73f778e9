"""Euler-Maruyama simulation of path-dependent SDEs.

Coefficients are functions of ``(t, window)`` where the window is the batch
of the last ``M + 1`` samples of every path.  The SDE step equals the path
grid step, so windows are exact slices of the simulated array.

Each path draws its Brownian increments from its own counter-based stream
keyed by ``(seed, path index)``, and paths are processed in chunks of a
fixed size.  Results are therefore bit-identical whatever the number of
worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AlignmentError, SimulationError
from .paths import Grid, SegmentedPath, Trajectory, grid_index

CHUNK = 1024

Coefficient = Callable[[float, SegmentedPath], "np.ndarray | float"]


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings; the noise of path ``i`` depends only on ``(seed, i)``."""

    paths: int
    seed: int
    workers: int = 1
    chunk: int = CHUNK

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValueError("paths must be a positive integer")
        if self.workers < 1 or self.chunk < 1:
            raise ValueError("workers and chunk must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def chunks(self):
        return [(lo, min(lo + self.chunk, self.paths)) for lo in range(0, self.paths, self.chunk)]


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error."""

    value: float
    stderr: float
    paths: int
    seed: int

    @classmethod
    def from_samples(cls, samples, seed: int) -> "McEstimate":
        s = np.asarray(samples, dtype=float)
        n = s.size
        err = float(np.std(s, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(s)), err, n, int(seed))

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "paths": self.paths, "seed": self.seed}


@dataclass(frozen=True)
class SdeProblem:
    """Path-dependent SDE started at ``start`` from the window ``initial``.

    The terminal time defaults to the window horizon.  ``lipschitz`` and
    ``growth`` are the declared constants of the coefficients; they are
    only reported.
    """

    drift: Coefficient
    diffusion: Coefficient
    start: float
    initial: SegmentedPath
    lipschitz: float = 1.0
    growth: float = 1.0
    terminal: float | None = None

    def __post_init__(self):
        if self.lipschitz <= 0 or self.growth <= 0:
            raise ValueError("declared constants must be positive")
        if self.initial.batch_shape:
            raise ValueError("the initial window must be a single path")
        end = self.grid.horizon if self.terminal is None else self.terminal
        if end < self.start:
            raise ValueError("terminal time precedes the start")
        object.__setattr__(self, "terminal", float(end))
        self.n_steps  # alignment check

    @property
    def grid(self) -> Grid:
        return self.initial.grid

    @property
    def step(self) -> float:
        return self.grid.step

    @property
    def n_steps(self) -> int:
        return grid_index(self.terminal - self.start, 0.0, self.step)

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.n_steps + 1)

    def history(self) -> np.ndarray:
        """Samples of the initial window with the present at 0."""
        return self.initial.values()


# -- noise ----------------------------------------------------------------------


def path_generator(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one path."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))


def noise_block(seed: int, lo: int, hi: int, n: int, step: float) -> np.ndarray:
    """Brownian increments for paths ``lo .. hi - 1``, shape ``(hi - lo, n)``."""
    out = np.empty((hi - lo, n))
    sd = math.sqrt(step)
    for r, i in enumerate(range(lo, hi)):
        out[r] = path_generator(seed, i).standard_normal(n)
    out *= sd
    return out


# -- simulation -------------------------------------------------------------------


def _as_batch(v, n: int, what: str, t: float, lo: int, k: int) -> np.ndarray:
    v = np.broadcast_to(np.asarray(v, dtype=float), (n,))
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise SimulationError(f"non-finite {what} at t={t} on path {lo + bad}", path_index=lo + bad, step=k)
    return v


def _simulate_chunk(prob: SdeProblem, seed: int, lo: int, hi: int) -> Trajectory:
    grid, n = prob.grid, prob.n_steps
    m = grid.segments
    p = hi - lo
    dw = noise_block(seed, lo, hi, n, prob.step)
    x = np.empty((p, m + n + 1))
    x[:, : m + 1] = prob.history()
    for k in range(n):
        t = prob.start + k * prob.step
        past = x[:, k : k + m + 1]
        win = SegmentedPath(grid, past, past[:, -1])
        b = _as_batch(prob.drift(t, win), p, "drift", t, lo, k)
        s = _as_batch(prob.diffusion(t, win), p, "diffusion", t, lo, k)
        x[:, k + m + 1] = x[:, k + m] + b * prob.step + s * dw[:, k]
    return Trajectory(prob.start, grid, x, dw)


def _run_chunks(fn, cfg: McConfig):
    chunks = cfg.chunks()
    if cfg.workers == 1 or len(chunks) == 1:
        return [fn(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def map_paths(prob: SdeProblem, cfg: McConfig, reducer: Callable[[Trajectory], np.ndarray]) -> np.ndarray:
    """Simulate chunk by chunk and keep only ``reducer(chunk)`` per path."""
    parts = _run_chunks(lambda lo, hi: np.asarray(reducer(_simulate_chunk(prob, cfg.seed, lo, hi))), cfg)
    return np.concatenate(parts, axis=0)


def simulate(prob: SdeProblem, cfg: McConfig) -> Trajectory:
    """All ``cfg.paths`` trajectories as one batched :class:`Trajectory`."""
    parts = _run_chunks(lambda lo, hi: _simulate_chunk(prob, cfg.seed, lo, hi), cfg)
    values = np.concatenate([p.values for p in parts], axis=0)
    incs = np.concatenate([p.increments for p in parts], axis=0)
    return Trajectory(prob.start, prob.grid, values, incs)


def delay_drift(lag: float, coefficient: float = -1.0) -> Coefficient:
    """Drift ``coefficient * X(t - lag)`` read from the window."""

    def drift(t, win):
        k = grid_index(lag, 0.0, win.grid.step)
        if not 0 <= k <= win.grid.segments:
            raise AlignmentError("lag exceeds the window horizon")
        return coefficient * win.past[..., win.grid.segments - k]

    return drift


def constant(c: float) -> Coefficient:
    return lambda t, win: c


def present_linear(c: float) -> Coefficient:
    """Coefficient ``c * X(t)``."""
    return lambda t, win: c * np.asarray(win.present)


# -- pathwise quantities ------------------------------------------------------------


def ito_integral(phi: Callable, X: Trajectory, t: float | None = None, r: float | None = None):
    """Left-point sum of ``phi(s_k) (X_{s_{k+1}} - X_{s_k})`` over [t, r]."""
    k0 = 0 if t is None else X.step_index(t)
    k1 = X.n_steps if r is None else X.step_index(r)
    s = X.times[k0:k1]
    xv = X.path_values()
    dx = xv[..., k0 + 1 : k1 + 1] - xv[..., k0:k1]
    return np.sum(np.asarray(phi(s), dtype=float) * dx, axis=-1)


def ito_integral_curve(phi: Callable, X: Trajectory) -> np.ndarray:
    """Running left-point sums at every grid time, starting at 0."""
    xv = X.path_values()
    dx = np.diff(xv, axis=-1)
    inc = np.asarray(phi(X.times[:-1]), dtype=float) * dx
    out = np.zeros(xv.shape)
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def check_statistic_evolution(cf, X: Trajectory, stride: int = 1) -> dict:
    """Compare each statistic at ``(r, window at r)`` with its value at the start
    plus the Itô sum of the weight over [start, r].

    Returns per-path maximal gaps and the gap curve at the checked times.
    """
    from .functionals import cylindrical_statistic

    ks = np.arange(0, X.n_steps + 1, stride)
    if ks[-1] != X.n_steps:
        ks = np.append(ks, X.n_steps)
    x0 = cylindrical_statistic(cf, X.start, X.window(0))
    curves = [ito_integral_curve(w.phi, X) for w in cf.weights]
    gaps = np.empty(X.values.shape[:-1] + (len(ks),))
    for j, k in enumerate(ks):
        t = X.start + k * X.step
        lhs = cylindrical_statistic(cf, t, X.window(k))
        rhs = x0 + np.stack([c[..., k] for c in curves], axis=-1)
        gaps[..., j] = np.max(np.abs(lhs - rhs), axis=-1)
    return {"times": X.start + ks * X.step, "gaps": gaps, "max_gap": gaps.max(axis=-1)}


def sup_moment(X: Trajectory, p: float) -> np.ndarray:
    """``sup |X|^p`` over the whole stored trajectory, per path."""
    return np.max(np.abs(X.values), axis=-1) ** p


def moment_ratios(make_problem: Callable[[float], SdeProblem], scales: Sequence[float], powers: Sequence[float], cfg: McConfig) -> dict:
    """Estimate ``E[sup |X|^p] / (1 + ||eta||^p)`` for each initial scaling.

    Returns ``{p: [ratio per scale]}`` plus the spread ``max / min`` per ``p``.
    """
    out = {"scales": list(scales), "ratios": {}, "spread": {}}
    for p in powers:
        out["ratios"][p] = []
    for c in scales:
        prob = make_problem(c)
        norm = float(np.max(np.abs(prob.history())))
        sups = map_paths(prob, cfg, lambda tr: np.max(np.abs(tr.values), axis=-1))
        for p in powers:
            out["ratios"][p].append(float(np.mean(sups**p)) / (1.0 + norm**p))
    for p in powers:
        r = out["ratios"][p]
        out["spread"][p] = max(r) / min(r)
    return out


# -- statistics SDE -----------------------------------------------------------------


@dataclass(frozen=True)
class StatisticPaths:
    """Euler paths of the finite-dimensional statistic process.

    ``values`` has shape ``(P, n + 1, N)``; ``increments`` are the Brownian
    increments, identical to the ones a window simulation with the same
    seed would use.
    """

    times: np.ndarray
    values: np.ndarray
    increments: np.ndarray


def simulate_statistics(
    weights,
    drift: Callable,
    diffusion: Callable,
    start: float,
    x0,
    terminal: float,
    step: float,
    cfg: McConfig,
) -> StatisticPaths:
    """Euler scheme for ``dX = phi(u) b(u, X) du + phi(u) s(u, X) dW``.

    ``drift`` and ``diffusion`` map ``(u, X)`` with ``X`` of shape
    ``(P, N)`` to ``(P,)``.
    """
    n = grid_index(terminal - start, 0.0, step)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (len(weights),):
        raise ValueError("initial statistic must have one entry per weight")

    def chunk(lo, hi):
        p = hi - lo
        dw = noise_block(cfg.seed, lo, hi, n, step)
        x = np.empty((p, n + 1, x0.size))
        x[:, 0] = x0
        for k in range(n):
            u = start + k * step
            phi = np.array([float(w.phi(u)) for w in weights])
            cur = x[:, k]
            b = _as_batch(drift(u, cur), p, "drift", u, lo, k)
            s = _as_batch(diffusion(u, cur), p, "diffusion", u, lo, k)
            x[:, k + 1] = cur + phi * (b * step)[:, None] + phi * (s * dw[:, k])[:, None]
        return x, dw

    parts = _run_chunks(chunk, cfg)
    times = start + step * np.arange(n + 1)
    return StatisticPaths(times, np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts]))
