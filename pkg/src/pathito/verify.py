"""Pathwise checks of the functional Itô formula.

Along each trajectory the value ``u(t_k, window_k)`` is compared with::

    u(t_0, window_0)
      + sum (d_t u + D^H u) dt
      + sum D^V u dX
      + 1/2 sum D^VV u d[X]

with left-point sums.  ``d[X]`` is the realized increment ``(dX)^2`` by
default, or ``sigma^2 dt`` (the bracket of the driving diffusion) on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnsupportedCandidateError
from .functionals import HOOKS, PathFunctional
from .paths import Grid, Trajectory
from .sde import path_generator


@dataclass(frozen=True)
class ItoReport:
    """Both sides of the Itô identity on every path and grid time.

    Arrays have shape ``(P, n + 1)``; ``residual = lhs - rhs``.
    """

    times: np.ndarray
    lhs: np.ndarray
    initial: np.ndarray
    time_horizontal: np.ndarray
    forward: np.ndarray
    quadratic: np.ndarray

    @property
    def rhs(self) -> np.ndarray:
        return self.initial[..., None] + self.time_horizontal + self.forward + 0.5 * self.quadratic

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def max_residual(self) -> np.ndarray:
        """Per-path sup over time of the absolute residual."""
        return np.max(np.abs(self.residual), axis=-1)

    def summary(self) -> dict:
        m = self.max_residual
        return {
            "paths": int(m.size),
            "max_residual": float(np.max(m)),
            "rms_max_residual": float(np.sqrt(np.mean(m**2))),
            "steps": int(self.times.size - 1),
        }


def _need_hooks(u: PathFunctional):
    missing = [h for h in HOOKS if not u.has_hook(h)]
    if missing:
        raise UnsupportedCandidateError(f"{u.name} lacks hooks: {', '.join(missing)}")


def _batch(v, shape):
    return np.broadcast_to(np.asarray(v, dtype=float), shape)


def ito_residual(
    u: PathFunctional,
    X: Trajectory,
    qv: str = "realized",
    diffusion: Callable | None = None,
) -> ItoReport:
    """Build both sides of the functional Itô identity along ``X``.

    Args:
        u: functional with all four derivative hooks.
        X: batched trajectory (paths on the first axis).
        qv: ``"realized"`` for ``(dX)^2`` or ``"bracket"`` for
            ``diffusion(t, window)^2 * dt``.
        diffusion: required for the bracket form.
    """
    _need_hooks(u)
    if qv not in ("realized", "bracket"):
        raise ValueError(f"unknown qv form {qv!r}")
    if qv == "bracket" and diffusion is None:
        raise ValueError("the bracket form needs the diffusion coefficient")
    vals = X.values if X.values.ndim > 1 else X.values[None, :]
    X = Trajectory(X.start, X.grid, vals, None)
    n, dt = X.n_steps, X.step
    shape = vals.shape[:-1]
    xs = X.path_values()
    dx = np.diff(xs, axis=-1)
    lhs = np.empty(shape + (n + 1,))
    th = np.zeros(shape + (n + 1,))
    fw = np.zeros(shape + (n + 1,))
    qq = np.zeros(shape + (n + 1,))
    for k in range(n + 1):
        t = X.start + k * dt
        w = X.window(k)
        lhs[..., k] = _batch(u.value(t, w), shape)
        if k == n:
            break
        a = _batch(u.time_derivative(t, w), shape) + _batch(u.horizontal(t, w), shape)
        dv = _batch(u.vertical(t, w), shape)
        dvv = _batch(u.vertical2(t, w), shape)
        if qv == "realized":
            d2 = dx[..., k] ** 2
        else:
            d2 = _batch(diffusion(t, w), shape) ** 2 * dt
        th[..., k + 1] = th[..., k] + a * dt
        fw[..., k + 1] = fw[..., k] + dv * dx[..., k]
        qq[..., k + 1] = qq[..., k] + dvv * d2
    return ItoReport(X.times, lhs, lhs[..., 0].copy(), th, fw, qq)


def classical_ito_residual(F, F_t, F_x, F_xx, times: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Classical Itô residual for ``F(t, X_t)`` with realized quadratic variation.

    Works directly on the sampled values ``xs`` (paths on the first axis),
    with no window or functional machinery.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    p, n1 = xs.shape
    out = np.zeros((p, n1))
    for i in range(p):
        acc_t = acc_f = acc_q = 0.0
        x0 = xs[i, 0]
        f0 = float(F(times[0], x0))
        for k in range(1, n1):
            s, x = times[k - 1], xs[i, k - 1]
            d = xs[i, k] - x
            acc_t += float(F_t(s, x)) * (times[k] - s)
            acc_f += float(F_x(s, x)) * d
            acc_q += float(F_xx(s, x)) * d * d
            out[i, k] = float(F(times[k], xs[i, k])) - (f0 + acc_t + acc_f + 0.5 * acc_q)
    return out


def realized_qv(X: Trajectory) -> np.ndarray:
    """Running sum of squared increments from the start, shape ``(..., n + 1)``."""
    xs = X.path_values()
    out = np.zeros(xs.shape)
    np.cumsum(np.diff(xs, axis=-1) ** 2, axis=-1, out=out[..., 1:])
    return out


# -- convergence studies --------------------------------------------------------------


def nested_brownian(paths: int, seed: int, horizon: float, finest: int, x0: float = 0.0, sigma: float = 1.0):
    """Factory ``segments -> Trajectory`` of one Brownian sample family.

    Coarser grids sum the finest increments, so every level sees the same
    underlying paths.  The history before the start is constant ``x0``.
    """
    dw = np.empty((paths, finest))
    sd = math.sqrt(horizon / finest)
    for i in range(paths):
        dw[i] = path_generator(seed, i).standard_normal(finest) * sd

    def make(segments: int) -> Trajectory:
        if finest % segments:
            raise ValueError("segments must divide the finest resolution")
        r = finest // segments
        inc = sigma * dw.reshape(paths, segments, r).sum(axis=-1)
        grid = Grid(horizon, segments)
        vals = np.empty((paths, 2 * segments + 1))
        vals[:, : segments + 1] = x0
        vals[:, segments + 1 :] = x0 + np.cumsum(inc, axis=-1)
        return Trajectory(0.0, grid, vals, inc)

    return make


def deterministic_path(func: Callable, horizon: float):
    """Factory ``segments -> Trajectory`` sampling ``func`` on [-T, T]."""

    def make(segments: int) -> Trajectory:
        grid = Grid(horizon, segments)
        s = -horizon + grid.step * np.arange(2 * segments + 1)
        return Trajectory(0.0, grid, np.asarray(func(s), dtype=float)[None, :])

    return make


@dataclass(frozen=True)
class ConvergenceTable:
    steps: tuple
    residuals: tuple
    slope: float

    def to_dict(self) -> dict:
        return {"steps": list(self.steps), "residuals": list(self.residuals), "slope": self.slope}


def convergence_study(
    u: PathFunctional,
    make_trajectory: Callable[[int], Trajectory],
    base_segments: int,
    doublings: int = 3,
    qv: str = "realized",
    diffusion: Callable | None = None,
) -> ConvergenceTable:
    """RMS over paths of the sup residual for ``doublings`` successive grid refinements.

    The slope is a least-squares fit of log residual against log step.
    """
    if doublings < 3:
        raise ValueError("at least three grid levels are needed")
    steps, res = [], []
    for j in range(doublings):
        X = make_trajectory(base_segments * 2**j)
        rep = ito_residual(u, X, qv, diffusion)
        steps.append(X.step)
        res.append(float(np.sqrt(np.mean(rep.max_residual**2))))
    if min(res) <= 0.0:
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(steps), np.log(res), 1)[0])
    return ConvergenceTable(tuple(steps), tuple(res), slope)
