"""Candidate solutions of path-dependent Kolmogorov equations.

A problem bundles path-dependent coefficients ``b``, ``sigma``, a driver
``F(t, path, y, z)`` and a terminal functional ``H``.  When the data only
depend on finitely many weighted statistics of the path, a cylindrical pack
describes the reduced finite-dimensional problem and, where known, the
closed-form reduced solution.

The residual evaluated here is::

    d_t u + D^H u + b D^V u + 1/2 sigma^2 D^VV u + F(t, path, u, sigma D^V u)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bsde import BsdeDriver, RegressionBasis, solve_bsde
from .errors import ConfigError, UnsupportedCandidateError
from .functionals import (
    HOOKS,
    CylindricalFunctional,
    OuterFunction,
    PathFunctional,
    Weight,
    cylindrical_statistic,
    d_horizontal_numeric,
    d_vertical_numeric,
)
from .paths import Grid, SegmentedPath, bump_present, shift_past
from .regcalc import DEFAULT_SCHEDULE, EpsSchedule
from .sde import McConfig, McEstimate, SdeProblem, delay_drift, map_paths, simulate_statistics


def _zero_outer():
    zero = lambda t, x: np.zeros(np.asarray(x).shape[:-1])
    return OuterFunction(zero, zero, lambda t, x: np.zeros_like(x), lambda t, x: np.zeros(x.shape + x.shape[-1:]))


@dataclass(frozen=True)
class CylindricalPack:
    """Reduced data on the statistic vector ``x`` in ``R^N``.

    ``drift(u, x)``, ``diffusion(u, x)`` and ``terminal(x)`` act on
    ``(P, N)`` arrays; ``driver(u, x, y, z)`` too.  ``solution`` is the
    closed-form reduced solution ``Psi`` when one is known.
    """

    weights: tuple
    drift: Callable
    diffusion: Callable
    driver: Callable
    terminal: Callable
    horizon: float = 1.0
    lipschitz: float = 0.0
    solution: OuterFunction | None = None

    @property
    def piecewise(self) -> bool:
        return any(w.piecewise for w in self.weights)

    def statistic_functional(self) -> CylindricalFunctional:
        return CylindricalFunctional(self.solution or _zero_outer(), self.weights, "pack-statistics")

    def statistics(self, t, path):
        return cylindrical_statistic(self.statistic_functional(), t, path)


@dataclass(frozen=True)
class KolmogorovProblem:
    """Path-dependent Kolmogorov data; ``linear`` means F ignores ``(y, z)``."""

    name: str
    drift: Callable
    diffusion: Callable
    driver: Callable
    terminal: Callable
    horizon: float = 1.0
    linear: bool = True
    lipschitz: float = 0.0
    pack: CylindricalPack | None = None
    reference: Callable | None = None

    def candidate(self) -> PathFunctional | None:
        """Closed-form candidate when the pack carries a reduced solution."""
        if self.pack is None or self.pack.solution is None:
            return None
        return CylindricalFunctional(self.pack.solution, self.pack.weights, f"{self.name}-closed-form")

    def features(self, t, window):
        """Regression statistics: the pack statistics, or the present value."""
        if self.pack is not None:
            return self.pack.statistics(t, window)
        return np.asarray(window.present)[..., None]

    def sde(self, t: float, path: SegmentedPath) -> SdeProblem:
        return SdeProblem(self.drift, self.diffusion, t, path, terminal=self.horizon)

    def bsde_driver(self) -> BsdeDriver:
        return BsdeDriver(self.driver, self.terminal, self.lipschitz)


def pack_consistency(prob: KolmogorovProblem, t: float, paths: Sequence[SegmentedPath]) -> float:
    """Largest gap between window coefficients and pack coefficients on probes."""
    if prob.pack is None:
        return 0.0
    worst = 0.0
    for p in paths:
        x = prob.pack.statistics(t, p)[None, :]
        for full, red in ((prob.drift, prob.pack.drift), (prob.diffusion, prob.pack.diffusion)):
            worst = max(worst, float(np.max(np.abs(np.asarray(full(t, p)) - np.asarray(red(t, x))))))
    return worst


# -- registry -------------------------------------------------------------------


def _from_pack(name, pack: CylindricalPack, linear=True, reference=None) -> KolmogorovProblem:
    """Window-level problem induced by a pack."""
    T = pack.horizon

    def stats(t, win):
        return pack.statistics(t, win).reshape(-1, len(pack.weights))

    def _shape(v, win):
        v = np.asarray(v, dtype=float)
        return v.reshape(win.batch_shape) if win.batch_shape else float(v.reshape(-1)[0])

    return KolmogorovProblem(
        name,
        lambda t, win: _shape(pack.drift(t, stats(t, win)), win),
        lambda t, win: _shape(pack.diffusion(t, stats(t, win)), win),
        lambda t, win, y, z: _shape(pack.driver(t, stats(t, win), y, z) * np.ones(stats(t, win).shape[0]), win),
        lambda win: _shape(pack.terminal(stats(T, win)), win),
        horizon=T,
        linear=linear,
        lipschitz=pack.lipschitz,
        pack=pack,
        reference=reference,
    )


def _zeros(u, x):
    return np.zeros(np.asarray(x).shape[0])


def _ones(u, x):
    return np.ones(np.asarray(x).shape[0])


def _no_driver(u, x, y, z):
    return np.zeros(np.asarray(x).shape[0])


def heat_problem(horizon: float = 1.0) -> KolmogorovProblem:
    """``b = 0``, ``sigma = 1``, ``H = present^2``; ``u = present^2 + (T - t)``."""
    T = horizon
    psi = OuterFunction(
        lambda t, x: x[..., 0] ** 2 + (T - t),
        lambda t, x: np.full(x.shape[:-1], -1.0),
        lambda t, x: 2.0 * x,
        lambda t, x: np.full(x.shape + (1,), 2.0),
    )
    pack = CylindricalPack((Weight.const(1.0),), _zeros, _ones, _no_driver, lambda x: x[..., 0] ** 2, T, 0.0, psi)
    return _from_pack("heat", pack)


def movavg_problem(horizon: float = 1.0, rate: float = 1.0) -> KolmogorovProblem:
    """Weight ``e^{-rate u}``, ``H = x^2``; ``Psi = x^2 + int_t^T e^{-2 rate u} du``."""
    T = horizon
    w = Weight(
        lambda u: np.exp(-rate * np.asarray(u, dtype=float)),
        lambda u: -rate * np.exp(-rate * np.asarray(u, dtype=float)),
        lambda u: rate * rate * np.exp(-rate * np.asarray(u, dtype=float)),
        -rate,
    )
    tail = lambda t: (math.exp(-2 * rate * t) - math.exp(-2 * rate * T)) / (2 * rate)
    psi = OuterFunction(
        lambda t, x: x[..., 0] ** 2 + tail(t),
        lambda t, x: np.full(x.shape[:-1], -math.exp(-2 * rate * t)),
        lambda t, x: 2.0 * x,
        lambda t, x: np.full(x.shape + (1,), 2.0),
    )
    pack = CylindricalPack((w,), _zeros, _ones, _no_driver, lambda x: x[..., 0] ** 2, T, 0.0, psi)
    return _from_pack("movavg", pack)


def linear_terminal_problem(horizon: float = 1.0) -> KolmogorovProblem:
    """``H = present``, no driver; ``u = present``."""
    T = horizon
    psi = OuterFunction(
        lambda t, x: x[..., 0] + 0.0,
        lambda t, x: np.zeros(x.shape[:-1]),
        lambda t, x: np.ones_like(x),
        lambda t, x: np.zeros(x.shape + (1,)),
    )
    pack = CylindricalPack((Weight.const(1.0),), _zeros, _ones, _no_driver, lambda x: x[..., 0] + 0.0, T, 0.0, psi)
    return _from_pack("linear-terminal", pack)


def semilinear_exp_problem(horizon: float = 1.0, alpha: float = 0.5) -> KolmogorovProblem:
    """Driver ``alpha * y``, ``H = present``; ``u = e^{alpha (T - t)} present``."""
    T = horizon
    psi = OuterFunction(
        lambda t, x: math.exp(alpha * (T - t)) * x[..., 0],
        lambda t, x: -alpha * math.exp(alpha * (T - t)) * x[..., 0],
        lambda t, x: math.exp(alpha * (T - t)) * np.ones_like(x),
        lambda t, x: np.zeros(x.shape + (1,)),
    )
    pack = CylindricalPack(
        (Weight.const(1.0),),
        _zeros,
        _ones,
        lambda u, x, y, z: alpha * np.asarray(y, dtype=float),
        lambda x: x[..., 0] + 0.0,
        T,
        abs(alpha),
        psi,
    )
    return _from_pack("semilinear-exp", pack, linear=False)


def delay_drift_problem(horizon: float = 1.0, lag: float = 0.5, coefficient: float = 1.0) -> KolmogorovProblem:
    """``b = -coefficient * X(t - lag)``, ``sigma = 1``, ``H = present``; no pack.

    The solution is the mean of the delay equation, which the discrete
    scheme reproduces exactly; ``reference`` computes it.
    """
    T = horizon

    def reference(t, path: SegmentedPath) -> float:
        k = int(round(lag / path.grid.step))
        hist = list(path.values())
        n = int(round((T - t) / path.grid.step))
        m = path.grid.segments
        for j in range(n):
            hist.append(hist[m + j] - coefficient * hist[m + j - k] * path.grid.step)
        return float(hist[-1])

    return KolmogorovProblem(
        "delay-drift",
        delay_drift(lag, -coefficient),
        lambda t, win: 1.0,
        lambda t, win, y, z: 0.0,
        lambda win: np.asarray(win.present, dtype=float),
        horizon=T,
        linear=True,
        reference=reference,
    )


PROBLEMS = {
    "heat": heat_problem,
    "movavg": movavg_problem,
    "linear-terminal": linear_terminal_problem,
    "semilinear-exp": semilinear_exp_problem,
    "delay-drift": delay_drift_problem,
}


def make_problem(name: str, horizon: float = 1.0) -> KolmogorovProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; known: {', '.join(sorted(PROBLEMS))}") from None
    return factory(horizon)


# -- Monte Carlo representations -------------------------------------------------------


def _fk_samples(prob: KolmogorovProblem, t: float, path: SegmentedPath, cfg: McConfig) -> np.ndarray:
    sde = prob.sde(t, path)
    n, dt = sde.n_steps, sde.step

    def reducer(tr):
        acc = np.zeros(tr.values.shape[0])
        for k in range(n + 1):
            wgt = 0.5 if k in (0, n) else 1.0
            if n == 0:
                wgt = 0.0
            f = prob.driver(t + k * dt, tr.window(k), 0.0, 0.0)
            acc = acc + wgt * dt * np.asarray(f, dtype=float)
        return acc + np.asarray(prob.terminal(tr.window(n)), dtype=float)

    return map_paths(sde, cfg, reducer)


def feynman_kac_value(prob: KolmogorovProblem, t: float, path: SegmentedPath, cfg: McConfig) -> McEstimate:
    """Mean of ``int_t^T F ds + H`` along simulated windows (trapezoid in time)."""
    if not prob.linear:
        raise UnsupportedCandidateError(f"problem {prob.name!r} has a driver depending on (y, z)")
    return McEstimate.from_samples(_fk_samples(prob, t, path, cfg), cfg.seed)


@dataclass(frozen=True)
class DuhamelResult:
    """Components ``Psi^s(t, x)`` on the s-grid and the assembled ``Psi(t, x)``."""

    times: np.ndarray
    components: list
    terminal: McEstimate
    value: McEstimate

    def to_dict(self) -> dict:
        return {
            "times": [float(s) for s in self.times],
            "components": [c.to_dict() for c in self.components],
            "terminal": self.terminal.to_dict(),
            "value": self.value.to_dict(),
        }


def duhamel_psi(pack: CylindricalPack, t: float, x, step: float, cfg: McConfig) -> DuhamelResult:
    """Superpose ``Psi^s(t, x) = E[F(s, X_s^{t,x})]`` over ``s`` in [t, T].

    The driver is called with ``y = z = 0``; the s-integral is the
    trapezoid rule on the SDE grid.
    """
    sp = simulate_statistics(pack.weights, pack.drift, pack.diffusion, t, x, pack.horizon, step, cfg)
    p, n = sp.values.shape[0], len(sp.times) - 1
    zeros = np.zeros(p)
    fvals = [np.broadcast_to(np.asarray(pack.driver(s, sp.values[:, k], zeros, zeros), dtype=float), (p,)) for k, s in enumerate(sp.times)]
    comps = [McEstimate.from_samples(f, cfg.seed) for f in fvals]
    term = np.broadcast_to(np.asarray(pack.terminal(sp.values[:, -1]), dtype=float), (p,))
    total = term.copy()
    if n:
        for k, f in enumerate(fvals):
            total = total + (0.5 if k in (0, n) else 1.0) * step * f
    return DuhamelResult(sp.times, comps, McEstimate.from_samples(term, cfg.seed), McEstimate.from_samples(total, cfg.seed))


# -- residuals ---------------------------------------------------------------------


def pde_residual(cand: PathFunctional, prob: KolmogorovProblem, t: float, path: SegmentedPath):
    """Pointwise Kolmogorov residual from the candidate's derivative hooks."""
    missing = [h for h in HOOKS if not cand.has_hook(h)]
    if missing:
        raise UnsupportedCandidateError(f"candidate {cand.name!r} lacks: {', '.join(missing)}")
    dt, dh, dv, dvv = cand.derivatives(t, path)
    b = prob.drift(t, path)
    s = prob.diffusion(t, path)
    u = cand.value(t, path)
    f = prob.driver(t, path, u, s * dv)
    r = dt + dh + b * dv + 0.5 * s * s * dvv + f
    return float(r) if np.ndim(r) == 0 else r


class NumericHooks(PathFunctional):
    """Derivative hooks from difference quotients of another functional.

    ``d_t`` is a central difference with the grid step (one-sided at the
    ends of [0, T]); horizontal derivatives are extrapolated over
    ``sched``; vertical ones use central differences in the present.
    """

    def __init__(self, base: PathFunctional, horizon: float, sched: EpsSchedule = DEFAULT_SCHEDULE):
        self.base, self.horizon, self.sched = base, horizon, sched
        self.name = f"numeric({base.name})"

    def value(self, t, path):
        return self.base.value(t, path)

    def time_derivative(self, t, path):
        h = path.grid.step
        lo, hi = max(0.0, t - h), min(self.horizon, t + h)
        return (self.base.value(hi, path) - self.base.value(lo, path)) / (hi - lo)

    def horizontal(self, t, path):
        return d_horizontal_numeric(self.base, t, path, self.sched, compare_modes=False).limit

    def vertical(self, t, path):
        return d_vertical_numeric(self.base, t, path)[0]

    def vertical2(self, t, path):
        return d_vertical_numeric(self.base, t, path)[1]


class MonteCarloCandidate(PathFunctional):
    """Feynman-Kac candidate whose derivatives use common random numbers.

    Every evaluation reuses the seed of ``cfg``, so bumped and shifted
    evaluations share noise paths and their differences have small
    variance.
    """

    def __init__(self, prob: KolmogorovProblem, cfg: McConfig):
        self.prob, self.cfg = prob, cfg
        self.name = f"mc({prob.name})"

    def samples(self, t, path):
        return _fk_samples(self.prob, t, path, self.cfg)

    def value(self, t, path):
        return float(np.mean(self.samples(t, path)))

    def residual_samples(self, t: float, path: SegmentedPath) -> np.ndarray:
        """Per-path residual; its mean estimates the residual at ``(t, path)``."""
        if not self.prob.linear:
            raise UnsupportedCandidateError("Monte Carlo residuals need a driver free of (y, z)")
        d = path.grid.step
        T = self.prob.horizon
        base = self.samples(t, path)
        lo, hi = max(0.0, t - d), min(T, t + d)
        # the later start uses a prefix of each path's noise stream
        dt = (self.samples(hi, path) - self.samples(lo, path)) / (hi - lo)
        s1 = self.samples(t, shift_past(path, d))
        s2 = self.samples(t, shift_past(path, 2 * d))
        dh = 2 * (base - s1) / d - (base - s2) / (2 * d)
        h = 1e-2 * (1.0 + abs(float(path.present)))
        up, dn = self.samples(t, bump_present(path, h)), self.samples(t, bump_present(path, -h))
        dv = (up - dn) / (2 * h)
        dvv = (up - 2 * base + dn) / (h * h)
        b, s = float(self.prob.drift(t, path)), float(self.prob.diffusion(t, path))
        f = float(self.prob.driver(t, path, 0.0, 0.0))
        return dt + dh + b * dv + 0.5 * s * s * dvv + f

    def residual(self, t, path) -> McEstimate:
        return McEstimate.from_samples(self.residual_samples(t, path), self.cfg.seed)


def terminal_gap(cand: PathFunctional, prob: KolmogorovProblem, path: SegmentedPath) -> float:
    return float(abs(cand.value(prob.horizon, path) - prob.terminal(path)))


def uniqueness_check(
    cand: PathFunctional,
    prob: KolmogorovProblem,
    t: float,
    path: SegmentedPath,
    cfg: McConfig,
    basis: RegressionBasis = RegressionBasis(),
    candidate_stderr: float = 0.0,
) -> dict:
    """Compare a candidate value with the BSDE initial value at ``(t, path)``.

    Passes when the gap is below three combined standard errors plus a
    scheme allowance of two time steps.
    """
    u = float(cand.value(t, path))
    sol = solve_bsde(prob.sde(t, path), prob.bsde_driver(), basis, cfg, features=prob.features)
    se = math.hypot(sol.y0.stderr, candidate_stderr)
    tol = 3.0 * se + 2.0 * path.grid.step
    gap = abs(u - sol.y0.value)
    return {
        "candidate": u,
        "y0": sol.y0.to_dict(),
        "gap": gap,
        "tolerance": tol,
        "passed": bool(gap <= tol),
        "diagnostics": sol.diagnostics,
    }
