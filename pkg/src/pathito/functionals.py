"""Path functionals and their horizontal and vertical derivatives.

A functional is evaluated as ``u(t, path)`` where the path carries its past
and its present separately.  Derivative hooks are optional: concrete
classes override ``time_derivative``, ``horizontal``, ``vertical`` and
``vertical2`` when closed forms exist.  The numeric operators in this module
work for any functional.

Functionals accept batched paths wherever their closed forms allow it, which
is what the pathwise Itô checks rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AlignmentError, DomainError, UnsupportedCandidateError
from .paths import Grid, SegmentedPath, bump_present, grid_index, shift_past
from .regcalc import (
    DEFAULT_SCHEDULE,
    EpsSchedule,
    RegIntegralResult,
    backward_integral,
    qv_measure_integral,
    richardson,
    is_convergent,
    _result,
)

HOOKS = ("time_derivative", "horizontal", "vertical", "vertical2")


def trapezoid_past(past: np.ndarray, step: float) -> np.ndarray:
    """Trapezoid integral over the last axis of node samples."""
    return step * (np.sum(past, axis=-1) - 0.5 * (past[..., 0] + past[..., -1]))


def _below(path: SegmentedPath):
    """Value the shift reads left of -T."""
    return path.past[..., 0] if path.extension_mode == "constant-left" else 0.0


class PathFunctional:
    """Base class: ``value(t, path)`` plus optional derivative hooks."""

    name = "functional"

    def value(self, t: float, path: SegmentedPath):
        raise NotImplementedError

    def __call__(self, t: float, path: SegmentedPath):
        return self.value(t, path)

    def time_derivative(self, t, path):
        raise UnsupportedCandidateError(f"{self.name} has no analytic time derivative")

    def horizontal(self, t, path):
        raise UnsupportedCandidateError(f"{self.name} has no analytic horizontal derivative")

    def vertical(self, t, path):
        raise UnsupportedCandidateError(f"{self.name} has no analytic vertical derivative")

    def vertical2(self, t, path):
        raise UnsupportedCandidateError(f"{self.name} has no analytic second vertical derivative")

    def has_hook(self, hook: str) -> bool:
        return getattr(type(self), hook) is not getattr(PathFunctional, hook)

    @property
    def has_all_hooks(self) -> bool:
        return all(self.has_hook(h) for h in HOOKS)

    def derivatives(self, t, path) -> tuple:
        """``(d_t, D^H, D^V, D^VV)`` from the analytic hooks."""
        missing = [h for h in HOOKS if not self.has_hook(h)]
        if missing:
            raise UnsupportedCandidateError(f"{self.name} lacks hooks: {', '.join(missing)}")
        return (
            self.time_derivative(t, path),
            self.horizontal(t, path),
            self.vertical(t, path),
            self.vertical2(t, path),
        )


# -- simple families -----------------------------------------------------------


class Markovian(PathFunctional):
    """``u(t, path) = F(t, present)``; blind to the past."""

    name = "markovian"

    def __init__(self, F, F_t, F_x, F_xx, name: str | None = None):
        self.F, self.F_t, self.F_x, self.F_xx = F, F_t, F_x, F_xx
        if name:
            self.name = name

    def value(self, t, path):
        return self.F(t, np.asarray(path.present))

    def time_derivative(self, t, path):
        return self.F_t(t, np.asarray(path.present))

    def horizontal(self, t, path):
        return np.zeros(path.batch_shape) if path.batch_shape else 0.0

    def vertical(self, t, path):
        return self.F_x(t, np.asarray(path.present))

    def vertical2(self, t, path):
        return self.F_xx(t, np.asarray(path.present))


class Constant(PathFunctional):
    name = "constant"

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def _fill(self, path, v):
        return np.full(path.batch_shape, v) if path.batch_shape else v

    def value(self, t, path):
        return self._fill(path, self.c)

    def time_derivative(self, t, path):
        return self._fill(path, 0.0)

    horizontal = vertical = vertical2 = time_derivative


class FrechetTestFunctional(PathFunctional):
    """Functional carrying closed-form Fréchet data.

    Subclasses supply the absolutely continuous first-derivative density
    (sampled on the grid), the density of the non-atomic part of the first
    derivative, the diagonal element of the second derivative and its L2
    kernel.
    """

    def density_ac(self, path: SegmentedPath) -> np.ndarray:
        raise NotImplementedError

    def density_perp(self, path: SegmentedPath) -> np.ndarray:
        return self.density_ac(path)

    def diagonal(self, path: SegmentedPath) -> np.ndarray:
        raise NotImplementedError

    def kernel(self, path: SegmentedPath) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        raise NotImplementedError

    def time_derivative(self, t, path):
        return np.zeros(path.batch_shape) if path.batch_shape else 0.0

    def vertical(self, t, path):
        return self.time_derivative(t, path)

    def vertical2(self, t, path):
        return self.time_derivative(t, path)


class IntegralMean(FrechetTestFunctional):
    """``u(path) = int_{-T}^0 past(x) dx``."""

    name = "integral-mean"

    def value(self, t, path):
        return trapezoid_past(path.past, path.grid.step)

    def horizontal(self, t, path):
        return path.left_limit - _below(path)

    def density_ac(self, path):
        return np.ones(path.grid.segments + 1)

    def diagonal(self, path):
        return np.zeros(path.grid.segments + 1)

    def kernel(self, path):
        return lambda x, y: np.zeros(np.broadcast(x, y).shape)


class SquareIntegral(FrechetTestFunctional):
    """``u(path) = int_{-T}^0 past(x)^2 dx``."""

    name = "square-integral"

    def value(self, t, path):
        return trapezoid_past(path.past**2, path.grid.step)

    def horizontal(self, t, path):
        return path.left_limit**2 - _below(path) ** 2

    def density_ac(self, path):
        return 2.0 * np.asarray(path.past)

    def diagonal(self, path):
        return np.full(path.grid.segments + 1, 2.0)

    def kernel(self, path):
        return lambda x, y: np.zeros(np.broadcast(x, y).shape)


class LinearIntegral(FrechetTestFunctional):
    """``u(path) = int_{-T}^0 weight(x) past(x) dx``; no closed-form D^H."""

    name = "linear-integral"

    def __init__(self, weight: Callable[[np.ndarray], np.ndarray]):
        self.weight = weight

    def value(self, t, path):
        w = np.asarray(self.weight(path.grid.nodes), dtype=float)
        return trapezoid_past(path.past * w, path.grid.step)

    def density_ac(self, path):
        return np.asarray(self.weight(path.grid.nodes), dtype=float) * np.ones(path.grid.segments + 1)

    def diagonal(self, path):
        return np.zeros(path.grid.segments + 1)

    def kernel(self, path):
        return lambda x, y: np.zeros(np.broadcast(x, y).shape)


class SquaredMean(FrechetTestFunctional):
    """``u(path) = (int_{-T}^0 past(x) dx)^2``; the second derivative is a pure kernel."""

    name = "squared-mean"

    def value(self, t, path):
        return trapezoid_past(path.past, path.grid.step) ** 2

    def horizontal(self, t, path):
        mean = trapezoid_past(path.past, path.grid.step)
        return 2.0 * mean * (path.left_limit - _below(path))

    def density_ac(self, path):
        mean = float(trapezoid_past(path.past, path.grid.step))
        return np.full(path.grid.segments + 1, 2.0 * mean)

    def diagonal(self, path):
        return np.zeros(path.grid.segments + 1)

    def kernel(self, path):
        return lambda x, y: np.full(np.broadcast(x, y).shape, 2.0)


# -- cylindrical functionals ---------------------------------------------------


@dataclass(frozen=True)
class Weight:
    """A weight function on [0, T] with its first two derivatives.

    ``dphi0`` is the right derivative at 0.  ``constant`` lets the
    statistic skip the (vanishing) integral term; ``piecewise`` marks
    weights that are only piecewise C2, for which the derivative formulas
    are applied without theoretical cover.
    """

    phi: Callable
    dphi: Callable
    d2phi: Callable
    dphi0: float | None = None
    constant: bool = False
    piecewise: bool = False

    def right_derivative_at_zero(self) -> float:
        return float(self.dphi(0.0)) if self.dphi0 is None else float(self.dphi0)

    @classmethod
    def const(cls, c: float = 1.0) -> "Weight":
        zero = lambda u: np.zeros_like(np.asarray(u, dtype=float))
        return cls(lambda u: c + zero(u), zero, zero, 0.0, constant=True)


@dataclass(frozen=True)
class OuterFunction:
    """``Psi(t, x)`` on ``[0, T] x R^N`` with ``d_t Psi``, gradient and Hessian.

    All callables take ``x`` with shape ``(..., N)``; ``grad`` returns
    ``(..., N)`` and ``hess`` returns ``(..., N, N)``.
    """

    value: Callable
    dt: Callable
    grad: Callable
    hess: Callable


class CylindricalFunctional(PathFunctional):
    """``u(t, path) = Psi(t, x_1, .., x_N)`` with ``x_i`` the weighted statistics."""

    name = "cylindrical"

    def __init__(self, psi: OuterFunction, weights: Sequence[Weight], name: str | None = None):
        if len(weights) < 1:
            raise ValueError("at least one weight is required")
        self.psi = psi
        self.weights = tuple(weights)
        if name:
            self.name = name

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def piecewise(self) -> bool:
        return any(w.piecewise for w in self.weights)

    def statistics(self, t, path):
        return cylindrical_statistic(self, t, path)

    def value(self, t, path):
        return self.psi.value(t, self.statistics(t, path))

    def _brackets(self, t, path, use_present: bool):
        """Per-weight ``eta(0) phi'(t) - eta(-t) phi'(0+) - int eta phi''(x+t) dx``."""
        m, nodes = _stat_window(path.grid, t)
        past = path.past[..., path.grid.segments - m :]
        end = np.asarray(path.present) if use_present else path.left_limit
        out = []
        for w in self.weights:
            if w.constant:
                out.append(np.zeros(path.batch_shape) if path.batch_shape else 0.0)
                continue
            inner = trapezoid_past(past * w.d2phi(nodes + t), path.grid.step) if m else 0.0
            out.append(end * w.dphi(t) - past[..., 0] * w.right_derivative_at_zero() - inner)
        return np.stack(np.broadcast_arrays(*out), axis=-1)

    def time_derivative(self, t, path):
        x = self.statistics(t, path)
        g = self.psi.grad(t, x)
        return self.psi.dt(t, x) + np.sum(g * self._brackets(t, path, True), axis=-1)

    def horizontal(self, t, path):
        x = self.statistics(t, path)
        g = self.psi.grad(t, x)
        return -np.sum(g * self._brackets(t, path, False), axis=-1)

    def vertical(self, t, path):
        x = self.statistics(t, path)
        phis = np.array([float(w.phi(t)) for w in self.weights])
        return np.sum(self.psi.grad(t, x) * phis, axis=-1)

    def vertical2(self, t, path):
        x = self.statistics(t, path)
        phis = np.array([float(w.phi(t)) for w in self.weights])
        return np.sum(self.psi.hess(t, x) * np.multiply.outer(phis, phis), axis=(-2, -1))


def _stat_window(grid: Grid, t: float):
    """Number of steps in ``t`` and the nodes of [-t, 0]."""
    m = grid_index(t, 0.0, grid.step)
    if not 0 <= m <= grid.segments:
        raise DomainError(f"time {t!r} outside [0, {grid.horizon}]")
    nodes = grid.step * np.arange(-m, 1)
    return m, nodes


def cylindrical_statistic(cf: CylindricalFunctional, t: float, path: SegmentedPath) -> np.ndarray:
    """Statistics ``x_i = eta(0) phi_i(t) - int_{-t}^0 eta(x) phi_i'(x + t) dx``.

    Trapezoid rule on the path grid; ``t`` must be a grid multiple.  The
    result has shape ``batch_shape + (N,)``.
    """
    m, nodes = _stat_window(path.grid, t)
    past = path.past[..., path.grid.segments - m :]
    a = np.asarray(path.present)
    out = []
    for w in cf.weights:
        x = a * w.phi(t)
        if m and not w.constant:
            x = x - trapezoid_past(past * w.dphi(nodes + t), path.grid.step)
        out.append(x)
    return np.stack(np.broadcast_arrays(*out), axis=-1)


def d_cylindrical_analytic(cf: CylindricalFunctional, t: float, path: SegmentedPath) -> tuple:
    """``(d_t u, D^H u, D^V u, D^VV u)`` from the closed-form expressions."""
    return cf.derivatives(t, path)


# -- numeric derivatives -------------------------------------------------------


def _horizontal_values(u, t, path, sched):
    base = u.value(t, path)
    return [(base - u.value(t, shift_past(path, e))) / e for e in sched.eps(path.grid)]


def d_horizontal_numeric(
    u: PathFunctional,
    t: float,
    path: SegmentedPath,
    sched: EpsSchedule = DEFAULT_SCHEDULE,
    compare_modes: bool = True,
) -> RegIntegralResult:
    """Difference quotients ``(u(path) - u(shifted path)) / eps`` and their limit.

    With ``compare_modes`` the quotient is also computed under the other
    extension mode; if the two limits differ by more than the
    extrapolation error the second one is attached as ``alternate``.
    """
    res = _result(sched, path.grid, _horizontal_values(u, t, path, sched))
    if not compare_modes:
        return res
    other = "zero" if path.extension_mode == "constant-left" else "constant-left"
    alt = _result(sched, path.grid, _horizontal_values(u, t, path.with_mode(other), sched))
    err = abs(res.limit - res.value) + 1e-12 * (1.0 + abs(res.limit))
    if abs(alt.limit - res.limit) > err:
        return RegIntegralResult(
            res.value,
            res.limit,
            res.per_eps,
            res.eps,
            res.converged,
            {"extension_mode": other, "limit": alt.limit, "per_eps": list(alt.per_eps)},
        )
    return res


def default_vertical_step(path: SegmentedPath) -> float:
    return 1e-4 * (1.0 + abs(float(path.present)))


def d_vertical_numeric(u: PathFunctional, t: float, path: SegmentedPath, h: float | None = None) -> tuple:
    """Central first and second differences in the present value."""
    if h is None:
        h = default_vertical_step(path)
    if not h > 0:
        raise ValueError("vertical step must be positive")
    up = u.value(t, bump_present(path, h))
    mid = u.value(t, path)
    dn = u.value(t, bump_present(path, -h))
    return (up - dn) / (2 * h), (up - 2 * mid + dn) / (h * h)


# -- bridge checks -------------------------------------------------------------


def frechet_bridge_first(tf: FrechetTestFunctional, path: SegmentedPath, sched: EpsSchedule = DEFAULT_SCHEDULE):
    """Horizontal derivative against the backward integral of the Fréchet density.

    Returns ``(lhs, rhs)`` as regularization results.
    """
    lhs = d_horizontal_numeric(tf, 0.0, path, sched)
    rhs = backward_integral(tf.density_ac(path), path, path.grid, sched)
    return lhs, rhs


@dataclass(frozen=True)
class BridgeSecond:
    """Second-order bridge terms, kept apart for diagnostics."""

    lhs: RegIntegralResult
    rhs: RegIntegralResult
    first_order: RegIntegralResult
    qv_term: RegIntegralResult


def frechet_bridge_second(
    tf: FrechetTestFunctional, path: SegmentedPath, sched: EpsSchedule = DEFAULT_SCHEDULE
) -> BridgeSecond:
    """Horizontal derivative against the first-order backward term minus half the
    diagonal integrated against the quadratic variation of the path.

    The right side is combined per eps and then extrapolated; it is flagged
    non-convergent if either ingredient is.
    """
    lhs = d_horizontal_numeric(tf, 0.0, path, sched)
    first = backward_integral(tf.density_perp(path), path, path.grid, sched)
    qv = qv_measure_integral(tf.diagonal(path), path, path.grid, sched)
    vals = [b - 0.5 * q for b, q in zip(first.per_eps, qv.per_eps)]
    rhs = _result(sched, path.grid, vals)
    if not (first.converged and qv.converged and rhs.converged):
        rhs = RegIntegralResult(rhs.value, rhs.limit, rhs.per_eps, rhs.eps, False)
    return BridgeSecond(lhs, rhs, first, qv)


# -- registry ------------------------------------------------------------------


def _const_weight():
    return Weight.const(1.0)


def _exp_weight(rate: float = 1.0) -> Weight:
    return Weight(
        lambda u: np.exp(-rate * np.asarray(u, dtype=float)),
        lambda u: -rate * np.exp(-rate * np.asarray(u, dtype=float)),
        lambda u: rate * rate * np.exp(-rate * np.asarray(u, dtype=float)),
        -rate,
    )


def _quadratic_outer(shift: Callable, dshift: Callable) -> OuterFunction:
    """``Psi(t, x) = x_1^2 + shift(t)``."""
    return OuterFunction(
        value=lambda t, x: x[..., 0] ** 2 + shift(t),
        dt=lambda t, x: np.zeros(x.shape[:-1]) + dshift(t),
        grad=lambda t, x: 2.0 * x,
        hess=lambda t, x: np.full(x.shape + (1,), 2.0),
    )


def heat_functional(horizon: float = 1.0) -> CylindricalFunctional:
    """``u(t, path) = present^2 + (T - t)``."""
    T = horizon
    return CylindricalFunctional(_quadratic_outer(lambda t: T - t, lambda t: -1.0), [_const_weight()], "cyl-heat")


def movavg_functional(horizon: float = 1.0) -> CylindricalFunctional:
    """``u = x^2 + int_t^T e^{-2s} ds`` with weight ``e^{-u}``."""
    T = horizon
    return CylindricalFunctional(
        _quadratic_outer(lambda t: 0.5 * (math.exp(-2 * t) - math.exp(-2 * T)), lambda t: -math.exp(-2 * t)),
        [_exp_weight(1.0)],
        "cyl-movavg",
    )


def mixed_functional(horizon: float = 1.0) -> CylindricalFunctional:
    """Two weights and an outer function with a cross term."""

    def value(t, x):
        return x[..., 0] * x[..., 1] + np.sin(x[..., 0]) + t * x[..., 1] ** 2

    def dt(t, x):
        return x[..., 1] ** 2

    def grad(t, x):
        return np.stack([x[..., 1] + np.cos(x[..., 0]), x[..., 0] + 2 * t * x[..., 1]], axis=-1)

    def hess(t, x):
        h = np.empty(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = -np.sin(x[..., 0])
        h[..., 0, 1] = h[..., 1, 0] = 1.0
        h[..., 1, 1] = 2 * t
        return h

    w2 = Weight(
        lambda u: np.cos(np.asarray(u, dtype=float)),
        lambda u: -np.sin(np.asarray(u, dtype=float)),
        lambda u: -np.cos(np.asarray(u, dtype=float)),
        0.0,
    )
    return CylindricalFunctional(OuterFunction(value, dt, grad, hess), [_exp_weight(0.5), w2], "cyl-mixed")


def markovian_functional(horizon: float = 1.0) -> Markovian:
    """``F(t, x) = e^{-t} sin x + x^2 / 2``."""
    return Markovian(
        lambda t, x: math.exp(-t) * np.sin(x) + 0.5 * x * x,
        lambda t, x: -math.exp(-t) * np.sin(x),
        lambda t, x: math.exp(-t) * np.cos(x) + x,
        lambda t, x: -math.exp(-t) * np.sin(x) + 1.0,
    )


FUNCTIONALS = {
    "markovian": markovian_functional,
    "integral-mean": lambda horizon=1.0: IntegralMean(),
    "square-integral": lambda horizon=1.0: SquareIntegral(),
    "squared-mean": lambda horizon=1.0: SquaredMean(),
    "cyl-heat": heat_functional,
    "cyl-movavg": movavg_functional,
    "cyl-mixed": mixed_functional,
}

CYLINDRICAL = ("cyl-heat", "cyl-movavg", "cyl-mixed")


def make_functional(name: str, horizon: float = 1.0) -> PathFunctional:
    from .errors import ConfigError

    try:
        factory = FUNCTIONALS[name]
    except KeyError:
        raise ConfigError(f"unknown functional {name!r}; known: {', '.join(sorted(FUNCTIONALS))}") from None
    return factory(horizon)
