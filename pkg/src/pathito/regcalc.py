"""Deterministic calculus via regularization on a sampled interval.

Every integral here is computed for a schedule of regularization widths
``eps = k * step`` and then extrapolated to ``eps -> 0``.  For grid-aligned
``eps`` the regularized integrals of piecewise-constant data are finite sums,
so each per-eps value is exact up to the sampling of the inputs.

A point that surprises people: the forward integral over [a, b] carries the
boundary term ``g(a) f(a)`` because the integrand is extended to the left of
``a`` by ``g(a)`` and the integrator by zero.  With ``g = 1`` the forward
integral is therefore ``f(b)``, not ``f(b) - f(a)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DomainError
from .paths import Grid, SegmentedPath, grid_index

# A successive difference may grow by at most this factor before the
# schedule is reported as non-convergent.
GROWTH_FACTOR = 3.0


@dataclass(frozen=True)
class EpsSchedule:
    """Descending regularization widths, stored as multiples of the grid step."""

    multiples: tuple = (8, 4, 2, 1)
    extrapolate: bool = True

    def __post_init__(self):
        m = tuple(int(k) for k in self.multiples)
        if any(int(k) != k for k in self.multiples):
            raise AlignmentError("eps multiples must be integers")
        if len(m) < 2:
            raise ValueError("an eps schedule needs at least two values")
        if any(k < 1 for k in m) or any(a <= b for a, b in zip(m, m[1:])):
            raise ValueError("eps multiples must be positive and strictly decreasing")
        object.__setattr__(self, "multiples", m)

    @classmethod
    def dyadic(cls, levels: int = 4, extrapolate: bool = True) -> "EpsSchedule":
        """``(2^(levels-1), ..., 2, 1)`` grid steps."""
        return cls(tuple(2**i for i in range(levels - 1, -1, -1)), extrapolate)

    @classmethod
    def from_values(cls, eps, grid: Grid, extrapolate: bool = True) -> "EpsSchedule":
        return cls(tuple(grid.steps_of(e) for e in eps), extrapolate)

    @classmethod
    def parse(cls, spec: str) -> "EpsSchedule":
        """Parse ``dyadic:K`` or a comma list of step multiples."""
        spec = spec.strip()
        if spec.startswith("dyadic:"):
            return cls.dyadic(int(spec.split(":", 1)[1]))
        return cls(tuple(int(s) for s in spec.split(",")))

    def eps(self, grid: Grid) -> tuple:
        return tuple(float(k * grid.step) for k in self.multiples)


DEFAULT_SCHEDULE = EpsSchedule()


@dataclass(frozen=True)
class RegIntegralResult:
    """Per-eps values of a regularized quantity and its eps -> 0 limit.

    ``value`` is the value at the smallest eps, ``limit`` the extrapolated
    one (equal to ``value`` when extrapolation is off).  ``alternate`` holds
    a second estimate computed under a different convention, when the
    producer found that the convention matters.
    """

    value: float
    limit: float
    per_eps: tuple
    eps: tuple
    converged: bool = True
    alternate: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "value": float(self.value),
            "limit": float(self.limit),
            "per_eps": [float(v) for v in self.per_eps],
            "eps": [float(e) for e in self.eps],
            "converged": bool(self.converged),
        }
        if self.alternate is not None:
            out["alternate"] = self.alternate
        return out


@dataclass(frozen=True)
class CurveResult:
    """Per-eps curves on the grid nodes plus the extrapolated curve."""

    nodes: np.ndarray
    per_eps: tuple
    eps: tuple
    curve: np.ndarray
    converged: bool = True

    def at(self, x: float) -> float:
        k = grid_index(x, self.nodes[0], self.nodes[1] - self.nodes[0])
        if not 0 <= k < len(self.nodes):
            raise DomainError(f"{x!r} outside the curve's domain")
        return float(self.curve[k])


@dataclass(frozen=True)
class MeasureOnInterval:
    """Finite atoms plus a density sampled on the grid."""

    grid: Grid
    atoms: tuple = ()
    density: np.ndarray | None = None

    def __post_init__(self):
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        for x, _ in atoms:
            if not self.grid.start - 1e-12 <= x <= self.grid.end + 1e-12:
                raise DomainError(f"atom at {x} lies outside [{self.grid.start}, {self.grid.end}]")
        object.__setattr__(self, "atoms", atoms)
        if self.density is not None:
            d = np.asarray(self.density, dtype=float)
            if d.shape != (self.grid.segments + 1,):
                raise AlignmentError("density must be sampled on every grid node")
            object.__setattr__(self, "density", d)

    def total_variation(self) -> float:
        tv = sum(abs(m) for _, m in self.atoms)
        if self.density is not None:
            tv += float(np.sum(np.abs(self.density[:-1]))) * self.grid.step
        return tv


# -- helpers -----------------------------------------------------------------


def richardson(eps, values) -> float:
    """Linear-in-eps extrapolation from the two smallest widths."""
    ea, eb = eps[-2], eps[-1]
    va, vb = values[-2], values[-1]
    return (ea * vb - eb * va) / (ea - eb)


def is_convergent(values, scale: float = 1.0) -> bool:
    """False when a successive difference grows by more than ``GROWTH_FACTOR``."""
    d = np.abs(np.diff(np.asarray(values, dtype=float), axis=0))
    if d.ndim > 1:
        d = d.max(axis=tuple(range(1, d.ndim)))
    atol = 1e-12 * max(1.0, scale)
    return bool(np.all(d[1:] <= GROWTH_FACTOR * d[:-1] + atol))


def _result(sched: EpsSchedule, grid: Grid, values, alternate=None) -> RegIntegralResult:
    eps = sched.eps(grid)
    values = [float(v) for v in values]
    limit = richardson(eps, values) if sched.extrapolate else values[-1]
    scale = max(abs(v) for v in values)
    return RegIntegralResult(values[-1], float(limit), tuple(values), tuple(eps), is_convergent(values, scale), alternate)


def _samples(obj, grid: Grid | None, present: bool) -> tuple[np.ndarray, Grid | None]:
    """Node samples of an array or path; ``present`` picks the value at b."""
    if isinstance(obj, SegmentedPath):
        if grid is not None and obj.grid != grid:
            raise AlignmentError("inputs live on different grids")
        return (obj.values() if present else np.asarray(obj.past)), obj.grid
    return np.asarray(obj, dtype=float), grid


def _common(g, f, grid, present_f: bool):
    g_arr, grid = _samples(g, grid, True)
    f_arr, grid = _samples(f, grid, present_f)
    if grid is None:
        raise ValueError("a grid is required when both inputs are arrays")
    n = grid.segments + 1
    if g_arr.shape != (n,) or f_arr.shape != (n,):
        raise AlignmentError(f"samples must have length {n} to match the grid")
    return g_arr, f_arr, grid


def _jbar_padded(f: np.ndarray, k: int) -> np.ndarray:
    """``f`` on nodes ``-k .. M + k`` with the Jbar extension."""
    return np.concatenate([np.zeros(k), f, np.full(k, f[-1])])


# -- integrals ---------------------------------------------------------------


def forward_integral(g, f, grid: Grid | None = None, sched: EpsSchedule = DEFAULT_SCHEDULE) -> RegIntegralResult:
    """Regularized forward integral of ``g`` against ``f`` on the grid interval.

    For width ``k`` steps the value is
    ``(1/k) * sum_{j=-k}^{M-1} g_J(x_j) (f_Jbar(x_{j+k}) - f_Jbar(x_j))``,
    the exact integral of the left-point step interpolants.
    """
    g, f, grid = _common(g, f, grid, present_f=True)
    m = grid.segments
    vals = []
    for k in sched.multiples:
        fp = _jbar_padded(f, k)
        gj = np.concatenate([np.full(k, g[0]), g[:m]])  # nodes -k .. M-1
        vals.append(np.sum(gj * (fp[k : m + 2 * k] - fp[: m + k])) / k)
    return _result(sched, grid, vals)


def backward_integral(g, f, grid: Grid | None = None, sched: EpsSchedule = DEFAULT_SCHEDULE) -> RegIntegralResult:
    """Regularized backward integral of ``g`` against ``f``.

    For width ``k`` steps the value is
    ``(1/k) * sum_{j=0}^{M-1} g(x_j) (f_Jbar(x_j) - f_Jbar(x_{j-k}))``.
    Only the left limit of ``f`` at ``b`` can enter, so a path's jump at
    the present is invisible here.
    """
    g, f, grid = _common(g, f, grid, present_f=False)
    m = grid.segments
    vals = []
    for k in sched.multiples:
        fp = _jbar_padded(f, k)
        vals.append(np.sum(g[:m] * (fp[k : m + k] - fp[:m])) / k)
    return _result(sched, grid, vals)


def _jbar_at(f: np.ndarray, grid: Grid, x: float) -> float:
    if x > grid.end:
        return float(f[-1])
    if x < grid.start:
        return 0.0
    return float(np.interp(x, grid.nodes, f))


def backward_integral_measure(mu: MeasureOnInterval, f, sched: EpsSchedule = DEFAULT_SCHEDULE) -> RegIntegralResult:
    """Backward integral of a finite measure against ``f`` on [-T, 0].

    Atoms contribute ``mass * (f_Jbar(x) - f_Jbar(x - eps)) / eps``; an
    atom at the right end reads the value of ``f`` at that end.  The
    density part is :func:`backward_integral`.
    """
    grid = mu.grid
    f_arr, _ = _samples(f, grid, present=True)
    if f_arr.shape != (grid.segments + 1,):
        raise AlignmentError("f must be sampled on the measure's grid")
    eps = sched.eps(grid)
    vals = np.zeros(len(eps))
    for i, e in enumerate(eps):
        for x, mass in mu.atoms:
            vals[i] += mass * (_jbar_at(f_arr, grid, x) - _jbar_at(f_arr, grid, x - e)) / e
    if mu.density is not None:
        vals += np.array(backward_integral(mu.density, f, grid, sched).per_eps)
    return _result(sched, grid, vals)


def stieltjes_integral(g, f, grid: Grid | None = None, convention: str = "left") -> float:
    """Lebesgue-Stieltjes sum including the boundary term ``g(a) f(a)``.

    ``convention="left"`` evaluates ``g`` at the left end of each cell
    (the left-limit rule), ``"point"`` at the right end.
    """
    if grid is not None or isinstance(f, SegmentedPath):
        g, f, grid = _common(g, f, grid, present_f=True)
    else:
        g, f = np.asarray(g, dtype=float), np.asarray(f, dtype=float)
    if g.shape != f.shape:
        raise AlignmentError("g and f must have the same number of samples")
    df = np.diff(f)
    if convention == "left":
        ge = g[:-1]
    elif convention == "point":
        ge = g[1:]
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return float(g[0] * f[0] + np.sum(ge * df))


# -- covariation -------------------------------------------------------------


def _increment_products(f: np.ndarray, g: np.ndarray, k: int, m: int) -> np.ndarray:
    fp = np.concatenate([f, np.full(k, f[-1])])
    gp = np.concatenate([g, np.full(k, g[-1])])
    df = fp[k : m + k] - fp[:m]
    dg = gp[k : m + k] - gp[:m]
    # IEEE products commute, so swapping f and g is bit-exact
    return df * dg


def covariation(f, g, grid: Grid | None = None, sched: EpsSchedule = DEFAULT_SCHEDULE) -> CurveResult:
    """Regularized covariation curve ``x -> [f, g](x)`` on the grid nodes.

    The curve is ``(1/eps) * int_0^x`` of the increment product, signed for
    ``x < 0``; zero must be a grid node.
    """
    f, g, grid = _common(f, g, grid, present_f=True)
    m = grid.segments
    origin = grid.index(0.0)
    curves = []
    for k in sched.multiples:
        p = _increment_products(f, g, k, m) / k
        c = np.zeros(m + 1)
        c[origin + 1 :] = np.cumsum(p[origin:])
        c[:origin] = -np.cumsum(p[:origin][::-1])[::-1]
        curves.append(c)
    eps = sched.eps(grid)
    curve = richardson(eps, curves) if sched.extrapolate else curves[-1]
    scale = max(float(np.max(np.abs(c))) for c in curves)
    return CurveResult(grid.nodes, tuple(curves), tuple(eps), curve, is_convergent(curves, scale))


def quadratic_variation(f, grid: Grid | None = None, sched: EpsSchedule = DEFAULT_SCHEDULE) -> CurveResult:
    return covariation(f, f, grid, sched)


def qv_measure_integral(h, f, grid: Grid | None = None, sched: EpsSchedule = DEFAULT_SCHEDULE) -> RegIntegralResult:
    """``int h d[f]`` over the grid interval, with ``h`` read at cell left ends."""
    h, f, grid = _common(h, f, grid, present_f=True)
    m = grid.segments
    vals = [np.sum(h[:m] * _increment_products(f, f, k, m)) / k for k in sched.multiples]
    return _result(sched, grid, vals)
