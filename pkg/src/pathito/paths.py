"""Grids and discrete paths on [-T, 0].

A path in the space of functions continuous on [-T, 0[ with a possible jump
at 0 is stored as a ``(past, present)`` pair: ``past`` holds samples at the
nodes ``x_0 .. x_M`` where the last entry is the left limit at ``0-``, and
``present`` is the value at 0 itself.  All arrays may carry leading batch
axes, which is how windows of many simulated trajectories are handled at
once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal

import numpy as np

from .errors import AlignmentError, DomainError

ExtensionMode = Literal["constant-left", "zero"]
EXTENSION_MODES = ("constant-left", "zero")

DEFAULT_SEGMENTS = 1024

_ALIGN_RTOL = 1e-9


def _readonly(a):
    a = np.asarray(a, dtype=float)
    if a.flags.writeable:
        a = a.view()
        a.flags.writeable = False
    return a


def grid_index(value: float, origin: float, step: float) -> int:
    """Integer ``k`` with ``origin + k * step == value``, or raise AlignmentError."""
    ratio = (value - origin) / step
    k = round(ratio)
    if abs(ratio - k) > _ALIGN_RTOL * max(1.0, abs(ratio)):
        raise AlignmentError(f"{value!r} is not on the grid {origin!r} + k*{step!r}")
    return int(k)


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``end - T + j*step``, ``j = 0..segments``."""

    horizon: float
    segments: int = DEFAULT_SEGMENTS
    end: float = 0.0

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")
        if int(self.segments) != self.segments or self.segments < 1:
            raise ValueError(f"segments must be a positive integer, got {self.segments!r}")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "segments", int(self.segments))
        object.__setattr__(self, "end", float(self.end))

    @property
    def step(self) -> float:
        return self.horizon / self.segments

    @property
    def start(self) -> float:
        return self.end - self.horizon

    @property
    def nodes(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.segments + 1)

    def index(self, x: float) -> int:
        k = grid_index(x, self.start, self.step)
        if not 0 <= k <= self.segments:
            raise DomainError(f"{x!r} outside [{self.start}, {self.end}]")
        return k

    def steps_of(self, eps: float) -> int:
        """Number of grid steps in the shift ``eps``."""
        return grid_index(eps, 0.0, self.step)

    def with_segments(self, segments: int) -> "Grid":
        return Grid(self.horizon, segments, self.end)


@dataclass(frozen=True)
class SegmentedPath:
    """A path on [-T, 0] split into past samples and a present value.

    ``past[..., M]`` is the left limit at ``0-``; ``present`` is the value at
    0.  The two agree for continuous paths.  ``extension_mode`` decides what
    a past shift reads below ``-T``: the value at ``-T`` (``constant-left``)
    or zero.
    """

    grid: Grid
    past: np.ndarray
    present: np.ndarray | float
    extension_mode: ExtensionMode = "constant-left"

    def __post_init__(self):
        past = _readonly(self.past)
        present = np.asarray(self.present, dtype=float)
        if past.shape[-1:] != (self.grid.segments + 1,):
            raise ValueError(
                f"past must have {self.grid.segments + 1} samples on its last axis, got shape {past.shape}"
            )
        if present.shape != past.shape[:-1]:
            raise ValueError(f"present shape {present.shape} does not match batch shape {past.shape[:-1]}")
        if self.extension_mode not in EXTENSION_MODES:
            raise ValueError(f"unknown extension mode {self.extension_mode!r}")
        object.__setattr__(self, "past", past)
        object.__setattr__(self, "present", _readonly(present) if present.ndim else float(present))

    @classmethod
    def from_values(cls, grid: Grid, values, extension_mode: ExtensionMode = "constant-left") -> "SegmentedPath":
        """Continuous path from node samples; the present is the last sample."""
        values = np.asarray(values, dtype=float)
        return cls(grid, values, values[..., -1], extension_mode)

    @classmethod
    def from_function(
        cls,
        grid: Grid,
        func: Callable[[np.ndarray], np.ndarray],
        present: float | None = None,
        extension_mode: ExtensionMode = "constant-left",
    ) -> "SegmentedPath":
        past = np.asarray(func(grid.nodes), dtype=float) * np.ones(grid.segments + 1)
        return cls(grid, past, past[-1] if present is None else present, extension_mode)

    @property
    def batch_shape(self) -> tuple:
        return self.past.shape[:-1]

    @property
    def left_limit(self):
        return self.past[..., -1]

    def values(self) -> np.ndarray:
        """Node samples with the present value at ``x = 0``."""
        out = np.array(self.past)
        out[..., -1] = self.present
        return out

    def is_continuous(self) -> bool:
        return bool(np.all(self.past[..., -1] == self.present))

    def with_mode(self, extension_mode: ExtensionMode) -> "SegmentedPath":
        return SegmentedPath(self.grid, self.past, self.present, extension_mode)

    def __getitem__(self, i) -> "SegmentedPath":
        """Select batch members."""
        present = np.asarray(self.present)[i]
        return SegmentedPath(self.grid, self.past[i], present, self.extension_mode)


def shift_past(path: SegmentedPath, eps: float) -> SegmentedPath:
    """Translate the past to the right by ``eps``, keeping the present.

    Returns the path ``x -> past(x - eps)`` on [-T, 0[, with ``past`` below
    ``-T`` read according to ``path.extension_mode``.
    """
    k = path.grid.steps_of(eps)
    if k < 0:
        raise DomainError("shift must be non-negative")
    if k == 0:
        return path
    past = path.past
    n = past.shape[-1]
    k = min(k, n)
    fill = past[..., :1] if path.extension_mode == "constant-left" else np.zeros_like(past[..., :1])
    head = np.broadcast_to(fill, past.shape[:-1] + (k,))
    shifted = np.concatenate([head, past[..., : n - k]], axis=-1)
    return SegmentedPath(path.grid, shifted, path.present, path.extension_mode)


def bump_present(path: SegmentedPath, h: float) -> SegmentedPath:
    """Move the present value by ``h``; the past is left untouched."""
    return SegmentedPath(path.grid, path.past, np.asarray(path.present) + h, path.extension_mode)


@dataclass(frozen=True)
class RealLineExtension:
    """Extension of a sampled function on [a, b] to the real line.

    ``mode="J"`` is zero right of ``b`` and ``f(a)`` left of ``a``;
    ``mode="Jbar"`` is ``f(b)`` right of ``b`` and zero left of ``a``.
    Inside [a, b] the samples are interpolated linearly.
    """

    nodes: np.ndarray
    samples: np.ndarray
    mode: Literal["J", "Jbar"]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.nodes[0], self.nodes[-1]
        inside = np.interp(x, self.nodes, self.samples)
        if self.mode == "J":
            out = np.where(x > b, 0.0, np.where(x < a, self.samples[0], inside))
        else:
            out = np.where(x > b, self.samples[-1], np.where(x < a, 0.0, inside))
        return out if out.ndim else float(out)


def extend(samples, grid: Grid, mode: Literal["J", "Jbar"]) -> RealLineExtension:
    """Extend a function sampled on ``grid`` to all of R."""
    if mode not in ("J", "Jbar"):
        raise ValueError(f"mode must be 'J' or 'Jbar', got {mode!r}")
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (grid.segments + 1,):
        raise ValueError("samples must cover every grid node")
    return RealLineExtension(grid.nodes, _readonly(samples), mode)


@dataclass(frozen=True)
class Trajectory:
    """Samples of a process on the global grid ``start - T .. end``.

    ``values[..., j]`` is ``X`` at ``start - T + j*step``; the first ``M + 1``
    samples are the initial window.  ``increments`` are the Brownian
    increments driving each step (absent for deterministic paths).
    Leading batch axes are allowed.
    """

    start: float
    grid: Grid
    values: np.ndarray
    increments: np.ndarray | None = None

    def __post_init__(self):
        values = _readonly(self.values)
        if values.shape[-1] < self.grid.segments + 1:
            raise ValueError("trajectory shorter than one window")
        object.__setattr__(self, "values", values)
        if self.increments is not None:
            inc = _readonly(self.increments)
            if inc.shape[-1] != self.n_steps:
                raise ValueError("one increment per time step is required")
            object.__setattr__(self, "increments", inc)

    @property
    def step(self) -> float:
        return self.grid.step

    @property
    def n_steps(self) -> int:
        return self.values.shape[-1] - self.grid.segments - 1

    @property
    def end(self) -> float:
        return self.start + self.n_steps * self.step

    @property
    def times(self) -> np.ndarray:
        """Grid times ``start .. end`` at which windows can be taken."""
        return self.start + self.step * np.arange(self.n_steps + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.start - self.grid.horizon + self.step * np.arange(self.values.shape[-1])

    def step_index(self, s: float) -> int:
        k = grid_index(s, self.start, self.step)
        if not 0 <= k <= self.n_steps:
            raise DomainError(f"time {s!r} outside [{self.start}, {self.end}]")
        return k

    def window(self, k: int) -> SegmentedPath:
        """Window at the ``k``-th time step (a view, no copy)."""
        m = self.grid.segments
        past = self.values[..., k : k + m + 1]
        return SegmentedPath(self.grid, past, past[..., -1])

    def present(self, k: int) -> np.ndarray:
        return self.values[..., k + self.grid.segments]

    def path_values(self) -> np.ndarray:
        """Samples on ``[start, end]`` only."""
        return self.values[..., self.grid.segments :]

    def __len__(self) -> int:
        return self.values.shape[0] if self.values.ndim > 1 else 1

    def __getitem__(self, i) -> "Trajectory":
        inc = None if self.increments is None else self.increments[i]
        return Trajectory(self.start, self.grid, self.values[i], inc)


def window_at(traj: Trajectory, s: float) -> SegmentedPath:
    """The window ``x -> X_{s+x}``, ``x`` in [-T, 0], at grid time ``s``."""
    return traj.window(traj.step_index(s))


def sup_counterexample(grid: Grid, n: int) -> SegmentedPath:
    """Tent path of height 1 squeezed into [-T/2^n, 0], zero at 0.

    Its sup stays 1 for every ``n`` while it tends to zero uniformly on
    compacts of [-T, 0[ and at 0, so the sup functional is not continuous
    for the topology of compact-uniform plus present-value convergence.
    """
    T = grid.horizon
    x = grid.nodes
    c = 2.0 ** (n + 1) / T
    vals = np.where(
        x <= -T / 2.0**n,
        0.0,
        np.where(x <= -T / 2.0 ** (n + 1), c * x + 2.0, -c * x),
    ) + 0.0
    return SegmentedPath.from_values(grid, vals)


# -- CSV ---------------------------------------------------------------------


def write_path_csv(path: SegmentedPath, target) -> None:
    """Write ``x,value`` rows; a ``0-`` row precedes ``0`` when the path jumps."""
    if path.batch_shape:
        raise ValueError("only single paths can be written")
    nodes = path.grid.nodes
    with _open(target, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value"])
        for x, v in zip(nodes[:-1], path.past[:-1]):
            w.writerow([repr(float(x)), repr(float(v))])
        if path.past[-1] != path.present:
            w.writerow(["0-", repr(float(path.past[-1]))])
        w.writerow([repr(float(nodes[-1])), repr(float(path.present))])


def read_path_csv(source, extension_mode: ExtensionMode = "constant-left") -> SegmentedPath:
    """Read a path written in the ``x,value`` format."""
    xs, vs, left = [], [], None
    with _open(source, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "value"]:
            raise ValueError("path CSV must start with the header 'x,value'")
        for row in reader:
            if not row:
                continue
            key, val = row[0].strip(), float(row[1])
            if key == "0-":
                left = val
            else:
                xs.append(float(key))
                vs.append(val)
    if len(xs) < 2:
        raise ValueError("path CSV needs at least two nodes")
    xs, vs = np.array(xs), np.array(vs)
    if xs[-1] != 0.0:
        raise ValueError("final row must be x = 0")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("rows must be sorted ascending in x")
    grid = Grid(-xs[0], len(xs) - 1)
    if not np.allclose(xs, grid.nodes, rtol=0, atol=1e-9 * grid.horizon):
        raise AlignmentError("path CSV nodes are not uniformly spaced")
    past = vs.copy()
    if left is not None:
        past[-1] = left
    return SegmentedPath(grid, past, vs[-1], extension_mode)


def write_trajectory_csv(traj: Trajectory, target) -> None:
    """Write ``s,value`` rows over the whole global grid of one path."""
    with _open(target, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "value"])
        for s, v in zip(traj.nodes, traj.values):
            w.writerow([repr(float(s)), repr(float(v))])


def read_curve_csv(source) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column numeric CSV (``s,value`` or ``x,value``)."""
    with _open(source, "r") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    arr = np.array(rows).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def write_curve_csv(xs: Iterable[float], ys: Iterable[float], target, header=("s", "value")) -> None:
    with _open(target, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for x, y in zip(xs, ys):
            w.writerow([repr(float(x)), repr(float(y))])


class _open:
    """Accept a filename, a Path or an open text handle."""

    def __init__(self, target, mode):
        self.target, self.mode, self.fh = target, mode, None

    def __enter__(self):
        if isinstance(self.target, (str, Path)):
            self.fh = open(self.target, self.mode, newline="")
            return self.fh
        return self.target

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()
