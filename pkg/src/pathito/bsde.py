"""Regression Monte Carlo for backward SDEs along simulated forward paths.

The backward sweep runs from the terminal time to the start.  At each step
the conditional expectations are replaced by least-squares projections on
polynomial features of the path statistics::

    Z_k = E[Y_{k+1} dW_k | features_k] / dt
    Y_k = E[Y_{k+1} | features_k] + F(t_k, state_k, Y, Z_k) dt

``Y`` in the driver is the projected value (explicit scheme), or the fixed
point of the implicit equation when the declared Lipschitz constant times
the step exceeds 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np

from .errors import RankDeficiencyError
from .sde import McConfig, McEstimate, SdeProblem, simulate, simulate_statistics

RIDGE = 1e-10
MAX_CONDITION = 1e12
IMPLICIT_THRESHOLD = 0.1
IMPLICIT_ITERATIONS = 5
IMPLICIT_TOL = 1e-10


@dataclass(frozen=True)
class BsdeDriver:
    """Driver ``F(t, state, y, z)`` and terminal ``H(state)``.

    ``lipschitz`` (C) and ``growth`` (m) are declared bounds; C also
    selects the implicit scheme when ``C * dt > 0.1``.
    """

    driver: Callable
    terminal: Callable
    lipschitz: float = 0.0
    growth: float = 1.0


@dataclass(frozen=True)
class RegressionBasis:
    """Monomials of total degree at most ``degree`` in the statistics."""

    degree: int = 2

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be non-negative")

    def exponents(self, n: int) -> list:
        out = [()]
        for d in range(1, self.degree + 1):
            out.extend(combinations_with_replacement(range(n), d))
        return out

    def features(self, x: np.ndarray) -> np.ndarray:
        """Design matrix ``(P, K)``; the first column is the constant."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        cols = []
        for e in self.exponents(x.shape[1]):
            c = np.ones(x.shape[0])
            for i in e:
                c = c * x[:, i]
            cols.append(c)
        return np.stack(cols, axis=1)

    def labels(self, n: int) -> list:
        return ["1" if not e else "*".join(f"x{i + 1}" for i in e) for e in self.exponents(n)]


@dataclass
class Projection:
    """Least-squares projector on a fixed design, reused for several targets."""

    design: np.ndarray
    step: int | None = None
    basis: list | None = None

    def __post_init__(self):
        a = self.design
        p = a.shape[0]
        self.mean = np.mean(a[:, 1:], axis=0)
        self.scale = np.std(a[:, 1:], axis=0)
        # the mean of a constant column is not always bit-exact
        self.scale[self.scale <= 1e-12 * (1.0 + np.abs(self.mean))] = 0.0
        self.degenerate = bool(np.all(self.scale == 0.0))
        self.condition = 1.0
        if self.degenerate or a.shape[1] == 1:
            self.degenerate = True
            return
        if np.any(self.scale == 0.0):
            raise RankDeficiencyError(
                "some features are constant across paths",
                step=self.step,
                condition=float("inf"),
                basis=self.basis,
            )
        s = np.empty_like(a)
        s[:, 0] = 1.0
        s[:, 1:] = (a[:, 1:] - self.mean) / self.scale
        gram = np.einsum("pi,pj->ij", s, s) / p
        self.condition = float(np.linalg.cond(gram))
        if not np.isfinite(self.condition) or self.condition > MAX_CONDITION:
            raise RankDeficiencyError(
                f"normal equations are singular (condition {self.condition:.3g})",
                step=self.step,
                condition=self.condition,
                basis=self.basis,
            )
        self.scaled = s
        self.gram = gram + RIDGE * np.eye(gram.shape[0])

    def fit(self, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fitted values and coefficients in the unscaled monomial basis."""
        if self.degenerate:
            c = np.zeros(self.design.shape[1])
            c[0] = float(np.mean(target))
            return np.full(target.shape, c[0]), c
        rhs = np.einsum("pi,p->i", self.scaled, target) / target.shape[0]
        beta = np.linalg.solve(self.gram, rhs)
        fitted = np.einsum("pi,i->p", self.scaled, beta)
        coef = np.empty_like(beta)
        coef[1:] = beta[1:] / self.scale
        coef[0] = beta[0] - float(np.sum(coef[1:] * self.mean))
        return fitted, coef


@dataclass(frozen=True)
class BsdeSolution:
    """Initial value, per-step regression coefficients and Z diagnostics."""

    y0: McEstimate
    z0: float
    times: np.ndarray
    y_coefficients: list = field(repr=False)
    z_coefficients: list = field(repr=False)
    conditions: list = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"y0": self.y0.to_dict(), "z0": self.z0, "diagnostics": self.diagnostics}


def backward_sweep(
    times: np.ndarray,
    features: Callable[[int], np.ndarray],
    driver: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
    terminal: np.ndarray,
    increments: np.ndarray,
    basis: RegressionBasis,
    lipschitz: float,
    seed: int,
) -> BsdeSolution:
    """Generic regression sweep shared by the window and statistic solvers.

    ``features(k)`` returns the ``(P, N)`` statistics at step ``k`` and
    ``driver(k, y, z)`` the driver values along all paths.
    """
    n = len(times) - 1
    dt = float(times[1] - times[0]) if n else 0.0
    p = terminal.shape[0]
    y = np.asarray(terminal, dtype=float).copy()
    zeta = y.copy()
    implicit = lipschitz * dt > IMPLICIT_THRESHOLD
    y_coefs, z_coefs, conds = [None] * n, [None] * n, [None] * n
    z_energy = np.zeros(p)
    f00_energy = np.zeros(p)
    sup_y2 = y**2
    z0 = 0.0
    for k in range(n - 1, -1, -1):
        stats = np.asarray(features(k), dtype=float).reshape(p, -1)
        design = basis.features(stats)
        proj = Projection(design, step=k, basis=basis.labels(stats.shape[1]))
        yhat, cy = proj.fit(y)
        zfit, cz = proj.fit(y * increments[:, k])
        z = zfit / dt
        if implicit:
            yk = yhat.copy()
            for _ in range(IMPLICIT_ITERATIONS):
                nxt = yhat + np.asarray(driver(k, yk, z), dtype=float) * dt
                done = np.max(np.abs(nxt - yk)) <= IMPLICIT_TOL * (1.0 + np.max(np.abs(nxt)))
                yk = nxt
                if done:
                    break
            fk = (yk - yhat) / dt
        else:
            fk = np.broadcast_to(np.asarray(driver(k, yhat, z), dtype=float), (p,))
            yk = yhat + fk * dt
        zeta = zeta + fk * dt
        z_energy += z**2 * dt
        f00 = np.broadcast_to(np.asarray(driver(k, np.zeros(p), np.zeros(p)), dtype=float), (p,))
        f00_energy += f00**2 * dt
        y = yk
        sup_y2 = np.maximum(sup_y2, y**2)
        y_coefs[k], z_coefs[k], conds[k] = cy, cz / dt, proj.condition
        if k == 0:
            z0 = float(np.mean(z))
    est = McEstimate(float(np.mean(y)), McEstimate.from_samples(zeta, seed).stderr, p, seed)
    zn, sy, ff = float(np.mean(z_energy)), float(np.mean(sup_y2)), float(np.mean(f00_energy))
    diag = {
        "z_energy": zn,
        "sup_y_second_moment": sy,
        "driver_zero_energy": ff,
        "z_bound_ratio": zn / (sy + ff) if sy + ff > 0 else float("inf"),
        "implicit": bool(implicit),
        "max_condition": float(max(conds)) if conds else 1.0,
        "pathwise_mean": float(np.mean(zeta)),
    }
    return BsdeSolution(est, z0, np.asarray(times), y_coefs, z_coefs, conds, diag)


def present_feature(t, window) -> np.ndarray:
    return np.asarray(window.present)[:, None]


def solve_bsde(
    prob: SdeProblem,
    drv: BsdeDriver,
    basis: RegressionBasis,
    cfg: McConfig,
    features: Callable | None = None,
) -> BsdeSolution:
    """Regression solution of the BSDE driven by the window process.

    ``features(t, window)`` gives the ``(P, N)`` regression statistics;
    the default is the present value of the window.
    """
    feat = features or present_feature
    X = simulate(prob, cfg)
    times = prob.times()
    terminal = np.asarray(drv.terminal(X.window(prob.n_steps)), dtype=float)
    terminal = np.broadcast_to(terminal, (cfg.paths,)).copy()

    def features_k(k):
        return np.asarray(feat(times[k], X.window(k)), dtype=float).reshape(cfg.paths, -1)

    def driver_k(k, y, z):
        return drv.driver(times[k], X.window(k), y, z)

    return backward_sweep(times, features_k, driver_k, terminal, X.increments, basis, drv.lipschitz, cfg.seed)


def solve_fbsde_cylindrical(
    pack,
    t: float,
    x=None,
    cfg: McConfig | None = None,
    basis: RegressionBasis = RegressionBasis(),
    path=None,
    step: float | None = None,
) -> BsdeSolution:
    """Forward-backward system on the statistics of a cylindrical pack.

    Either the statistic vector ``x`` or a window ``path`` (from which the
    statistics are computed) must be given.  The step defaults to the
    path grid step when a path is supplied.
    """
    if x is None:
        if path is None:
            raise ValueError("either x or path is required")
        x = pack.statistics(t, path)
    if step is None:
        if path is None:
            raise ValueError("step is required when no path is given")
        step = path.grid.step
    sp = simulate_statistics(pack.weights, pack.drift, pack.diffusion, t, x, pack.horizon, step, cfg)
    terminal = np.asarray(pack.terminal(sp.values[:, -1]), dtype=float)
    terminal = np.broadcast_to(terminal, (cfg.paths,)).copy()

    def features_k(k):
        return sp.values[:, k]

    def driver_k(k, y, z):
        return pack.driver(sp.times[k], sp.values[:, k], y, z)

    return backward_sweep(sp.times, features_k, driver_k, terminal, sp.increments, basis, pack.lipschitz, cfg.seed)
