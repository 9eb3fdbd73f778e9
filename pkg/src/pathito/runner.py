"""Pipelines behind each CLI subcommand.

Every pipeline fills a :class:`RunReport` with results, curves and
pass/fail checks whose tolerances are written next to the verdict.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bsde import RegressionBasis, solve_bsde
from .config import ExperimentConfig
from .errors import ConfigError
from .functionals import (
    FrechetTestFunctional,
    d_horizontal_numeric,
    d_vertical_numeric,
    frechet_bridge_first,
    frechet_bridge_second,
    make_functional,
)
from .kolmogorov import (
    MonteCarloCandidate,
    feynman_kac_value,
    make_problem,
    pde_residual,
    terminal_gap,
    uniqueness_check,
)
from .paths import Grid, SegmentedPath, read_path_csv, window_at
from .regcalc import (
    EpsSchedule,
    MeasureOnInterval,
    backward_integral,
    backward_integral_measure,
    forward_integral,
    quadratic_variation,
    stieltjes_integral,
)
from .report import RunReport
from .sde import McConfig, McEstimate, map_paths, path_generator, simulate
from .verify import convergence_study, ito_residual

# residual tolerances for closed-form candidates
RESIDUAL_TOL = {"heat": 1e-8, "linear-terminal": 1e-8, "semilinear-exp": 1e-8}
DEFAULT_RESIDUAL_TOL = 1e-6


# -- inputs ---------------------------------------------------------------------


def _floats(s: str) -> list:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {s!r}") from None


def sample_input(spec: str, nodes: np.ndarray, seed: int | None) -> np.ndarray:
    """Samples of a built-in function on ``nodes``.

    ``const:c``, ``poly:c0,c1,..`` (coefficients of powers of x),
    ``sin:a,w`` (a sin(w x)), ``exp:r`` (e^{r x}), ``step:x0,jump`` and
    ``brownian[:sigma]`` (starts at 0 on the first node; needs a seed).
    """
    kind, _, arg = spec.partition(":")
    x = np.asarray(nodes, dtype=float)
    if kind == "const":
        return np.full(x.shape, _floats(arg or "0")[0])
    if kind == "poly":
        return np.polynomial.polynomial.polyval(x, _floats(arg))
    if kind == "sin":
        a, w = (_floats(arg) + [1.0, 1.0])[:2]
        return a * np.sin(w * x)
    if kind == "exp":
        return np.exp(_floats(arg or "1")[0] * x)
    if kind == "step":
        x0, j = _floats(arg)
        return np.where(x >= x0, j, 0.0)
    if kind == "brownian":
        if seed is None:
            raise ConfigError("brownian inputs need --seed")
        sigma = _floats(arg)[0] if arg else 1.0
        dw = path_generator(seed, 0).standard_normal(x.size - 1) * math.sqrt(x[1] - x[0])
        return np.concatenate([[0.0], np.cumsum(sigma * dw)])
    raise ConfigError(f"unknown input {spec!r}")


def input_sigma(spec: str) -> float | None:
    """Diffusion scale of a Brownian spec, None for smooth inputs."""
    kind, _, arg = spec.partition(":")
    if kind != "brownian":
        return None
    return _floats(arg)[0] if arg else 1.0


def load_path(cfg: ExperimentConfig, default: str = "poly:1,1") -> SegmentedPath:
    spec = cfg.path or default
    if spec.endswith(".csv") or Path(spec).is_file():
        try:
            return read_path_csv(spec)
        except OSError as exc:
            raise ConfigError(f"cannot read path {spec}: {exc}") from None
    grid = Grid(cfg.horizon, cfg.segments)
    return SegmentedPath.from_values(grid, sample_input(spec, grid.nodes, cfg.seed))


def interval_grid(cfg: ExperimentConfig) -> Grid:
    a, b = _floats(cfg.interval)
    if not b > a:
        raise ConfigError("interval must be a,b with a < b")
    return Grid(b - a, cfg.segments, end=b)


def mc(cfg: ExperimentConfig) -> McConfig:
    return McConfig(cfg.paths, cfg.seed, cfg.workers, cfg.chunk)


def schedule(cfg: ExperimentConfig) -> EpsSchedule:
    try:
        return EpsSchedule.parse(cfg.eps)
    except ValueError as exc:
        raise ConfigError(f"bad eps schedule {cfg.eps!r}: {exc}") from None


# -- pipelines ------------------------------------------------------------------------


def run_integrate(cfg, rep: RunReport):
    grid = interval_grid(cfg)
    sched = schedule(cfg)
    f = sample_input(cfg.f, grid.nodes, cfg.seed)
    if cfg.mode == "measure":
        atoms = []
        for item in filter(None, cfg.atoms.split(",")):
            loc, _, mass = item.partition(":")
            atoms.append((float(loc), float(mass or 1.0)))
        dens = None if cfg.g in (None, "none") else sample_input(cfg.g, grid.nodes, cfg.seed)
        res = backward_integral_measure(MeasureOnInterval(grid, atoms, dens), f, sched)
        oracle = None
    else:
        g = sample_input(cfg.g or "const:1", grid.nodes, cfg.seed)
        if cfg.mode == "forward":
            res = forward_integral(g, f, grid, sched)
            oracle = stieltjes_integral(g, f, grid, "left")
        elif cfg.mode == "backward":
            res = backward_integral(g, f, grid, sched)
            oracle = stieltjes_integral(g, f, grid, "point")
        else:
            raise ConfigError(f"unknown integration mode {cfg.mode!r}")
    rep.add(f"{cfg.mode}_integral", res)
    if oracle is not None:
        rep.add("stieltjes_oracle", {"value": oracle})
    rep.check("eps_schedule_converged", 0.0 if res.converged else 1.0, 0.0, "successive differences grow at most 3x")
    if cfg.expect is not None:
        tol = cfg.tol if cfg.tol is not None else 5 * grid.step
        rep.check("integral_vs_expected", abs(res.limit - cfg.expect), tol)


def run_qv(cfg, rep: RunReport):
    grid = interval_grid(cfg)
    f = sample_input(cfg.f, grid.nodes, cfg.seed)
    qv = quadratic_variation(f, grid, schedule(cfg))
    rep.curve("qv", qv.nodes, qv.curve, ("x", "value"))
    rep.add("quadratic_variation", {"end": float(qv.curve[-1]), "start": float(qv.curve[0]), "converged": qv.converged})
    sigma = input_sigma(cfg.f)
    if sigma is None:
        rep.check("smooth_qv_max_abs", float(np.max(np.abs(qv.curve))), 1e-3)
    else:
        # probe at fixed fractions of the span; near the start the sampling
        # noise of the running sum alone exceeds the tolerance
        a = grid.nodes[0]
        probes = [a + q * grid.horizon for q in (0.25, 0.5, 1.0)]
        rel = [abs(qv.at(s) - sigma**2 * (s - a)) / (sigma**2 * (s - a)) for s in probes]
        rep.check("brownian_qv_max_relative_error", float(max(rel)), 0.05)


def run_deriv(cfg, rep: RunReport):
    u = make_functional(cfg.functional, cfg.horizon)
    path = load_path(cfg)
    which = cfg.which
    if which not in ("h", "v", "vv", "all"):
        raise ConfigError("--which must be h, v, vv or all")
    out = {}
    if which in ("h", "all"):
        res = d_horizontal_numeric(u, cfg.t, path, schedule(cfg))
        out["horizontal_numeric"] = res.to_dict()
        if u.has_hook("horizontal"):
            an = float(u.horizontal(cfg.t, path))
            out["horizontal_analytic"] = an
            rep.check("horizontal_relative_gap", abs(res.limit - an) / (1 + abs(an)), 1e-3)
    if which in ("v", "vv", "all"):
        first, second = d_vertical_numeric(u, cfg.t, path)
        out["vertical_numeric"] = float(first)
        out["vertical2_numeric"] = float(second)
        if u.has_hook("vertical") and which != "vv":
            an = float(u.vertical(cfg.t, path))
            out["vertical_analytic"] = an
            rep.check("vertical_relative_gap", abs(first - an) / (1 + abs(an)), 1e-6)
        if u.has_hook("vertical2") and which != "v":
            an = float(u.vertical2(cfg.t, path))
            out["vertical2_analytic"] = an
            rep.check("vertical2_relative_gap", abs(second - an) / (1 + abs(an)), 1e-4)
    rep.add(f"derivatives_{cfg.functional}", out)


def run_simulate(cfg, rep: RunReport):
    prob = make_problem(cfg.problem, cfg.horizon)
    path = load_path(cfg, "const:0")
    sde = prob.sde(cfg.t, path)
    X = simulate(sde, mc(cfg))
    init = window_at(X, cfg.t)
    same = bool(np.array_equal(init.past, np.broadcast_to(path.values(), init.past.shape)))
    rep.check("initial_window_reproduced", 0.0 if same else 1.0, 0.0, "exact equality")
    xt = X.values[:, -1]
    sup = np.max(np.abs(X.values), axis=-1)
    rep.add("terminal_mean", McEstimate.from_samples(xt, cfg.seed))
    rep.add("terminal_second_moment", McEstimate.from_samples(xt**2, cfg.seed))
    rep.add("sup_moment_2", McEstimate.from_samples(sup**2, cfg.seed))
    rep.add("sup_moment_4", McEstimate.from_samples(sup**4, cfg.seed))
    for i in range(min(cfg.dump, cfg.paths)):
        rep.curve(f"trajectory_{i}", X.nodes, X.values[i])


def run_solve_bsde(cfg, rep: RunReport):
    prob = make_problem(cfg.problem, cfg.horizon)
    path = load_path(cfg, "const:0")
    sol = solve_bsde(prob.sde(cfg.t, path), prob.bsde_driver(), RegressionBasis(cfg.basis_degree), mc(cfg), prob.features)
    rep.add("bsde", sol)
    cand = prob.candidate()
    if cand is not None:
        u = float(cand.value(cfg.t, path))
        rep.add("candidate", {"value": u})
        rep.check("bsde_vs_candidate", abs(u - sol.y0.value), 3 * sol.y0.stderr + 2 * path.grid.step, "gap <= 3 stderr + 2 dt")


def run_solve_kolmogorov(cfg, rep: RunReport):
    prob = make_problem(cfg.problem, cfg.horizon)
    path = load_path(cfg, "const:0")
    cand = prob.candidate()
    if cfg.method == "closed-form":
        if cand is None:
            raise ConfigError(f"problem {prob.name!r} has no closed form")
        r = pde_residual(cand, prob, cfg.t, path)
        tol = RESIDUAL_TOL.get(prob.name, DEFAULT_RESIDUAL_TOL)
        rep.add("value", {"value": float(cand.value(cfg.t, path))})
        rep.add("pde_residual", {"value": r})
        rep.check("pde_residual", abs(r), tol)
        rep.check("terminal_consistency", terminal_gap(cand, prob, path), 1e-10)
    elif cfg.method == "feynman-kac":
        est = feynman_kac_value(prob, cfg.t, path, mc(cfg))
        rep.add("feynman_kac", est)
        ref = float(cand.value(cfg.t, path)) if cand is not None else None
        if ref is None and prob.reference is not None:
            ref = prob.reference(cfg.t, path)
        if ref is not None:
            rep.add("reference", {"value": ref})
            rep.check("feynman_kac_vs_reference", abs(est.value - ref), 3 * est.stderr + 2 * path.grid.step, "gap <= 3 stderr + 2 dt")
    elif cfg.method == "bsde":
        if cand is None:
            sol = solve_bsde(prob.sde(cfg.t, path), prob.bsde_driver(), RegressionBasis(cfg.basis_degree), mc(cfg), prob.features)
            rep.add("bsde", sol)
        else:
            res = uniqueness_check(cand, prob, cfg.t, path, mc(cfg), RegressionBasis(cfg.basis_degree))
            rep.add("uniqueness", res)
            rep.check("candidate_vs_bsde", res["gap"], res["tolerance"], "gap <= 3 stderr + 2 dt")
    elif cfg.method == "mc-residual":
        est = MonteCarloCandidate(prob, mc(cfg)).residual(cfg.t, path)
        rep.add("mc_residual", est)
        tol = 3 * est.stderr + 2 * path.grid.step
        rep.check("mc_residual_near_zero", abs(est.value), tol, "|residual| <= 3 stderr + 2 dt")
    else:
        raise ConfigError(f"unknown method {cfg.method!r}")


def run_verify_ito(cfg, rep: RunReport):
    u = make_functional(cfg.functional, cfg.horizon)
    prob = make_problem(cfg.problem, cfg.horizon)
    path = load_path(cfg, "const:0")

    def traj(segments):
        p = path if segments == path.grid.segments else SegmentedPath.from_values(
            Grid(cfg.horizon, segments), np.interp(Grid(cfg.horizon, segments).nodes, path.grid.nodes, path.values())
        )
        return simulate(prob.sde(0.0, p), mc(cfg))

    X = traj(cfg.segments)
    rep_ito = ito_residual(u, X, cfg.qv, prob.diffusion)
    m = rep_ito.max_residual
    bound = 10 * math.sqrt(X.step)
    rep.add("ito", rep_ito.summary())
    rep.check("fraction_paths_within_10_sqrt_dt", float(np.mean(m <= bound)), 0.95, "value >= tolerance", bool(np.mean(m <= bound) >= 0.95))
    rep.curve("residual_mean_abs", X.times, np.mean(np.abs(rep_ito.residual), axis=0))
    rep.curve("residual_path0", X.times, rep_ito.residual[0])
    if cfg.doublings >= 3:
        base = cfg.segments // 2 ** (cfg.doublings - 1)
        if base < 1:
            raise ConfigError("too many doublings for the grid")
        table = convergence_study(u, traj, base, cfg.doublings, cfg.qv, prob.diffusion)
        rep.add("convergence", table)
        if max(table.residuals) <= 1e-10:
            rep.check("residual_identically_small", max(table.residuals), 1e-10)
        elif cfg.qv == "bracket":
            rep.check("convergence_slope", abs(table.slope - 0.5), 0.2, "|slope - 0.5| <= tolerance")
        else:
            rep.check("convergence_slope_positive", table.slope, 0.3, "value >= tolerance", table.slope >= 0.3)


def run_verify_bridge(cfg, rep: RunReport):
    u = make_functional(cfg.functional, cfg.horizon)
    if not isinstance(u, FrechetTestFunctional):
        raise ConfigError(f"{cfg.functional!r} carries no Fréchet data")
    path = load_path(cfg)
    sched = schedule(cfg)
    if cfg.order == 1:
        lhs, rhs = frechet_bridge_first(u, path, sched)
        ref = rhs
    elif cfg.order == 2:
        b = frechet_bridge_second(u, path, sched)
        lhs, rhs, ref = b.lhs, b.rhs, b.first_order
        rep.add("first_order_term", b.first_order)
        rep.add("qv_term", b.qv_term)
    else:
        raise ConfigError("--order must be 1 or 2")
    rep.add("lhs", lhs)
    rep.add("rhs", rhs)
    gap = abs(lhs.limit - rhs.limit)
    if input_sigma(cfg.path or "") is None:
        rep.check("bridge_abs_gap", gap, 1e-3)
    else:
        denom = max(abs(lhs.limit), abs(ref.limit))
        rep.check("bridge_relative_gap", gap / denom, 0.02, "gap / max(|lhs|, |first-order term|) <= tolerance")


def run_selftest(cfg, rep: RunReport):
    """Small fixed battery used to check determinism across worker counts."""
    base = dict(seed=cfg.seed, workers=cfg.workers, chunk=256, horizon=1.0)
    battery = [
        ("integrate", dict(segments=1024, g="poly:0,0,1", f="poly:0,1", expect=-2 / 3)),
        ("qv", dict(segments=65536, interval="0,1", f="brownian")),
        ("deriv", dict(segments=1024, functional="cyl-movavg", t=0.5, path="sin:1,2")),
        ("simulate", dict(segments=32, problem="heat", paths=2000)),
        ("solve-bsde", dict(segments=16, problem="heat", paths=2000)),
        ("solve-kolmogorov", dict(segments=16, problem="heat", method="feynman-kac", paths=2000)),
        ("verify-ito", dict(segments=64, problem="heat", functional="cyl-heat", paths=16, qv="bracket", doublings=3)),
    ]
    for command, opts in battery:
        sub = ExperimentConfig(command=command, **{**base, **opts}).validate()
        inner = RunReport(sub.echo())
        PIPELINES[command](sub, inner)
        rep.results.append({"name": command, "data": inner.to_dict()})
        for c in inner.checks:
            c.name = f"{command}:{c.name}"
            rep.checks.append(c)


PIPELINES = {
    "integrate": run_integrate,
    "qv": run_qv,
    "deriv": run_deriv,
    "simulate": run_simulate,
    "solve-bsde": run_solve_bsde,
    "solve-kolmogorov": run_solve_kolmogorov,
    "verify-ito": run_verify_ito,
    "verify-bridge": run_verify_bridge,
    "selftest": run_selftest,
}


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Run the pipeline of ``cfg.command`` and return its report."""
    cfg.validate()
    rep = RunReport(cfg.echo())
    t0 = time.perf_counter()
    PIPELINES[cfg.command](cfg, rep)
    rep.wall_clock = time.perf_counter() - t0
    return rep
