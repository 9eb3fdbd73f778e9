import math

import numpy as np
import pytest

from pathito.bsde import BsdeDriver, Projection, RegressionBasis, solve_bsde, solve_fbsde_cylindrical
from pathito.errors import RankDeficiencyError
from pathito.kolmogorov import make_problem
from pathito.paths import Grid, SegmentedPath
from pathito.sde import McConfig, SdeProblem, constant

P = 20_000


def _flat(grid, c=0.0):
    return SegmentedPath.from_values(grid, np.full(grid.segments + 1, c))


def _brownian_problem(segments=20, c=0.0):
    return SdeProblem(constant(0.0), constant(1.0), 0.0, _flat(Grid(1.0, segments), c))


def _present(win):
    return np.asarray(win.present, dtype=float)


def _zero(t, win, y, z):
    return 0.0


def test_basis():
    b = RegressionBasis(2)
    assert b.labels(2) == ["1", "x1", "x2", "x1*x1", "x1*x2", "x2*x2"]
    f = b.features(np.array([[2.0, 3.0]]))
    np.testing.assert_array_equal(f, [[1, 2, 3, 4, 6, 9]])
    with pytest.raises(ValueError):
        RegressionBasis(-1)


def test_projection_recovers_quadratic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=500)
    proj = Projection(RegressionBasis(2).features(x))
    fitted, coef = proj.fit(1.0 - 2.0 * x + 0.5 * x**2)
    np.testing.assert_allclose(coef, [1.0, -2.0, 0.5], atol=1e-8)
    assert proj.condition < 100


def test_projection_degenerate_is_mean():
    proj = Projection(RegressionBasis(2).features(np.full(10, 3.0)))
    fitted, coef = proj.fit(np.arange(10.0))
    assert proj.degenerate
    np.testing.assert_array_equal(fitted, 4.5)


def test_projection_rank_deficiency_reported():
    x = np.stack([np.linspace(0, 1, 50), np.full(50, 2.0)], axis=1)
    with pytest.raises(RankDeficiencyError) as exc:
        Projection(RegressionBasis(1).features(x), step=3, basis=["1", "x1", "x2"])
    assert exc.value.step == 3
    x = np.stack([np.linspace(0, 1, 50), 2 * np.linspace(0, 1, 50)], axis=1)
    with pytest.raises(RankDeficiencyError):
        Projection(RegressionBasis(1).features(x))


def test_martingale_terminal():
    sol = solve_bsde(_brownian_problem(c=0.7), BsdeDriver(_zero, _present), RegressionBasis(), McConfig(P, 1))
    assert abs(sol.y0.value - 0.7) <= 3 * sol.y0.stderr + 1e-12


def test_square_terminal():
    sol = solve_bsde(
        _brownian_problem(), BsdeDriver(_zero, lambda w: _present(w) ** 2), RegressionBasis(), McConfig(P, 2)
    )
    assert abs(sol.y0.value - 1.0) <= 3 * sol.y0.stderr + 2 * 0.05


def test_linear_driver_exponential_growth():
    a = 0.5
    drv = BsdeDriver(lambda t, w, y, z: a * y, _present, lipschitz=a)
    sol = solve_bsde(_brownian_problem(c=1.0), drv, RegressionBasis(), McConfig(P, 3))
    assert abs(sol.y0.value - math.exp(a)) <= 3 * sol.y0.stderr + 2 * 0.05
    assert not sol.diagnostics["implicit"]


def test_implicit_scheme_kicks_in():
    a = 5.0
    drv = BsdeDriver(lambda t, w, y, z: a * y, _present, lipschitz=a)
    prob = SdeProblem(constant(0.0), constant(0.0), 0.0, _flat(Grid(1.0, 20), 1.0))
    sol = solve_bsde(prob, drv, RegressionBasis(), McConfig(200, 3))
    assert sol.diagnostics["implicit"]
    # five fixed-point sweeps of y = yhat + a y dt per step, from y = yhat
    r = a / 20
    assert sol.y0.value == pytest.approx(sum(r**j for j in range(6)) ** 20, rel=1e-12)


def test_determinism():
    drv = BsdeDriver(_zero, lambda w: _present(w) ** 2)
    a = solve_bsde(_brownian_problem(), drv, RegressionBasis(), McConfig(3000, 9, workers=1))
    b = solve_bsde(_brownian_problem(), drv, RegressionBasis(), McConfig(3000, 9, workers=4, chunk=512))
    assert a.y0 == b.y0
    for u, v in zip(a.y_coefficients, b.y_coefficients):
        np.testing.assert_array_equal(u, v)


@pytest.mark.parametrize("name", ["heat", "linear-terminal", "semilinear-exp"])
def test_halving_step_is_consistent(name):
    prob = make_problem(name)
    vals = []
    for m in (10, 20):
        path = _flat(Grid(1.0, m), 0.5)
        sol = solve_bsde(prob.sde(0.0, path), prob.bsde_driver(), RegressionBasis(), McConfig(P, 4), prob.features)
        vals.append(sol.y0)
    gap = abs(vals[0].value - vals[1].value)
    assert gap <= 3 * math.hypot(vals[0].stderr, vals[1].stderr) + 1e-12


def test_z_energy_stable_under_more_paths():
    prob = make_problem("heat")
    path = _flat(Grid(1.0, 20))
    ratios = []
    for p in (5000, 10000):
        sol = solve_bsde(prob.sde(0.0, path), prob.bsde_driver(), RegressionBasis(), McConfig(p, 5), prob.features)
        r = sol.diagnostics["z_bound_ratio"]
        assert math.isfinite(r)
        ratios.append(r)
    assert abs(ratios[0] - ratios[1]) <= 0.1 * ratios[1]


# -- statistic system ---------------------------------------------------------------


def test_cylindrical_heat_from_statistic():
    pack = make_problem("heat").pack
    sol = solve_fbsde_cylindrical(pack, 0.0, [0.0], McConfig(P, 6), step=0.05)
    assert abs(sol.y0.value - 1.0) <= 3 * sol.y0.stderr + 2 * 0.05


def test_cylindrical_linear_terminal():
    pack = make_problem("linear-terminal").pack
    sol = solve_fbsde_cylindrical(pack, 0.0, [0.4], McConfig(P, 6), step=0.05)
    assert abs(sol.y0.value - 0.4) <= 3 * sol.y0.stderr + 1e-12


def test_cylindrical_needs_state():
    pack = make_problem("heat").pack
    with pytest.raises(ValueError):
        solve_fbsde_cylindrical(pack, 0.0, None, McConfig(10, 0))
    with pytest.raises(ValueError):
        solve_fbsde_cylindrical(pack, 0.0, [0.0], McConfig(10, 0))


@pytest.mark.parametrize("name", ["heat", "movavg"])
def test_window_and_statistic_solvers_agree(name):
    prob = make_problem(name)
    path = SegmentedPath.from_function(Grid(1.0, 100), lambda x: 0.3 + 0.5 * x)
    cfg = McConfig(P, 7)
    a = solve_bsde(prob.sde(0.0, path), prob.bsde_driver(), RegressionBasis(), cfg, prob.features)
    b = solve_fbsde_cylindrical(prob.pack, 0.0, cfg=cfg, path=path)
    assert abs(a.y0.value - b.y0.value) <= 2 * math.hypot(a.y0.stderr, b.y0.stderr) + 1e-10
