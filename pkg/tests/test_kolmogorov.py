import math

import numpy as np
import pytest

from helpers import smooth_path
from pathito.errors import ConfigError, UnsupportedCandidateError
from pathito.functionals import Constant, Weight
from pathito.kolmogorov import (
    PROBLEMS,
    CylindricalPack,
    KolmogorovProblem,
    MonteCarloCandidate,
    NumericHooks,
    duhamel_psi,
    feynman_kac_value,
    make_problem,
    pack_consistency,
    pde_residual,
    terminal_gap,
    uniqueness_check,
)
from pathito.paths import Grid, SegmentedPath
from pathito.sde import McConfig

G = Grid(1.0, 256)


def _flat(grid, c=0.0):
    return SegmentedPath.from_values(grid, np.full(grid.segments + 1, c))


def _ones(u, x):
    return np.ones(np.asarray(x).shape[0])


def _zeros(u, x):
    return np.zeros(np.asarray(x).shape[0])


def test_registry():
    assert set(PROBLEMS) == {"heat", "movavg", "linear-terminal", "semilinear-exp", "delay-drift"}
    with pytest.raises(ConfigError):
        make_problem("wave")
    assert make_problem("delay-drift").candidate() is None


def test_heat_residual_hand_evaluation():
    prob = make_problem("heat")
    cand = prob.candidate()
    p = SegmentedPath.from_function(G, lambda x: np.sin(3 * x) + 1.0)
    dt, dh, dv, dvv = cand.derivatives(0.5, p)
    assert (dt, dh, dvv) == (-1.0, 0.0, 2.0)
    assert pde_residual(cand, prob, 0.5, p) == 0.0


def test_constant_candidate_zero_residual():
    prob = KolmogorovProblem("const", lambda t, w: 0.0, lambda t, w: 1.0, lambda t, w, y, z: 0.0, lambda w: 3.0)
    assert pde_residual(Constant(3.0), prob, 0.25, _flat(G)) == 0.0


def test_residual_requires_hooks():
    prob = make_problem("heat")
    with pytest.raises(UnsupportedCandidateError):
        pde_residual(MonteCarloCandidate(prob, McConfig(10, 0)), prob, 0.0, _flat(G))


@pytest.mark.parametrize("name", ["heat", "movavg", "linear-terminal", "semilinear-exp"])
def test_terminal_consistency(name, rng):
    prob = make_problem(name)
    cand = prob.candidate()
    for _ in range(10):
        assert terminal_gap(cand, prob, smooth_path(G, rng)) <= 1e-10


@pytest.mark.parametrize("name", ["heat", "movavg", "semilinear-exp"])
def test_pack_matches_window_coefficients(name, rng):
    prob = make_problem(name)
    probes = [smooth_path(G, rng) for _ in range(5)]
    assert pack_consistency(prob, 0.5, probes) <= 1e-12


# -- Feynman-Kac ---------------------------------------------------------------------


def test_feynman_kac_martingale():
    prob = make_problem("linear-terminal")
    est = feynman_kac_value(prob, 0.0, _flat(Grid(1.0, 20), 0.8), McConfig(20_000, 1))
    assert abs(est.value - 0.8) <= 3 * est.stderr + 1e-12


def test_feynman_kac_unit_driver():
    prob = KolmogorovProblem("unit", lambda t, w: 0.0, lambda t, w: 1.0, lambda t, w, y, z: 1.0, lambda w: 0.0)
    est = feynman_kac_value(prob, 0.25, _flat(Grid(1.0, 20)), McConfig(100, 1))
    assert est.value == pytest.approx(0.75, abs=1e-12)
    assert est.stderr == 0.0


def test_feynman_kac_rejects_nonlinear():
    prob = make_problem("semilinear-exp")
    with pytest.raises(UnsupportedCandidateError):
        feynman_kac_value(prob, 0.0, _flat(Grid(1.0, 20)), McConfig(10, 1))


def test_feynman_kac_delay_reference():
    prob = make_problem("delay-drift")
    path = SegmentedPath.from_function(Grid(1.0, 20), lambda x: 1.0 + x)
    est = feynman_kac_value(prob, 0.0, path, McConfig(20_000, 2))
    assert abs(est.value - prob.reference(0.0, path)) <= 3 * est.stderr


@pytest.mark.parametrize("name", ["heat", "movavg"])
def test_feynman_kac_matches_reduced_solution(name):
    prob = make_problem(name)
    path = SegmentedPath.from_function(Grid(1.0, 50), lambda x: 0.4 + 0.3 * np.sin(2 * x))
    est = feynman_kac_value(prob, 0.0, path, McConfig(40_000, 3))
    ref = prob.candidate().value(0.0, path)
    # the Euler quadrature of the weight adds an O(dt) bias on top of noise
    assert abs(est.value - ref) <= 3 * est.stderr + 2 * path.grid.step


# -- Duhamel ---------------------------------------------------------------------------


def _duhamel_pack(driver):
    return CylindricalPack((Weight.const(),), _zeros, _ones, driver, lambda x: np.zeros(x.shape[0]), 1.0)


def test_duhamel_constant_driver():
    pack = _duhamel_pack(lambda u, x, y, z: np.full(x.shape[0], 2.0))
    r = duhamel_psi(pack, 0.25, [0.3], 0.05, McConfig(500, 1))
    assert all(c.value == 2.0 for c in r.components)
    assert r.value.value == pytest.approx(2.0 * 0.75, abs=1e-12)


def test_duhamel_linear_driver():
    pack = _duhamel_pack(lambda u, x, y, z: x[:, 0])
    r = duhamel_psi(pack, 0.0, [0.3], 0.05, McConfig(20_000, 2))
    for c in r.components:
        assert abs(c.value - 0.3) <= 3 * c.stderr + 1e-12
    assert abs(r.value.value - 0.3) <= 3 * r.value.stderr + 1e-12


def test_duhamel_square_driver():
    pack = _duhamel_pack(lambda u, x, y, z: x[:, 0] ** 2)
    x0, t = 0.3, 0.0
    r = duhamel_psi(pack, t, [x0], 0.05, McConfig(20_000, 3))
    for s, c in zip(r.times, r.components):
        assert abs(c.value - (x0**2 + s - t)) <= 3 * c.stderr + 1e-12
    exact = x0**2 * (1 - t) + (1 - t) ** 2 / 2
    assert abs(r.value.value - exact) <= 3 * r.value.stderr + 1e-12


# -- residual trends -------------------------------------------------------------------


def test_numeric_hooks_residual_decays_as_grid_doubles():
    prob = make_problem("movavg")
    cand = prob.candidate()
    res = []
    for m in (64, 128, 256):
        p = SegmentedPath.from_function(Grid(1.0, m), lambda x: np.sin(2 * x) + 0.3)
        res.append(abs(pde_residual(NumericHooks(cand, 1.0), prob, 0.5, p)))
    assert res[0] > res[1] > res[2]
    assert res[2] <= 1e-4


def test_numeric_hooks_exact_on_heat():
    prob = make_problem("heat")
    p = SegmentedPath.from_function(G, lambda x: np.cos(x))
    assert abs(pde_residual(NumericHooks(prob.candidate(), 1.0), prob, 0.5, p)) <= 1e-6


def test_monte_carlo_candidate_residual():
    prob = make_problem("heat")
    path = SegmentedPath.from_function(Grid(1.0, 20), lambda x: 0.5 + 0.2 * x)
    est = MonteCarloCandidate(prob, McConfig(20_000, 4)).residual(0.5, path)
    assert abs(est.value) <= 3 * est.stderr + 2 * path.grid.step


def test_monte_carlo_candidate_terminal_gap():
    prob = make_problem("heat")
    cand = MonteCarloCandidate(prob, McConfig(100, 4))
    path = SegmentedPath.from_function(Grid(1.0, 20), lambda x: 0.5 + 0.2 * x)
    assert terminal_gap(cand, prob, path) == 0.0


# -- uniqueness ------------------------------------------------------------------------


def test_uniqueness_linear_terminal():
    prob = make_problem("linear-terminal")
    path = _flat(Grid(1.0, 20), 0.6)
    res = uniqueness_check(prob.candidate(), prob, 0.0, path, McConfig(20_000, 5))
    assert res["passed"], res
    assert set(res) >= {"candidate", "y0", "gap", "tolerance"}


def test_uniqueness_semilinear_from_window():
    prob = make_problem("semilinear-exp")
    path = SegmentedPath.from_function(Grid(1.0, 20), lambda x: 0.5 + 0.5 * x)
    res = uniqueness_check(prob.candidate(), prob, 0.5, path, McConfig(20_000, 6))
    assert res["candidate"] == pytest.approx(math.exp(0.25) * 0.5)
    assert res["passed"], res
