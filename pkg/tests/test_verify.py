import math

import numpy as np
import pytest

from pathito.errors import UnsupportedCandidateError
from pathito.functionals import Constant, PathFunctional, make_functional
from pathito.kolmogorov import make_problem
from pathito.paths import Grid, SegmentedPath
from pathito.sde import McConfig, simulate
from pathito.verify import (
    classical_ito_residual,
    convergence_study,
    deterministic_path,
    ito_residual,
    nested_brownian,
    realized_qv,
)


def _heat_paths(segments=256, paths=20, seed=1, x0=0.0):
    prob = make_problem("heat")
    start = SegmentedPath.from_values(Grid(1.0, segments), np.full(segments + 1, x0))
    return simulate(prob.sde(0.0, start), McConfig(paths, seed))


def test_residual_at_start_is_zero():
    X = _heat_paths()
    rep = ito_residual(make_functional("cyl-movavg"), X)
    assert np.all(rep.residual[:, 0] == 0.0)


def test_heat_realized_qv_exact():
    X = _heat_paths(x0=0.3)
    rep = ito_residual(make_functional("cyl-heat"), X)
    assert rep.max_residual.max() <= 1e-12


def test_markovian_agrees_with_classical_harness():
    X = _heat_paths(paths=5)
    u = make_functional("markovian")
    rep = ito_residual(u, X)
    classical = classical_ito_residual(
        lambda t, x: math.exp(-t) * math.sin(x) + 0.5 * x * x,
        lambda t, x: -math.exp(-t) * math.sin(x),
        lambda t, x: math.exp(-t) * math.cos(x) + x,
        lambda t, x: -math.exp(-t) * math.sin(x) + 1.0,
        X.times,
        X.path_values(),
    )
    assert np.max(np.abs(rep.residual - classical)) <= 1e-12


def test_bounded_variation_path_small_residual():
    make = deterministic_path(lambda s: np.sin(2 * s), 1.0)
    rep = ito_residual(make_functional("cyl-movavg"), make(512))
    assert np.max(np.abs(rep.quadratic)) <= 10 / 512
    assert rep.max_residual.max() <= 10 / 512


class _ValueOnly(PathFunctional):
    def value(self, t, path):
        return np.asarray(path.present)


def test_missing_hooks_rejected():
    X = _heat_paths(paths=2, segments=8)
    with pytest.raises(UnsupportedCandidateError):
        ito_residual(_ValueOnly(), X)
    with pytest.raises(ValueError):
        ito_residual(make_functional("cyl-heat"), X, qv="bracket")
    with pytest.raises(ValueError):
        ito_residual(make_functional("cyl-heat"), X, qv="other")


def test_realized_qv_accumulator():
    make = nested_brownian(100, 3, 1.0, 2**14, sigma=0.7)
    X = make(2**14)
    qv = realized_qv(X)
    rel = np.abs(qv[:, -1] - 0.49) / 0.49
    assert np.mean(rel <= 0.05) >= 0.9


def test_nested_levels_share_paths():
    make = nested_brownian(4, 2, 1.0, 64)
    fine, coarse = make(64), make(16)
    np.testing.assert_allclose(fine.path_values()[:, ::4], coarse.path_values(), atol=1e-14)
    with pytest.raises(ValueError):
        make(48)


def test_deterministic_convergence_slope():
    table = convergence_study(make_functional("cyl-movavg"), deterministic_path(lambda s: np.sin(2 * s), 1.0), 64, 4)
    assert abs(table.slope - 1.0) <= 0.3


def test_constant_functional_residual_identically_zero():
    table = convergence_study(Constant(2.0), nested_brownian(5, 1, 1.0, 256), 64, 3)
    assert table.residuals == (0.0, 0.0, 0.0)


def test_convergence_needs_three_levels():
    with pytest.raises(ValueError):
        convergence_study(Constant(1.0), nested_brownian(2, 1, 1.0, 16), 4, 2)


def test_summary_fields():
    X = _heat_paths(paths=3, segments=16)
    s = ito_residual(make_functional("cyl-heat"), X).summary()
    assert s["steps"] == 16
    assert "rms_max_residual" in s
