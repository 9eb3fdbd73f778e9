import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathito.errors import AlignmentError, DomainError
from pathito.paths import (
    Grid,
    SegmentedPath,
    Trajectory,
    bump_present,
    extend,
    grid_index,
    read_curve_csv,
    read_path_csv,
    shift_past,
    sup_counterexample,
    window_at,
    write_curve_csv,
    write_path_csv,
    write_trajectory_csv,
)


def test_grid_basics():
    g = Grid(1.0, 4)
    assert g.step == 0.25
    assert g.start == -1.0
    np.testing.assert_array_equal(g.nodes, [-1, -0.75, -0.5, -0.25, 0])
    assert g.index(-0.5) == 2
    assert g.steps_of(0.5) == 2
    with pytest.raises(AlignmentError):
        g.steps_of(0.3)
    with pytest.raises(AlignmentError):
        grid_index(0.1, 0.0, 0.25)


def test_path_is_read_only():
    p = SegmentedPath.from_values(Grid(1.0, 4), np.arange(5.0))
    with pytest.raises(ValueError):
        p.past[0] = 3.0


def test_path_shape_errors():
    with pytest.raises(ValueError):
        SegmentedPath(Grid(1.0, 4), np.zeros(4), 0.0)
    with pytest.raises(ValueError):
        SegmentedPath(Grid(1.0, 4), np.zeros(5), 0.0, "periodic")


def test_jump_at_present():
    p = SegmentedPath(Grid(1.0, 4), np.ones(5), 3.0)
    assert not p.is_continuous()
    assert p.left_limit == 1.0
    assert p.values()[-1] == 3.0


# -- window_at --------------------------------------------------------------


def _linear_trajectory(segments=8):
    g = Grid(1.0, segments)
    s = -1.0 + g.step * np.arange(2 * segments + 1)
    return Trajectory(0.0, g, s)


def test_window_of_identity_trajectory():
    X = _linear_trajectory()
    w = window_at(X, 0.5)
    np.testing.assert_allclose(w.past, 0.5 + w.grid.nodes, atol=1e-15)
    assert w.present == 0.5


def test_window_of_constant_trajectory():
    g = Grid(1.0, 8)
    X = Trajectory(0.0, g, np.full(17, 2.5))
    for k in range(9):
        np.testing.assert_array_equal(X.window(k).past, 2.5)


def test_window_present_is_sample_exactly():
    rng = np.random.default_rng(1)
    g = Grid(1.0, 16)
    vals = rng.normal(size=(3, 33))
    X = Trajectory(0.0, g, vals)
    for k, s in enumerate(X.times):
        np.testing.assert_array_equal(window_at(X, s).present, vals[:, 16 + k])


def test_window_errors():
    X = _linear_trajectory()
    with pytest.raises(AlignmentError):
        window_at(X, 0.3)
    with pytest.raises(DomainError):
        window_at(X, 1.5)


# -- shift_past --------------------------------------------------------------


def test_shift_of_affine_path():
    g = Grid(1.0, 8)
    p = SegmentedPath.from_function(g, lambda x: x + 1.0)
    q = shift_past(p, 0.25)
    x = g.nodes
    expect = np.where(x >= -0.75, x + 0.75, 0.0)
    np.testing.assert_allclose(q.past, expect, atol=1e-15)
    assert q.present == p.present


def test_shift_zero_is_identity():
    p = SegmentedPath.from_function(Grid(1.0, 8), np.sin)
    assert shift_past(p, 0.0) is p


@pytest.mark.parametrize("mode", ["constant-left", "zero"])
def test_shift_modes(mode):
    p = SegmentedPath.from_values(Grid(1.0, 4), np.full(5, 2.0), mode)
    q = shift_past(p, 0.5)
    if mode == "constant-left":
        np.testing.assert_array_equal(q.past, 2.0)
    else:
        np.testing.assert_array_equal(q.past, [0, 0, 2, 2, 2])


def test_shift_misaligned():
    p = SegmentedPath.from_values(Grid(1.0, 4), np.zeros(5))
    with pytest.raises(AlignmentError):
        shift_past(p, 0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10), st.integers(0, 10), st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_shift_semigroup(k1, k2, tail):
    g = Grid(1.0, 16)
    vals = np.concatenate([np.full(11, 1.5), tail])
    p = SegmentedPath.from_values(g, vals)
    e1, e2 = k1 * g.step, k2 * g.step
    a = shift_past(shift_past(p, e1), e2)
    b = shift_past(p, e1 + e2)
    np.testing.assert_array_equal(a.past, b.past)


# -- bump_present ------------------------------------------------------------


def test_bump():
    p = SegmentedPath(Grid(1.0, 4), np.arange(5.0), 2.0)
    q = bump_present(p, 0.5)
    assert q.present == 2.5
    np.testing.assert_array_equal(q.past, p.past)
    assert bump_present(p, 0.0).present == p.present


@given(st.floats(-100, 100), st.floats(-10, 10))
def test_bump_inverse_pair(a, h):
    p = SegmentedPath(Grid(1.0, 4), np.zeros(5), a)
    back = bump_present(bump_present(p, h), -h)
    assert back.present == pytest.approx(a, abs=1e-12)


# -- extend ------------------------------------------------------------------


def test_extend_modes():
    g = Grid(1.0, 4, end=1.0)
    jbar = extend(g.nodes, g, "Jbar")
    assert jbar(2.0) == 1.0
    assert jbar(-1.0) == 0.0
    j = extend(g.nodes, g, "J")
    assert j(-1.0) == 0.0
    assert j(2.0) == 0.0
    c = extend(np.full(5, 3.0), g, "Jbar")
    np.testing.assert_array_equal(c(np.array([0.0, 0.4, 1.0, 7.0])), 3.0)
    with pytest.raises(ValueError):
        extend(g.nodes, g, "K")


# -- sup counterexample ------------------------------------------------------


@pytest.mark.parametrize("n", [4, 8, 16])
def test_sup_counterexample(n):
    g = Grid(1.0, 2**18)
    p = sup_counterexample(g, n)
    assert p.values().max() == 1.0
    assert p.present == 0.0
    # any fixed compact [-T, -1/8] sees zero once 2^-n < 1/8
    k = g.index(-0.125)
    assert np.max(np.abs(p.past[: k + 1])) == 0.0


# -- CSV ---------------------------------------------------------------------


def test_path_csv_round_trip(tmp_path):
    g = Grid(2.0, 8)
    p = SegmentedPath(g, np.cos(g.nodes), 4.0)
    f = tmp_path / "p.csv"
    write_path_csv(p, f)
    assert "0-," in f.read_text()
    q = read_path_csv(f)
    assert q.grid == g
    np.testing.assert_allclose(q.past, p.past, rtol=1e-15)
    assert q.present == 4.0


def test_continuous_path_csv_has_no_left_limit_row(tmp_path):
    p = SegmentedPath.from_function(Grid(1.0, 4), np.exp)
    f = tmp_path / "p.csv"
    write_path_csv(p, f)
    assert "0-" not in f.read_text()
    assert read_path_csv(f).is_continuous()


def test_curve_csv_round_trip(tmp_path):
    xs, ys = np.linspace(0, 1, 11), np.linspace(0, 1, 11) ** 2
    f = tmp_path / "c.csv"
    write_curve_csv(xs, ys, f)
    a, b = read_curve_csv(f)
    np.testing.assert_array_equal(a, xs)
    np.testing.assert_array_equal(b, ys)


def test_trajectory_csv(tmp_path):
    X = _linear_trajectory(4)
    f = tmp_path / "t.csv"
    write_trajectory_csv(X, f)
    a, b = read_curve_csv(f)
    np.testing.assert_allclose(b, X.nodes)
