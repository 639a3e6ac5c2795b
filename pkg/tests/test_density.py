import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wdsmc.density import (
    DegenerateSpreadWarning,
    HistogramSpec,
    empirical,
    histogram,
    kde,
    kde_spec,
    read_grid_csv,
    scott_bandwidth,
    tv_distance,
    write_grid_csv,
)
from wdsmc.exceptions import EmptyInput, InvalidSpec
from wdsmc.ot import DiscreteDistribution, wasserstein_distance

points2d = arrays(np.float64, st.tuples(st.integers(1, 40), st.just(2)),
                  elements=st.floats(-1, 11, allow_nan=False))
SPEC = HistogramSpec.covering([0, 0], [10, 10], 10)


def test_empirical_masses():
    d = empirical(np.zeros((4, 2)) + np.arange(4)[:, None])
    np.testing.assert_array_equal(d.masses, [0.25] * 4)
    assert len(empirical([[1.0, 2.0]])) == 1


def test_empirical_keeps_duplicates_and_order():
    pts = np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
    d = empirical(pts)
    np.testing.assert_array_equal(d.points, pts)
    np.testing.assert_allclose(d.masses, [1 / 3] * 3)


def test_empirical_empty():
    with pytest.raises(EmptyInput):
        empirical(np.zeros((0, 2)))


@pytest.mark.parametrize("kwargs", [
    dict(origin=(0, 0), cell_size=(1, 0), counts=(2, 2)),
    dict(origin=(0, 0), cell_size=(1, 1), counts=(0, 2)),
    dict(origin=(0,), cell_size=(1, 1), counts=(2, 2)),
])
def test_spec_validation(kwargs):
    with pytest.raises(InvalidSpec):
        HistogramSpec(**kwargs)


def test_histogram_single_cell():
    h = histogram([[0.1, 0.1], [0.2, 0.3], [0.9, 0.5]], SPEC)
    np.testing.assert_allclose(h.points, [[0.5, 0.5]])
    np.testing.assert_allclose(h.masses, [1.0])


def test_histogram_adjacent_cells():
    h = histogram([[0.5, 0.5], [1.5, 0.5]], SPEC)
    np.testing.assert_allclose(h.points, [[0.5, 0.5], [1.5, 0.5]])
    np.testing.assert_allclose(h.masses, [0.5, 0.5])


def test_histogram_uniform_mc():
    pts = np.random.default_rng(0).random(1000)
    h = histogram(pts, HistogramSpec.covering(0, 1, 10))
    assert len(h) == 10
    assert np.all(np.abs(h.masses - 0.1) <= 0.05)


def test_out_of_grid_points_clamp():
    h = histogram([[-3.0, 5.0], [12.0, 5.0]], SPEC)
    np.testing.assert_allclose(h.points, [[0.5, 5.5], [9.5, 5.5]])


@settings(max_examples=100)
@given(points2d)
def test_histogram_mass_sums_to_one(pts):
    assert abs(histogram(pts, SPEC).masses.sum() - 1.0) < 1e-12


def test_scott_bandwidth():
    pts = np.random.default_rng(1).normal(size=(500, 2))
    expected = 500 ** (-1 / 6) * pts.std(axis=0, ddof=1)
    np.testing.assert_allclose(scott_bandwidth(pts), expected)


@pytest.mark.parametrize("seed", range(5))
def test_kde_integral_near_one(seed):
    pts = np.random.default_rng(seed).normal(size=(200, 2)) * [1.0, 0.3]
    grid = kde(pts, kde_spec(pts, 60))
    assert abs(grid.integral() - 1.0) < 0.05


def test_kde_two_point_symmetry():
    pts = np.array([[-1.0, 0.3], [1.0, -0.3]])
    spec = HistogramSpec.covering([-4, -4], [4, 4], 41)
    v = kde(pts, spec).values
    np.testing.assert_allclose(v, v[::-1, ::-1], atol=1e-9)


def test_kde_mode_at_mean():
    pts = np.random.default_rng(2).normal([3.0, -1.0], 0.5, size=(10000, 2))
    spec = HistogramSpec.covering([0, -4], [6, 2], 60)
    grid = kde(pts, spec)
    i, j = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    mean = pts.mean(axis=0)
    assert abs(spec.cell_centers(0)[i] - mean[0]) <= spec.cell_size[0]
    assert abs(spec.cell_centers(1)[j] - mean[1]) <= spec.cell_size[1]


def test_kde_degenerate_axis_warns():
    pts = np.column_stack([np.linspace(0, 5, 10), np.full(10, 2.0)])
    with pytest.warns(DegenerateSpreadWarning):
        grid = kde(pts, SPEC)
    assert grid.degenerate_axes == (1,)
    assert np.all(np.isfinite(grid.values))


def test_kde_needs_two_points():
    with pytest.raises(EmptyInput):
        kde([[1.0, 1.0]], SPEC)


def test_tv_identical_and_disjoint():
    a = empirical([[0.5, 0.5], [2.5, 2.5]])
    assert tv_distance(a, a, SPEC) == 0.0
    b = empirical([[7.5, 7.5]])
    assert tv_distance(a, b, SPEC) == 1.0


def test_tv_saturates_where_wasserstein_does_not():
    spec = HistogramSpec.covering(0, 100, 100)
    base = empirical(np.array([10.2, 10.4, 10.6]))
    near = empirical(np.array([11.2, 11.4, 11.6]))
    far = empirical(np.array([20.2, 20.4, 20.6]))
    assert tv_distance(base, near, spec) == tv_distance(base, far, spec) == 1.0
    assert wasserstein_distance(base, near) == pytest.approx(1.0)
    assert wasserstein_distance(base, far) == pytest.approx(10.0)


@settings(max_examples=100)
@given(points2d, points2d)
def test_tv_properties(p, q):
    a, b = empirical(p), empirical(q)
    d = tv_distance(a, b, SPEC)
    assert 0.0 <= d <= 1.0
    assert d == tv_distance(b, a, SPEC)
    same = np.allclose(histogram(p, SPEC).masses.sum(), 1) and _binned_equal(p, q)
    assert (d < 1e-12) == same


def _binned_equal(p, q):
    hp, hq = histogram(p, SPEC), histogram(q, SPEC)
    return (len(hp) == len(hq) and np.array_equal(hp.points, hq.points)
            and np.allclose(hp.masses, hq.masses, atol=1e-12))


def test_tv_uses_masses():
    a = DiscreteDistribution([[0.5, 0.5], [5.5, 5.5]], [0.9, 0.1])
    b = DiscreteDistribution([[0.5, 0.5], [5.5, 5.5]], [0.1, 0.9])
    assert tv_distance(a, b, SPEC) == pytest.approx(0.8)


def test_grid_csv_round_trip(tmp_path):
    pts = np.random.default_rng(4).normal(5, 1, size=(50, 2))
    grid = kde(pts, SPEC)
    path = tmp_path / "g.csv"
    write_grid_csv(grid, path)
    back = read_grid_csv(path)
    np.testing.assert_array_equal(back.values, grid.values)
    assert back.origin == grid.origin and back.cell_size == grid.cell_size
