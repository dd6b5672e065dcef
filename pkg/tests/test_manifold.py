import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homdp.dilation import dilate
from homdp.errors import ContractError, DomainError
from homdp.manifold import (
    ManifoldGrid,
    PointManifold,
    coverage_check,
    interpolate,
    project_many,
    project_to_manifold,
    read_value_table,
    solve_ray_eps,
    write_value_table,
)


@pytest.fixture(scope="module")
def grid():
    return ManifoldGrid(1.5, 9, 5)


def test_nodes_on_sphere(grid):
    np.testing.assert_allclose(np.linalg.norm(grid.node_points, axis=1), 1.5, rtol=0, atol=1e-12)
    assert grid.n_nodes == 45
    np.testing.assert_allclose(grid.azimuths[[0, -1]], [-np.pi, np.pi])
    np.testing.assert_allclose(grid.elevations[[0, -1]], [0.0, np.pi / 2])
    # node (i, j) has flat index j * n_az + i
    np.testing.assert_allclose(grid.node_angles[2 * 9 + 3], [grid.azimuths[3], grid.elevations[2]])


def test_full_scale_node_count():
    assert ManifoldGrid(1.5, 501, 501).n_nodes == 501 ** 2


def test_projection_examples(grid):
    d = project_to_manifold(1.5, (1, 1, 1), (3, 0, 0))
    assert d.eps == 2.0
    np.testing.assert_array_equal(d.base, [1.5, 0, 0])
    p = grid.node_points[17]
    d = project_to_manifold(grid, (1, 1, 1), p)
    assert d.eps == pytest.approx(1.0, abs=1e-15)
    eps = solve_ray_eps((1, 2), 1.0, np.array([[0.0, 4.0]]))
    assert eps[0] == pytest.approx(2.0, rel=1e-11)
    d = project_to_manifold(1.0, (1, 2), (0, 4))
    np.testing.assert_allclose(d.base, [0, 1], atol=1e-11)


def test_north_pole(grid):
    d = project_to_manifold(grid, (1, 1, 1), (0, 0, 1.5))
    assert d.eps == 1.0
    assert d.interp[0][0] == (grid.n_el - 1) * grid.n_az or any(
        i >= (grid.n_el - 1) * grid.n_az and w > 0 for i, w in d.interp)


def test_projection_errors(grid):
    with pytest.raises(DomainError):
        project_to_manifold(grid, (1, 1, 1), (0, 0, 0))
    with pytest.raises(DomainError):
        project_to_manifold(grid, (1, 1, 1), (1, 0, -1))
    with pytest.raises(ContractError):
        project_many((1, 1), 1.0, np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.3, 3.0), min_size=2, max_size=4), st.integers(0, 10 ** 6))
def test_reconstruction_and_uniqueness(r, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, len(r))) * np.exp(rng.uniform(-4, 4, size=(20, 1)))
    eps, base = project_many(r, 1.3, X)
    np.testing.assert_allclose(dilate(r, eps, base), X, rtol=1e-9, atol=0)
    np.testing.assert_allclose(np.linalg.norm(base, axis=1), 1.3, rtol=1e-9)
    other = solve_ray_eps(r, 1.3, X, bracket=(1e-10, 1e11))
    np.testing.assert_allclose(other, eps, rtol=1e-10)


def test_interpolation_partition_of_unity(grid):
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = project_to_manifold(grid, (1, 1, 1), rng.normal(size=3) * [1, 1, 0] + [0, 0, 0.5])
        assert sum(w for _, w in d.interp) == pytest.approx(1.0, abs=1e-12)
        assert all(w >= 0 for _, w in d.interp)
        assert interpolate(grid, np.full(grid.n_nodes, 4.25), d) == pytest.approx(4.25, abs=1e-12)


def test_interpolation_at_node_and_midpoint(grid):
    values = np.arange(grid.n_nodes, dtype=float)
    d = project_to_manifold(grid, (1, 1, 1), grid.node_points[21])
    assert interpolate(grid, values, d) == pytest.approx(21.0, abs=1e-12)
    # midpoint in azimuth of nodes 19 and 20 (same elevation row)
    vals = np.zeros(grid.n_nodes)
    vals[19], vals[20] = 1.0, 3.0
    az = 0.5 * (grid.azimuths[1] + grid.azimuths[2])
    el = grid.elevations[2]
    p = 1.5 * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    assert interpolate(grid, vals, project_to_manifold(grid, (1, 1, 1), p)) == pytest.approx(2.0, abs=1e-12)


def test_interpolation_exact_for_affine_angle_fields(grid):
    ang = grid.node_angles
    vals = 2.0 * ang[:, 0] - 3.0 * ang[:, 1] + 1.0
    h_az, h_el = grid.cell_size
    az = grid.azimuths[:-1] + 0.5 * h_az
    el = grid.elevations[:-1] + 0.5 * h_el
    A, E = np.meshgrid(az, el)
    P = 1.5 * np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    idx, w = grid.locate(P)
    got = np.sum(w * vals[idx], axis=1)
    np.testing.assert_allclose(got, 2.0 * A.ravel() - 3.0 * E.ravel() + 1.0, atol=1e-12)


def test_interpolate_rejects_wrong_length(grid):
    d = project_to_manifold(grid, (1, 1, 1), (1, 0, 0.5))
    with pytest.raises(ContractError):
        interpolate(grid, np.zeros(3), d)


def test_nearest_read_back(grid):
    idx, w = grid.locate(grid.node_points[[7, 30]], read_back="nearest")
    np.testing.assert_array_equal(idx[:, 0], [7, 30])
    np.testing.assert_array_equal(w[:, 0], [1, 1])


def test_mirror_x3(grid):
    d_up = project_to_manifold(grid, (1, 1, 1), (0.3, -0.4, 0.9), mirror_x3=True)
    d_dn = project_to_manifold(grid, (1, 1, 1), (0.3, -0.4, -0.9), mirror_x3=True)
    assert d_up.interp == d_dn.interp


def test_coverage(grid):
    assert coverage_check(grid, (1, 1, 1), mirror_x3=True).passed
    rep = coverage_check(grid, (1, 1, 1), states=np.array([[1.0, 0.0, -1.0], [1.0, 0.0, 1.0]]))
    assert not rep.passed and rep.uncovered == 1


def test_point_manifold_line():
    m = PointManifold.line(1.0)
    idx, w = m.locate(np.array([[1.0], [-1.0]]))
    np.testing.assert_array_equal(idx[:, 0], [0, 1])
    with pytest.raises(DomainError):
        m.locate(np.array([[0.5]]))


def test_csv_round_trip(tmp_path, grid):
    vals = np.linspace(0, 1, grid.n_nodes) / 3.0
    path = write_value_table(tmp_path / "t.csv", grid, {"value": vals})
    assert path.read_text().splitlines()[0] == "azimuth,elevation,x1,x2,x3,value"
    back = read_value_table(path)
    np.testing.assert_array_equal(back["value"], vals)
    np.testing.assert_array_equal(back["x3"], grid.node_points[:, 2])
