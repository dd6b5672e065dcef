import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homdp.classic_vi import (
    StateGrid,
    brute_force_value,
    classic_vi_iterate,
    corollary_scaling_probe,
    init_table,
    run,
    scaled_input_grids,
    write_grid_table,
)
from homdp.costs import QuadraticCostParams, indicator_cost, origin_set, quadratic_cost
from homdp.dilation import DilationSpec
from homdp.errors import BudgetError, ContractError, DomainError
from homdp.systems import cubic_scalar, linear_system, van_der_pol_extended

U3 = np.array([-1.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def toy():
    sys = linear_system([[0.5]], [[1.0]])
    cost = quadratic_cost(QuadraticCostParams(np.eye(1), np.eye(1)))
    return sys, cost


def sq(X):
    return np.sum(np.asarray(X) ** 2, axis=-1)


def test_state_grid_basics():
    g = StateGrid((-1, -1, 1), (1, 1, 1), (3, 5, 1))
    assert g.n_nodes == 15 and g.free == [0, 1]
    assert g.nodes.shape == (15, 3)
    np.testing.assert_array_equal(g.contains(np.array([[0, 0, 1], [0, 0, 1.1], [2, 0, 1]])), [True, False, False])
    with pytest.raises(ContractError):
        StateGrid((0, 0), (1, 1), (1, 3))
    with pytest.raises(ContractError):
        StateGrid((0,), (1, 2), (3,))


def test_grid_interpolation_is_exact_for_bilinear():
    g = StateGrid((-1, -2), (1, 2), (5, 9))
    f = lambda X: 1.0 + 2 * X[:, 0] - X[:, 1] + 0.5 * X[:, 0] * X[:, 1]
    rng = np.random.default_rng(0)
    P = rng.uniform([-1, -2], [1, 2], (50, 2))
    np.testing.assert_allclose(g.interpolate(f(g.nodes), P), f(P), atol=1e-12)


def test_scalar_toy_hand_value(toy):
    sys, cost = toy
    grid = StateGrid((-2.0,), (2.0,), (9,))
    t1 = classic_vi_iterate(init_table(grid, sq), sys, cost, U3, sq)
    k = int(np.argmin(np.abs(grid.nodes[:, 0] - 1.0)))
    # u = 0: 1 + 0 + 0.5^2
    assert t1.values[k] == 1.25
    assert U3[t1.policy[k]] == 0.0
    assert t1.iteration == 1


def test_zero_cost_gives_zero_values():
    sys = van_der_pol_extended()
    zero = quadratic_cost(QuadraticCostParams(np.zeros((3, 3)), np.zeros((1, 1))))
    grid = StateGrid((-1, -1, 1), (1, 1, 1), (5, 5, 1))
    tables = run(grid, sys, zero, np.linspace(-1, 1, 5), lambda X: np.zeros(len(X)), 2)
    assert np.all(tables[-1].values == 0.0)


def test_out_of_domain_fraction_and_modes(toy):
    sys, cost = toy
    grid = StateGrid((-1.0,), (1.0,), (5,))
    t = init_table(grid, sq, "v0_extend")
    nxt = classic_vi_iterate(t, sys, cost, np.array([-2.0, 0.0, 2.0]), sq)
    # u = +-2 always leaves [-1, 1]; u = 0 never does
    assert nxt.out_of_domain_fraction == pytest.approx(2 / 3)
    pen = classic_vi_iterate(init_table(grid, sq, "penalty"), sys, cost, np.array([-2.0, 0.0, 2.0]))
    clamp = classic_vi_iterate(init_table(grid, sq, "clamp"), sys, cost, np.array([-2.0, 0.0, 2.0]))
    np.testing.assert_array_equal(pen.values, nxt.values)
    assert np.all(clamp.values <= nxt.values)
    with pytest.raises(DomainError):
        init_table(grid, sq, "wrap")
    with pytest.raises(ContractError):
        classic_vi_iterate(t, sys, cost, np.array([2.0]))


def test_oodm_changes_values_when_input_leaves(toy):
    sys, cost = toy
    grid = StateGrid((-1.0,), (1.0,), (5,))
    U = np.array([1.5])
    ext = classic_vi_iterate(init_table(grid, sq, "v0_extend"), sys, cost, U, sq)
    clamp = classic_vi_iterate(init_table(grid, sq, "clamp"), sys, cost, U, sq)
    pen = classic_vi_iterate(init_table(grid, sq, "penalty"), sys, cost, U, sq)
    assert np.all(clamp.values <= ext.values)
    # x = -1 lands on 0.5, inside the box; every other node leaves it
    inner = grid.nodes[:, 0] > -1.0
    assert np.all(clamp.values[inner] < ext.values[inner])
    assert np.all(np.isinf(pen.values[grid.nodes[:, 0] > -1.0]))


def test_brute_force_zero_horizon_and_unreachable(toy):
    sys, cost = toy
    assert brute_force_value(sys, cost, [0.7], U3, 0, terminal=sq).value == pytest.approx(0.49)
    target = indicator_cost(origin_set((1.0,)), np.inf, role="terminal")
    res = brute_force_value(sys, cost, [5.0], U3, 1, terminal=target.j)
    assert res.value == np.inf
    res = brute_force_value(sys, cost, [2.0], U3, 1, terminal=target.j)
    # 0.5 * 2 - 1 = 0 reaches the target at stage cost 4 + 1
    assert res.value == 5.0 and res.sequence[0, 0] == -1.0


def test_brute_force_budget(toy):
    sys, cost = toy
    with pytest.raises(BudgetError):
        brute_force_value(sys, cost, [1.0], np.linspace(-1, 1, 11), 6, terminal=sq, budget=10 ** 5)
    with pytest.raises(ContractError):
        brute_force_value(sys, cost, [1.0], [np.zeros((2, 1))], 2, terminal=sq)


def test_scaled_input_grids():
    g = scaled_input_grids((1.0,), 3.0, 2.0, np.array([-1.0, 1.0]), 3)
    np.testing.assert_array_equal([x[:, 0] for x in g], [[-2, 2], [-8, 8], [-512, 512]])


def test_ray_probe_linear_branch(toy):
    sys, cost = toy
    assert corollary_scaling_probe(sys, cost, [0.8], 1.0, U3, 2, terminal=sq) == 0.0
    here = brute_force_value(sys, cost, [0.8], U3, 2, terminal=sq).value
    grids = scaled_input_grids((1.0,), 1.0, 2.0, U3, 2)
    there = brute_force_value(sys, cost, [1.6], grids, 2, terminal=sq).value
    assert there / here == pytest.approx(4.0, rel=1e-14)
    assert corollary_scaling_probe(sys, cost, [0.8], 2.0, U3, 2, terminal=sq) <= 1e-12


def test_ray_probe_degree_zero_branch():
    sys = cubic_scalar(0.5)
    target = origin_set(sys.spec.r)
    cost = indicator_cost(target, 1.0, sys.spec.q)
    term = indicator_cost(target, np.inf, sys.spec.q, role="terminal")
    U = np.array([-0.5, -0.25, 0.0, 0.25, 0.5])
    for eps in (0.5, 2.0, 3.0):
        assert corollary_scaling_probe(sys, cost, [0.5], eps, U, 3, terminal=term.j) == 0.0


def test_ray_probe_refuses_general_case():
    sys = van_der_pol_extended()
    cost = quadratic_cost(QuadraticCostParams(np.eye(3), np.zeros((1, 1))))
    with pytest.raises(DomainError):
        corollary_scaling_probe(sys, cost, (1, 0, 1), 2.0, [0.0], 1)


def test_oracle_equivalence_on_node_preserving_toy():
    sys = linear_system([[1.0]], [[1.0]])
    cost = quadratic_cost(QuadraticCostParams(np.eye(1), np.eye(1)))
    grid = StateGrid((-2.0,), (2.0,), (17,))
    U = np.array([-0.25, 0.0, 0.25])
    tables = run(grid, sys, cost, U, sq, 2, oodm="v0_extend")
    # two steps of at most 0.25 keep |x| <= 1.5 on the lattice
    keep = np.abs(grid.nodes[:, 0]) <= 1.5
    for x, v in zip(grid.nodes[keep], tables[2].values[keep]):
        assert v == brute_force_value(sys, cost, x, U, 2, terminal=sq).value


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0))
def test_monotone_in_terminal_cost(scale):
    sys = linear_system([[0.5]], [[1.0]])
    cost = quadratic_cost(QuadraticCostParams(np.eye(1), np.eye(1)))
    grid = StateGrid((-2.0,), (2.0,), (9,))
    lo = run(grid, sys, cost, U3, lambda X: min(scale, 1.0) * sq(X), 2)[-1]
    hi = run(grid, sys, cost, U3, lambda X: max(scale, 1.0) * sq(X), 2)[-1]
    assert np.all(lo.values <= hi.values)


def test_csv_output(tmp_path, toy):
    sys, cost = toy
    grid = StateGrid((-1.0,), (1.0,), (3,))
    tables = run(grid, sys, cost, U3, sq, 1)
    path = write_grid_table(tmp_path / "g.csv", tables[1], U3)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,value,policy_input"
    assert len(lines) == 4
    v0 = write_grid_table(tmp_path / "g0.csv", tables[0], U3).read_text().splitlines()
    assert v0[1].endswith(",")
