import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homdp.costs import (
    CostModel,
    CostWeights,
    QuadraticCostParams,
    check_cost_scaling,
    check_value_identity,
    combine_costs,
    eval_cost,
    indicator_cost,
    l0_cost,
    origin_set,
    quadratic_cost,
    quadratic_cost_mixed,
    signed_power_quadratic,
    subspace_set,
    verify_cost_homogeneity,
)
from homdp.dilation import DilationSpec, DilationWeights
from homdp.errors import ConstructionError, ContractError, DomainError
from homdp.numerics import ext_mul, power_weight
from homdp.systems import cubic_scalar, linear_system, van_der_pol_extended

QR = QuadraticCostParams(np.diag([1.0, 1.0, 0.0]), np.eye(1))


@pytest.fixture(scope="module")
def vdp():
    return van_der_pol_extended()


@pytest.fixture(scope="module")
def exact_cost(vdp):
    # degree-2 cost under r=(1,1,1), q=(3,): |x|_Q + |u|^(2/3)
    return signed_power_quadratic(QR, vdp.spec.r, vdp.spec.q, 2.0)


def test_quadratic_cost_hand_value():
    c = quadratic_cost(QR)
    assert float(c.l(np.array([1.0, 2.0, 1.0]), np.array([3.0]))) == 14.0
    assert float(c.l(np.zeros(3), np.zeros(1))) == 0.0
    assert c.mu == 2.0


def test_quadratic_cost_rejects_nonstandard_weights(vdp):
    with pytest.raises(DomainError, match="signed_power_quadratic"):
        quadratic_cost(QR, spec=vdp.spec)


def test_quadratic_params_validation():
    with pytest.raises(Exception):
        QuadraticCostParams(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))
    with pytest.raises(Exception):
        QuadraticCostParams(np.diag([1.0, -1.0]), np.eye(1))


def test_case_study_cost_is_a_degree_bracket(vdp):
    c = quadratic_cost_mixed(QR, vdp.spec)
    assert (c.mu, c.mu_upper) == (2.0, 6.0)
    assert not c.exact_degree
    # the state part scales by eps^2 and the input part by eps^6
    x, u = np.array([0.3, -0.7, 0.2]), np.array([0.4])
    e = 1.7
    lhs = float(c.l(e * x, e ** 3 * u))
    assert lhs == pytest.approx(e ** 2 * float(QR.Q[0, 0] * x[0] ** 2 + x[1] ** 2) + e ** 6 * 0.16, rel=1e-13)
    with pytest.raises(ConstructionError):
        CostModel(c.stage, c.terminal, 2.0, vdp.spec)


def test_signed_power_quadratic_hand_value():
    c = signed_power_quadratic(QuadraticCostParams(np.eye(1), np.zeros((1, 1))), (2.0,), (1.0,), 4.0)
    assert float(c.l(np.array([3.0]), np.array([5.0]))) == 9.0
    assert float(c.l(np.zeros(1), np.zeros(1))) == 0.0


def test_indicator_cost():
    S = origin_set((1.0, 1.0))
    c = indicator_cost(S, 1.0)
    assert float(c.l(np.zeros(2), np.zeros(1))) == 0.0
    assert float(c.l(np.array([1.0, 0.0]), np.zeros(1))) == 1.0
    inf = indicator_cost(S, np.inf, role="terminal")
    assert float(inf.j(np.array([0.0, 2.0]))) == np.inf
    lin = linear_system(np.eye(2), np.eye(2)[:, :1])
    assert eval_cost(lin, inf, CostWeights(), 1, (1.0, 0.0), [0.0]) == np.inf
    with pytest.raises(ConstructionError):
        from homdp.costs import HomogeneousSet
        HomogeneousSet(lambda x: np.linalg.norm(x, axis=-1) <= 1.0, DilationWeights((1.0, 1.0)))


@given(st.floats(0.1, 10.0))
def test_indicator_is_dilation_invariant(eps):
    S = subspace_set((1.0, 2.0, 1.0), free=[1])
    c = indicator_cost(S, 1.0)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (20, 3))
    x[::2, [0, 2]] = 0.0
    np.testing.assert_array_equal(c.l(x * [eps, eps ** 2, eps], np.zeros((20, 1))), c.l(x, np.zeros((20, 1))))


def test_l0_cost():
    c = l0_cost((1.0,), (1.0, 1.0, 1.0))
    assert float(c.l(np.zeros(1), np.array([0.0, 3.0, 0.0]))) == 1.0
    assert float(c.l(np.zeros(1), np.zeros(3))) == 0.0
    assert float(c.l(np.zeros(1), np.array([1e-300, -2.0, 0.0]))) == 2.0


def test_combine_same_degree():
    a = quadratic_cost(QuadraticCostParams(np.eye(2), np.eye(1)))
    b = quadratic_cost(QuadraticCostParams(2 * np.eye(2), np.zeros((1, 1))))
    c = combine_costs([(a, 2), (b, 2)])
    x, u = np.array([1.0, 2.0]), np.array([1.0])
    assert float(c.l(x, u)) == float(a.l(x, u)) + float(b.l(x, u))
    with pytest.raises(DomainError):
        combine_costs([(a, 2), (b, 4)])


def test_combine_w_padded_at_w_one():
    a = quadratic_cost(QuadraticCostParams(np.eye(1), np.eye(1)))
    b = signed_power_quadratic(QuadraticCostParams(np.eye(1), np.eye(1)), (1.0,), (1.0,), 4.0)
    c = combine_costs([(a, 2.0), (b, 4.0)], mode="w_padded")
    assert c.mu == 4.0
    x, u = np.array([0.5]), np.array([0.25])
    assert float(c.l(np.array([0.5, 1.0]), u)) == pytest.approx(float(a.l(x, u) + b.l(x, u)), rel=1e-15)
    # w^2 factor on the degree-2 part
    assert float(c.l(np.array([0.5, 3.0]), u)) == pytest.approx(9 * float(a.l(x, u)) + float(b.l(x, u)))


def test_combine_empty_needs_spec():
    spec = DilationSpec((1.0,), (1.0,), 1.0)
    z = combine_costs([], spec=spec)
    assert float(z.l(np.ones(1), np.ones(1))) == 0.0
    with pytest.raises(ContractError):
        combine_costs([])


def test_eval_cost_hand_value(vdp):
    c = quadratic_cost_mixed(QR, vdp.spec)
    assert eval_cost(vdp, c, CostWeights(), 2, (1, 0, 1), [0, 0]) == 3.0
    assert eval_cost(vdp, c, CostWeights(), 2, (0, 0, 0), [0, 0]) == 0.0
    with pytest.raises(ContractError):
        eval_cost(vdp, c, CostWeights(), 3, (1, 0, 1), [0, 0])


def test_power_weight_hand_value():
    assert power_weight(4.0, 0.5, 2) == pytest.approx(np.sqrt(2.0), rel=1e-15)
    assert CostWeights(4.0, 0.5).weight(2) == pytest.approx(1.41421356, abs=1e-8)


def test_ext_mul_keeps_infinity_and_zero():
    assert float(ext_mul(0.0, np.inf)) == np.inf
    assert float(ext_mul(np.inf, 0.0)) == 0.0
    assert float(ext_mul(2.0, 3.0)) == 6.0


def test_cost_scaling_examples(vdp, exact_cost):
    assert check_cost_scaling(vdp, exact_cost, (1, 0, 1), [0, 0], 1.0, 2).residual == 0.0
    assert check_cost_scaling(vdp, exact_cost, (1, 0, 1), [0, 0], 1.2, 2).residual <= 1e-12
    l0 = l0_cost(vdp.spec.r, vdp.spec.q)
    assert check_cost_scaling(vdp, l0, (1, 0, 1), [0.3, 0], 7.0, 2).residual == 0.0


def test_value_identity_examples(vdp, exact_cost):
    assert check_value_identity(vdp, exact_cost, (1, 0, 1), [0, 0], 1.0, 2).residual == 0.0
    assert check_value_identity(vdp, exact_cost, (1, 0, 1), [0, 0], 2.0, 2).residual <= 1e-15
    lhs = eval_cost(vdp, exact_cost, CostWeights(2.0 ** -2, 3.0), 2, (2, 0, 2), [0, 0])
    assert lhs == pytest.approx(3.0, rel=1e-15)


def test_identities_refuse_bracket_costs(vdp):
    c = quadratic_cost_mixed(QR, vdp.spec)
    with pytest.raises(DomainError):
        check_value_identity(vdp, c, (1, 0, 1), [0.1, 0], 2.0, 2)
    with pytest.raises(DomainError):
        check_cost_scaling(vdp, c, (1, 0, 1), [0.1, 0], 2.0, 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.5, 2.0), st.integers(1, 3))
def test_value_identity_random_sequences(seed, eps, d):
    sys = van_der_pol_extended()
    cost = signed_power_quadratic(QR, sys.spec.r, sys.spec.q, 2.0)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 3)
    u = rng.uniform(-1, 1, (d, 1))
    assert check_value_identity(sys, cost, x, u, eps, d).residual <= 1e-9
    assert check_cost_scaling(sys, cost, x, u, eps, d).residual <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.3, 3.0))
def test_degree_zero_identity_without_weight(seed, eps):
    sys = cubic_scalar(0.5)
    cost = l0_cost(sys.spec.r, sys.spec.q)
    rng = np.random.default_rng(seed)
    x, u = rng.uniform(-1, 1, 1), rng.choice([-0.5, 0.0, 0.5], size=(3, 1))
    from homdp.dilation import dilate, scale_input_sequence
    lhs = eval_cost(sys, cost, CostWeights(1.0, 3.0), 3, dilate(sys.spec.r, eps, x),
                    scale_input_sequence(sys.spec.q, 3.0, eps, u))
    assert lhs == eval_cost(sys, cost, CostWeights(), 3, x, u)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_cost_is_monotone_in_stage(seed):
    sys = van_der_pol_extended()
    small = signed_power_quadratic(QR, sys.spec.r, sys.spec.q, 2.0)
    big = signed_power_quadratic(QuadraticCostParams(np.diag([2.0, 1.0, 0.5]), 3 * np.eye(1)),
                                 sys.spec.r, sys.spec.q, 2.0)
    rng = np.random.default_rng(seed)
    x, u = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, (2, 1))
    assert eval_cost(sys, small, CostWeights(), 2, x, u) <= eval_cost(sys, big, CostWeights(), 2, x, u)


def test_every_builtin_cost_passes_sa2(vdp, exact_cost):
    for c in (exact_cost, quadratic_cost(QR), l0_cost(vdp.spec.r, vdp.spec.q),
              indicator_cost(origin_set(vdp.spec.r), 1.0, vdp.spec.q)):
        rep = verify_cost_homogeneity(c)
        assert rep.passed and rep.max_residual <= 1e-9
