"""Homogeneous stage/terminal costs, the weighted horizon cost and its scaling identities.

Stage costs are vectorized like step maps: ``stage(x, u)`` returns an array
over the leading axes; terminal costs take ``x`` only. Values live in
``[0, inf]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dilation import (
    DilationSpec,
    DilationWeights,
    as_input_sequence,
    as_weights,
    dilate,
    dilate_power,
    scale_input_sequence,
    signed_power,
)
from .errors import ConstructionError, ContractError, DomainError
from .numerics import ext_mul, power_weight, relative_residual
from .systems import ScalingCheck, SystemModel, sample_triples, simulate

StageFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
TerminalFn = Callable[[np.ndarray], np.ndarray]


def _zero_stage(x, u):
    return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))


def _zero_terminal(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class CostModel:
    """Stage cost ``l``, terminal cost ``j`` and their homogeneity degree ``mu``.

    ``mu_upper`` declares a degree bracket instead of an exact degree: the cost
    then only satisfies ``min(e^mu, e^mu_upper) l <= l(dilated) <= max(...) l``.
    The exact identities (per-step scaling, value identity) do not apply to
    such costs, but the envelope bounds still do when ``mu_upper <= mu * nu``.
    """

    stage: StageFn
    terminal: TerminalFn
    mu: float
    spec: DilationSpec
    mu_upper: Optional[float] = None
    name: str = "cost"
    check: bool = True

    def __post_init__(self):
        n_x, n_u = len(self.spec.r), len(self.spec.q)
        l0 = float(np.asarray(self.stage(np.zeros(n_x), np.zeros(n_u))))
        j0 = float(np.asarray(self.terminal(np.zeros(n_x))))
        if l0 != 0.0 or j0 != 0.0:
            raise ConstructionError(f"{self.name}: l(0,0)={l0}, j(0)={j0}; both must be 0")
        if self.check:
            rep = verify_cost_homogeneity(self)
            if not rep.passed:
                raise ConstructionError(
                    f"{self.name}: declared degree {self.degree_label} fails the homogeneity check "
                    f"(residual {rep.max_residual:.3g})")

    @property
    def state_dim(self) -> int:
        return len(self.spec.r)

    @property
    def input_dim(self) -> int:
        return len(self.spec.q)

    @property
    def exact_degree(self) -> bool:
        return self.mu_upper is None or self.mu_upper == self.mu

    @property
    def degree_label(self) -> str:
        return f"{self.mu:g}" if self.exact_degree else f"[{self.mu:g}, {self.mu_upper:g}]"

    def l(self, x, u) -> np.ndarray:
        return np.asarray(self.stage(np.asarray(x, dtype=float), np.asarray(u, dtype=float)), dtype=float)

    def j(self, x) -> np.ndarray:
        return np.asarray(self.terminal(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class CostHomogeneityReport:
    max_residual: float
    passed: bool
    samples: int


def _scaled_residual(lhs, rhs):
    with np.errstate(invalid="ignore", over="ignore"):
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        res = np.abs(lhs - rhs) / scale
    both_inf = np.isinf(lhs) & np.isinf(rhs)
    res = np.where(both_inf, 0.0, res)
    return np.where(np.isnan(res), np.inf, res)


def verify_cost_homogeneity(cost: CostModel, samples: int = 100, tol: float = 1e-9,
                            seed: int = 3) -> CostHomogeneityReport:
    """Numeric homogeneity check of ``l`` and ``j`` (exact degree or bracket)."""
    rng = np.random.default_rng(seed)
    x, u, eps = sample_triples(rng, cost.state_dim, cost.input_dim, samples)
    # exact zeros exercise zero-pattern costs such as |u|_0
    u[rng.random(u.shape) < 0.2] = 0.0
    x[: max(1, samples // 20)] = 0.0
    r, q = cost.spec.r, cost.spec.q
    xs, us = dilate(r, eps, x), dilate(q, eps, u)
    pairs = [(cost.l(xs, us), cost.l(x, u)), (cost.j(xs), cost.j(x))]
    worst = 0.0
    for lhs, base in pairs:
        if cost.exact_degree:
            rhs = ext_mul(eps ** cost.mu, base)
            worst = max(worst, float(np.max(_scaled_residual(lhs, rhs))))
        else:
            f1, f2 = eps ** cost.mu, eps ** cost.mu_upper
            lo = ext_mul(np.minimum(f1, f2), base)
            hi = ext_mul(np.maximum(f1, f2), base)
            with np.errstate(invalid="ignore"):
                over = np.where(np.isinf(lhs) & np.isinf(hi), 0.0, np.maximum(lhs - hi, 0.0))
                under = np.where(np.isinf(lhs) & np.isinf(lo), 0.0, np.maximum(lo - lhs, 0.0))
            scale = np.maximum(1.0, np.where(np.isinf(lhs), 1.0, np.abs(lhs)))
            worst = max(worst, float(np.max(np.maximum(over, under) / scale)))
    return CostHomogeneityReport(worst, worst <= tol, samples)


@dataclass(frozen=True)
class CostWeights:
    gamma1: float = 1.0
    gamma2: float = 1.0

    def __post_init__(self):
        if not self.gamma1 > 0:
            raise DomainError("gamma1 must be positive")

    def weight(self, k: int) -> float:
        return power_weight(self.gamma1, self.gamma2, k)


@dataclass(frozen=True)
class QuadraticCostParams:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise ContractError(f"{name} must be square")
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
                raise DomainError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-10:
                raise DomainError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


def quad_form(P: np.ndarray, x) -> np.ndarray:
    """``|x|_P = x^T P x`` over the last axis."""
    x = np.asarray(x, dtype=float)
    return np.einsum("...i,ij,...j->...", x, P, x)


def quadratic_cost(params: QuadraticCostParams, mu_half: int = 1, spec: Optional[DilationSpec] = None,
                   terminal: Optional[np.ndarray] = None) -> CostModel:
    """``l(x,u) = |x|_Q + |u|_R`` of degree ``2*mu_half`` under ``r = q = mu_half*(1,...,1)``."""
    n_x, n_u = params.Q.shape[0], params.R.shape[0]
    target = float(mu_half)
    if spec is None:
        spec = DilationSpec(DilationWeights.standard(n_x, target), DilationWeights.standard(n_u, target), 1.0)
    elif any(w != target for w in spec.r.weights + spec.q.weights):
        raise DomainError(
            f"quadratic costs need r = q = {target:g}*(1,...,1); got r={spec.r.weights}, q={spec.q.weights}. "
            "Use signed_power_quadratic for other dilations.")
    Q, R = params.Q, params.R
    P = None if terminal is None else np.atleast_2d(np.asarray(terminal, dtype=float))
    return CostModel(
        lambda x, u: quad_form(Q, x) + quad_form(R, u),
        (lambda x: quad_form(P, x)) if P is not None else _zero_terminal,
        2.0 * target, spec, name="quadratic")


def quadratic_cost_mixed(params: QuadraticCostParams, spec: DilationSpec,
                         terminal: Optional[np.ndarray] = None) -> CostModel:
    """Plain quadratic cost under arbitrary weights, declared with its degree bracket.

    Monomial ``x_i x_j`` has degree ``r_i + r_j``; the bracket spans the
    smallest and largest degree among the nonzero entries of ``Q``, ``R`` (and
    the terminal matrix).
    """
    Q, R = params.Q, params.R
    degs = []
    for M, w in ((Q, spec.r.array), (R, spec.q.array)) + (((np.atleast_2d(terminal), spec.r.array),)
                                                          if terminal is not None else ()):
        ii, jj = np.nonzero(M)
        degs.extend((w[ii] + w[jj]).tolist())
    lo, hi = (min(degs), max(degs)) if degs else (0.0, 0.0)
    P = None if terminal is None else np.atleast_2d(np.asarray(terminal, dtype=float))
    return CostModel(
        lambda x, u: quad_form(Q, x) + quad_form(R, u),
        (lambda x: quad_form(P, x)) if P is not None else _zero_terminal,
        lo, spec, mu_upper=None if hi == lo else hi, name="quadratic_mixed")


def signed_power_quadratic(params: QuadraticCostParams, r, q, mu: float) -> CostModel:
    """Quadratic form of pre-warped coordinates ``sign(x_i)|x_i|**(mu/(2 r_i))``; degree ``mu``."""
    r, q = as_weights(r), as_weights(q)
    if params.Q.shape[0] != len(r) or params.R.shape[0] != len(q):
        raise ContractError("Q/R dimensions do not match the dilation weights")
    if not mu > 0:
        raise DomainError("mu must be positive")
    ex = mu / (2.0 * r.array)
    eu = mu / (2.0 * q.array)
    Q, R = params.Q, params.R

    def stage(x, u):
        return quad_form(Q, np.sign(x) * np.abs(x) ** ex) + quad_form(R, np.sign(u) * np.abs(u) ** eu)

    spec = DilationSpec(r, q, 1.0, mu)
    return CostModel(stage, _zero_terminal, float(mu), spec, name="signed_power_quadratic")


@dataclass(frozen=True)
class HomogeneousSet:
    """A set closed under ``lambda^t``; ``contains`` is vectorized over leading axes."""

    contains: Callable[[np.ndarray], np.ndarray]
    weights: DilationWeights
    name: str = "S"

    def __post_init__(self):
        object.__setattr__(self, "weights", as_weights(self.weights))
        rng = np.random.default_rng(4)
        n = len(self.weights)
        x = rng.uniform(-2, 2, size=(64, n))
        x[0] = 0.0
        # members of coordinate subspaces show up by zeroing random coordinates
        x[rng.random(x.shape) < 0.5] = 0.0
        eps = np.exp(rng.uniform(np.log(0.1), np.log(10), size=64))
        a = np.asarray(self.contains(x), dtype=bool)
        b = np.asarray(self.contains(dilate(self.weights, eps, x)), dtype=bool)
        if np.any(a != b):
            raise ConstructionError(f"set {self.name} is not closed under its dilation")


def origin_set(weights) -> HomogeneousSet:
    w = as_weights(weights)
    return HomogeneousSet(lambda x: np.all(np.asarray(x) == 0.0, axis=-1), w, name="{0}")


def subspace_set(weights, free: Sequence[int]) -> HomogeneousSet:
    """``vect(e_i : i in free)``: every coordinate outside ``free`` is zero."""
    w = as_weights(weights)
    pinned = [i for i in range(len(w)) if i not in set(free)]
    return HomogeneousSet(lambda x: np.all(np.asarray(x)[..., pinned] == 0.0, axis=-1), w,
                          name=f"vect{tuple(free)}")


def _indicator(S: HomogeneousSet, c: float):
    def fn(x):
        inside = np.asarray(S.contains(np.asarray(x, dtype=float)), dtype=bool)
        return np.where(inside, 0.0, c)
    return fn


def indicator_cost(S: HomogeneousSet, c: float = 1.0, q=None, role: str = "stage") -> CostModel:
    """``delta^c_S`` (0 on ``S``, ``c`` off it) as a stage or terminal cost of degree 0."""
    if not (c >= 0):
        raise DomainError("indicator value must be in [0, inf]")
    q = as_weights(q if q is not None else (1.0,))
    spec = DilationSpec(S.weights, q, 1.0, 0.0)
    ind = _indicator(S, float(c))
    if role == "stage":
        return CostModel(lambda x, u: ind(x) + 0.0 * _zero_stage(x, u), _zero_terminal, 0.0, spec,
                         name=f"delta^{c:g}_{S.name}")
    if role == "terminal":
        return CostModel(_zero_stage, ind, 0.0, spec, name=f"delta^{c:g}_{S.name} (terminal)")
    raise DomainError(f"role must be 'stage' or 'terminal', got {role!r}")


def l0_cost(r, q) -> CostModel:
    """``l(x,u) = |u|_0``, the count of exactly nonzero input components."""
    spec = DilationSpec(as_weights(r), as_weights(q), 1.0, 0.0)
    return CostModel(lambda x, u: np.count_nonzero(np.asarray(u) != 0.0, axis=-1).astype(float)
                     + _zero_stage(x, u), _zero_terminal, 0.0, spec, name="l0")


def combine_costs(parts: Sequence[tuple[CostModel, float]], mode: str = "same_degree",
                  spec: Optional[DilationSpec] = None) -> CostModel:
    """Sum homogeneous costs.

    ``same_degree`` requires equal degrees. ``w_padded`` works on the state
    extended by a last coordinate ``w`` (dilation weight 1) and multiplies
    part ``i`` by ``w**(mu - mu_i)`` with ``mu = max mu_i``.
    """
    parts = list(parts)
    if not parts:
        if spec is None:
            raise ContractError("an empty combination needs an explicit spec")
        return CostModel(_zero_stage, _zero_terminal, 0.0, spec, name="zero")
    degrees = [float(m) for _, m in parts]
    base = parts[0][0].spec
    if mode == "same_degree":
        if len(set(degrees)) != 1:
            raise DomainError(f"mixed degrees {degrees} in same_degree mode")
        models = [c for c, _ in parts]

        def stage(x, u):
            return sum(c.l(x, u) for c in models)

        def terminal(x):
            return sum(c.j(x) for c in models)

        return CostModel(stage, terminal, degrees[0], spec or base, name="+".join(c.name for c in models))
    if mode != "w_padded":
        raise DomainError(f"unknown combination mode {mode!r}")
    mu = max(degrees)
    n_x = len(base.r)
    models = [(c, mu - m) for c, m in parts]

    def wpow(w, e):
        return np.ones_like(w) if e == 0 else (w ** int(e) if float(e).is_integer() else signed_power(w, e))

    def stage(xw, u):
        x, w = xw[..., :n_x], xw[..., n_x]
        return sum(ext_mul(wpow(w, e), c.l(x, u)) for c, e in models)

    def terminal(xw):
        x, w = xw[..., :n_x], xw[..., n_x]
        return sum(ext_mul(wpow(w, e), c.j(x)) for c, e in models)

    ext = DilationSpec(base.r.append(1.0), base.q, base.nu, mu)
    return CostModel(stage, terminal, mu, spec or ext, name="w_padded(" + "+".join(c.name for c, _ in parts) + ")")


# --- horizon cost and scaling identities ---

def stage_costs_along(sys: SystemModel, cost: CostModel, states: np.ndarray, u: np.ndarray, d: int):
    """Per-step ``l(phi(k), u_k)`` for ``k < d`` and ``j(phi(d))``."""
    with np.errstate(over="ignore", invalid="ignore"):
        stages = cost.l(states[:d], u[:d]) if d > 0 else np.zeros(0)
        term = float(cost.j(states[d]))
    return np.asarray(stages, dtype=float), term


def eval_cost(sys: SystemModel, cost: CostModel, weights: CostWeights, d: int, x, u) -> float:
    """``J_{d,g1,g2}(x,u) = sum_k g1**(g2**k) l(phi(k), u_k) + g1**(g2**d) j(phi(d))``."""
    u = as_input_sequence(u, sys.input_dim)
    if d > u.shape[0]:
        raise ContractError(f"horizon d={d} exceeds input sequence length {u.shape[0]}")
    traj = simulate(sys, x, u, d)
    stages, term = stage_costs_along(sys, cost, traj.states, traj.inputs, d)
    total = 0.0
    for k in range(d):
        total += float(ext_mul(weights.weight(k), stages[k]))
    total += float(ext_mul(weights.weight(d), term))
    if np.isnan(total):
        raise FloatingPointError("cost evaluation produced NaN")
    return total


def _require_exact(cost: CostModel):
    if not cost.exact_degree:
        raise DomainError(f"{cost.name} only has a degree bracket {cost.degree_label}; "
                          "exact scaling identities do not apply")


def check_cost_scaling(sys: SystemModel, cost: CostModel, x, u, eps: float, d: int) -> ScalingCheck:
    """Per-step identity ``l(phi(k, lx, Lu), l^q(e)^(nu^k) u_k) == e^(mu nu^k) l(phi(k,x,u), u_k)`` and its terminal analogue."""
    _require_exact(cost)
    spec = sys.spec
    u = as_input_sequence(u, sys.input_dim)
    if d > u.shape[0]:
        raise ContractError(f"horizon d={d} exceeds input sequence length {u.shape[0]}")
    us = scale_input_sequence(spec.q, spec.nu, eps, u[:d])
    base = simulate(sys, x, u, d).states
    scaled = simulate(sys, dilate(spec.r, eps, np.asarray(x, dtype=float)), us, d).states
    worst, last = 0.0, -1
    for k in range(d + 1):
        with np.errstate(over="ignore"):
            factor = float(np.exp(cost.mu * spec.nu ** k * np.log(eps)))
        if k < d:
            lhs = float(cost.l(scaled[k], us[k]))
            rhs = float(ext_mul(factor, cost.l(base[k], u[k])))
        else:
            lhs = float(cost.j(scaled[k]))
            rhs = float(ext_mul(factor, cost.j(base[k])))
        if not (np.isfinite(factor) and factor > 0 and np.all(np.isfinite(scaled[k]))
                and np.all(np.isfinite(base[k]))):
            break
        worst = max(worst, relative_residual(lhs, rhs))
        last = k
    return ScalingCheck(worst, max(last, 0), d)


def check_value_identity(sys: SystemModel, cost: CostModel, x, u, eps: float, d: int) -> ScalingCheck:
    """``J_{d, eps^-mu, nu}(lambda^r(eps) x, Lambda^q_nu(eps) u) == J_{d,1,1}(x, u)`` for any ``u``."""
    _require_exact(cost)
    spec = sys.spec
    u = as_input_sequence(u, sys.input_dim)
    if d > u.shape[0]:
        raise ContractError(f"horizon d={d} exceeds input sequence length {u.shape[0]}")
    safe = d
    for k in range(d + 1):
        if abs(cost.mu * spec.nu ** k * np.log(eps)) > 700:
            safe = k - 1
            break
    safe = max(safe, 0)
    us = scale_input_sequence(spec.q, spec.nu, eps, u[:safe])
    xs = dilate(spec.r, eps, np.asarray(x, dtype=float))
    lhs = eval_cost(sys, cost, CostWeights(float(eps) ** (-cost.mu), spec.nu), safe, xs, us)
    rhs = eval_cost(sys, cost, CostWeights(1.0, 1.0), safe, x, u[:safe])
    return ScalingCheck(relative_residual(lhs, rhs), safe, d)
