"""Homogeneous discrete-time systems ``x+ = f(x, u)``.

Step maps are vectorized: ``step(x, u)`` takes ``x`` of shape ``(..., n_x)``
and ``u`` of shape ``(..., n_u)`` and returns ``(..., n_x)``.
"""

from __future__ import annotations

import math
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
from .numerics import relative_residual

StepFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemModel:
    state_dim: int
    input_dim: int
    step: StepFn
    spec: Optional[DilationSpec] = None
    name: str = "system"

    def __post_init__(self):
        if self.state_dim < 1 or self.input_dim < 1:
            raise ContractError("state and input dimensions must be positive")
        if self.spec is not None:
            if len(self.spec.r) != self.state_dim or len(self.spec.q) != self.input_dim:
                raise ContractError("dilation weights do not match system dimensions")
        out = np.asarray(self.step(np.zeros(self.state_dim), np.zeros(self.input_dim)), dtype=float)
        if out.shape != (self.state_dim,):
            raise ContractError(f"step returned shape {out.shape}, expected ({self.state_dim},)")
        # forced by homogeneity of f
        if np.any(out != 0.0):
            raise ConstructionError(f"{self.name}: f(0, 0) = {out} is not zero")

    def __call__(self, x, u) -> np.ndarray:
        return np.asarray(self.step(np.asarray(x, dtype=float), np.asarray(u, dtype=float)), dtype=float)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


def simulate(sys: SystemModel, x0, u, k: Optional[int] = None) -> Trajectory:
    """Solution ``phi(0..k, x0, u)``; ``k`` defaults to the sequence length."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.state_dim,):
        raise ContractError(f"initial state shape {x0.shape} != ({sys.state_dim},)")
    u = as_input_sequence(u, sys.input_dim)
    if k is None:
        k = u.shape[0]
    if k < 0 or k > u.shape[0]:
        raise ContractError(f"horizon k={k} exceeds input sequence length {u.shape[0]}")
    states = np.empty((k + 1, sys.state_dim))
    states[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(k):
            states[j + 1] = sys(states[j], u[j])
    return Trajectory(states, u[:k])


def simulate_batch(sys: SystemModel, x0: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized rollouts: ``x0`` is ``(B, n_x)``, ``u`` is ``(B, d, n_u)``; returns ``(B, d+1, n_x)``."""
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    d = u.shape[1]
    out = np.empty((x0.shape[0], d + 1, sys.state_dim))
    out[:, 0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(d):
            out[:, j + 1] = sys(out[:, j], u[:, j])
    return out


@dataclass(frozen=True)
class HomogeneityReport:
    max_residual: float
    passed: bool
    samples: int
    worst_x: Optional[np.ndarray] = None
    worst_u: Optional[np.ndarray] = None
    worst_eps: Optional[float] = None
    worst_component: Optional[int] = None


def sample_triples(rng: np.random.Generator, n_x: int, n_u: int, samples: int,
                   state_box: float = 2.0, input_box: float = 2.0,
                   eps_range: tuple[float, float] = (0.1, 10.0)):
    x = rng.uniform(-state_box, state_box, size=(samples, n_x))
    u = rng.uniform(-input_box, input_box, size=(samples, n_u))
    lo, hi = np.log(eps_range[0]), np.log(eps_range[1])
    eps = np.exp(rng.uniform(lo, hi, size=samples))
    return x, u, eps


def _componentwise_residual(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        res = np.abs(lhs - rhs) / scale
    return np.where(np.isnan(res), np.inf, res)


def verify_dynamics_homogeneity(sys: SystemModel, samples: int = 1000, tol: float = 1e-9,
                                seed: int = 0, input_box: float = 2.0,
                                spec: Optional[DilationSpec] = None) -> HomogeneityReport:
    """Check ``f(lambda^r(eps) x, lambda^q(eps) u) == lambda^r(eps)^nu f(x, u)`` on random samples."""
    if samples < 1:
        raise ContractError("samples must be >= 1")
    spec = spec or sys.spec
    if spec is None:
        raise ContractError(f"{sys.name} carries no dilation spec to verify")
    rng = np.random.default_rng(seed)
    x, u, eps = sample_triples(rng, sys.state_dim, sys.input_dim, samples, input_box=input_box)
    lhs = sys(dilate(spec.r, eps, x), dilate(spec.q, eps, u))
    rhs = dilate_power(spec.r, eps, spec.nu, sys(x, u))
    res = _componentwise_residual(lhs, rhs)
    flat = int(np.argmax(res))
    s, c = np.unravel_index(flat, res.shape)
    worst = float(res[s, c])
    return HomogeneityReport(worst, worst <= tol, samples, x[s], u[s], float(eps[s]), int(c))


@dataclass(frozen=True)
class ScalingCheck:
    """Residual of a scaling identity, evaluated up to ``horizon`` steps."""

    residual: float
    horizon: int
    requested: int

    @property
    def capped(self) -> bool:
        return self.horizon < self.requested


def check_solution_scaling(sys: SystemModel, x, u, eps: float, k: int) -> ScalingCheck:
    """Compare ``phi(j, lambda^r(eps) x, Lambda^q_nu(eps) u)`` with ``lambda^r(eps)^(nu^j) phi(j, x, u)``.

    Both sides are simulated independently for ``j = 0..k``. If ``eps**(nu**j)``
    or either trajectory leaves the float range the check stops at the largest
    safe ``j``.
    """
    spec = sys.spec
    if spec is None:
        raise ContractError(f"{sys.name} carries no dilation spec")
    u = as_input_sequence(u, sys.input_dim)
    if k > u.shape[0]:
        raise ContractError(f"k={k} exceeds input sequence length {u.shape[0]}")
    x = np.asarray(x, dtype=float)
    base = simulate(sys, x, u, k).states
    scaled = simulate(sys, dilate(spec.r, eps, x), scale_input_sequence(spec.q, spec.nu, eps, u[:k]), k).states
    worst = 0.0
    last = -1
    for j in range(k + 1):
        with np.errstate(over="ignore"):
            rhs = dilate_power(spec.r, eps, spec.nu ** j, base[j])
        lhs = scaled[j]
        if not (np.all(np.isfinite(rhs)) and np.all(np.isfinite(lhs))):
            break
        worst = max(worst, relative_residual(lhs, rhs))
        last = j
    return ScalingCheck(worst, max(last, 0), k)


# --- auxiliary-variable extension for sums of homogeneous terms ---

@dataclass(frozen=True)
class MonomialComponent:
    """One homogeneous term ``g_{i,j}`` of row ``row`` with declared degree ``degree``."""

    row: int
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    degree: float
    label: str = ""

    def __call__(self, x, u):
        return self.fn(x, u)


def verify_component(comp: MonomialComponent, r, q, samples: int = 200, tol: float = 1e-9,
                     seed: int = 1) -> float:
    """Relative residual of ``g(lambda^r x, lambda^q u) == eps**degree * g(x, u)``; raises if above ``tol``."""
    r, q = as_weights(r), as_weights(q)
    rng = np.random.default_rng(seed)
    x, u, eps = sample_triples(rng, len(r), len(q), samples)
    lhs = np.asarray(comp(dilate(r, eps, x), dilate(q, eps, u)), dtype=float)
    rhs = eps ** comp.degree * np.asarray(comp(x, u), dtype=float)
    res = float(np.max(_componentwise_residual(lhs[:, None], rhs[:, None])))
    if res > tol:
        raise ConstructionError(
            f"component {comp.label or comp.row} is not homogeneous of degree {comp.degree} (residual {res:.3g})")
    return res


def _w_power(w: np.ndarray, e: float) -> np.ndarray:
    if e == 0:
        return np.ones_like(w)
    if float(e).is_integer():
        return w ** int(e)
    return signed_power(w, e)


def extend_system(components: Sequence[MonomialComponent], r, q, nu: Optional[float] = None,
                  mode: str = "case_study", name: str = "extended") -> SystemModel:
    """Append ``w+ = sign(w)|w|**nu`` and pad each term with a power of ``w``.

    ``mode="prop2"`` gives ``w`` the dilation weight ``1/nu`` and exponents
    ``(r_i nu - deg) nu``; ``nu`` defaults to ``1 + max(deg / r_i)``.
    ``mode="case_study"`` gives ``w`` weight 1 and exponents ``r_i nu - deg``.
    The result is checked for homogeneity before being returned.
    """
    r, q = as_weights(r), as_weights(q)
    n_x, n_u = len(r), len(q)
    if mode not in ("prop2", "case_study"):
        raise DomainError(f"unknown extension mode {mode!r}")
    comps = list(components)
    for c in comps:
        if not 0 <= c.row < n_x:
            raise ContractError(f"component row {c.row} out of range for n_x={n_x}")
        verify_component(c, r, q)
    ratio = max((c.degree / r.weights[c.row] for c in comps), default=0.0)
    if nu is None:
        if mode != "prop2":
            raise ContractError("nu is required in case_study mode")
        nu = 1.0 + ratio
    nu = float(nu)
    if nu < ratio - 1e-12:
        raise DomainError(f"nu={nu} < max(deg/r_i)={ratio}: negative w-exponent")
    rows: list[list[tuple[float, MonomialComponent]]] = [[] for _ in range(n_x)]
    for c in comps:
        e = r.weights[c.row] * nu - c.degree
        if abs(e) < 1e-12:
            e = 0.0
        if e < 0:
            raise DomainError(f"negative w-exponent {e} in row {c.row}")
        rows[c.row].append((e * nu if mode == "prop2" else e, c))
    w_weight = 1.0 / nu if mode == "prop2" else 1.0

    def step(xw, u):
        xw = np.asarray(xw, dtype=float)
        x, w = xw[..., :n_x], xw[..., n_x]
        out = np.empty(np.broadcast_shapes(xw.shape[:-1], np.shape(u)[:-1]) + (n_x + 1,))
        for i in range(n_x):
            acc = np.zeros(out.shape[:-1])
            for e, c in rows[i]:
                acc = acc + _w_power(w, e) * c(x, u)
            out[..., i] = acc
        out[..., n_x] = signed_power(w, nu)
        return out

    spec = DilationSpec(r.append(w_weight), q, nu)
    sys = SystemModel(n_x + 1, n_u, step, spec, name=f"{name}[{mode}]")
    report = verify_dynamics_homogeneity(sys, samples=200, tol=1e-9, seed=2)
    if not report.passed:
        raise ConstructionError(
            f"extended system fails homogeneity in row {report.worst_component} "
            f"(residual {report.max_residual:.3g})")
    return sys


def sum_of_components(components: Sequence[MonomialComponent], n_x: int, n_u: int,
                      name: str = "original") -> SystemModel:
    """The un-extended map ``f_i = sum_j g_{i,j}``, evaluated in the same term order as :func:`extend_system`."""
    comps = list(components)

    def step(x, u):
        x = np.asarray(x, dtype=float)
        out = np.empty(np.broadcast_shapes(x.shape[:-1], np.shape(u)[:-1]) + (n_x,))
        for i in range(n_x):
            acc = np.zeros(out.shape[:-1])
            for c in comps:
                if c.row == i:
                    acc = acc + 1.0 * c(x, u)
            out[..., i] = acc
        return out

    return SystemModel(n_x, n_u, step, None, name=name)


@dataclass(frozen=True)
class WMatch:
    residual: float
    w_deviation: float


def trajectory_match_with_w(sys_original: SystemModel, sys_extended: SystemModel, x0, u) -> WMatch:
    """Run the extended system from ``(x0, w=1)`` and compare its leading components to the original."""
    x0 = np.asarray(x0, dtype=float)
    u = as_input_sequence(u, sys_original.input_dim)
    if u.shape[0] == 0:
        return WMatch(0.0, 0.0)
    orig = simulate(sys_original, x0, u).states
    ext = simulate(sys_extended, np.append(x0, 1.0), u).states
    n = sys_original.state_dim
    return WMatch(float(np.max(np.abs(orig - ext[:, :n]))), float(np.max(np.abs(ext[:, n] - 1.0))))


# --- built-in systems ---

def van_der_pol(a: float = 1.0, b: float = 1.0, T: float = 1.0) -> SystemModel:
    """Euler-discretized van der Pol oscillator (not homogeneous)."""

    def step(x, u):
        x1, x2 = x[..., 0], x[..., 1]
        u0 = np.asarray(u)[..., 0]
        return np.stack([x1 + T * x2, x2 + T * (a * (1 - x1 ** 2) * x2 - b * x1 + u0)], axis=-1)

    return SystemModel(2, 1, step, None, name="van_der_pol")


def van_der_pol_extended(a: float = 1.0, b: float = 1.0, T: float = 1.0,
                         drop_x3_in_row1: bool = False) -> SystemModel:
    """Van der Pol with the auxiliary state ``x3``; homogeneous with ``r=(1,1,1)``, ``q=(3,)``, ``nu=3``.

    ``drop_x3_in_row1`` removes the ``x3**2`` factor from the first row, which
    breaks homogeneity; kept for negative tests.
    """

    def step(x, u):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        u0 = np.asarray(u)[..., 0]
        s = x3 ** 2
        row1 = (x1 + T * x2) if drop_x3_in_row1 else (x1 * s + T * x2 * s)
        return np.stack([
            row1,
            x2 * s + T * a * (s - x1 ** 2) * x2 - T * b * x1 * s + T * u0,
            x3 ** 3,
        ], axis=-1)

    spec = DilationSpec(DilationWeights((1.0, 1.0, 1.0)), DilationWeights((3.0,)), 3.0)
    return SystemModel(3, 1, step, spec, name="van_der_pol_extended")


def van_der_pol_components(a: float = 1.0, b: float = 1.0, T: float = 1.0) -> list[MonomialComponent]:
    """Homogeneous terms of the original van der Pol rows under ``r=(1,1)``, ``q=(3,)``."""
    return [
        MonomialComponent(0, lambda x, u: x[..., 0], 1.0, "x1"),
        MonomialComponent(0, lambda x, u: T * x[..., 1], 1.0, "T x2"),
        MonomialComponent(1, lambda x, u: x[..., 1], 1.0, "x2"),
        MonomialComponent(1, lambda x, u: T * a * x[..., 1], 1.0, "T a x2"),
        MonomialComponent(1, lambda x, u: -T * a * x[..., 0] ** 2 * x[..., 1], 3.0, "-T a x1^2 x2"),
        MonomialComponent(1, lambda x, u: -T * b * x[..., 0], 1.0, "-T b x1"),
        MonomialComponent(1, lambda x, u: T * np.asarray(u)[..., 0], 3.0, "T u"),
    ]


def linear_system(A, B, name: str = "linear") -> SystemModel:
    """``x+ = A x + B u``; homogeneous of degree 1 under standard unit weights."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n_x, n_u = B.shape
    if A.shape != (n_x, n_x):
        raise ContractError(f"A has shape {A.shape}, expected ({n_x}, {n_x})")

    def step(x, u):
        return np.asarray(x) @ A.T + np.asarray(u) @ B.T

    spec = DilationSpec(DilationWeights.standard(n_x), DilationWeights.standard(n_u), 1.0)
    return SystemModel(n_x, n_u, step, spec, name=name)


def cubic_scalar(c: float = 1.0) -> SystemModel:
    """``x+ = c x**3 + u`` with ``r=(1,)``, ``q=(3,)``, ``nu=3``."""

    def step(x, u):
        return c * np.asarray(x) ** 3 + np.asarray(u)

    spec = DilationSpec(DilationWeights((1.0,)), DilationWeights((3.0,)), 3.0)
    return SystemModel(1, 1, step, spec, name="cubic_scalar")


def max_safe_horizon(eps: float, nu: float, weight: float, limit: float = 700.0) -> int:
    """Largest ``k`` with ``|log(eps) * weight * nu**k| <= limit``."""
    le = abs(math.log(eps)) * weight
    if le == 0 or nu <= 1:
        return 10 ** 6
    return max(0, int(math.floor(math.log(limit / le) / math.log(nu))))
