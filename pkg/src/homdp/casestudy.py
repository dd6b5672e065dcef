"""Extended van der Pol study: LQ-based V0, homogeneous VI against grid VI, scaling demos."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import homvi
from .classic_vi import GridValueTable, brute_force_value, scaled_input_grids
from .costs import (
    CostModel,
    CostWeights,
    QuadraticCostParams,
    check_cost_scaling,
    check_value_identity,
    eval_cost,
    quad_form,
    quadratic_cost_mixed,
    verify_cost_homogeneity,
)
from .dilation import dilate, scale_input_sequence
from .errors import ContractError, DomainError
from .homvi import ValueEnvelope
from .manifold import project_many
from .numerics import relative_residual
from .systems import SystemModel, check_solution_scaling, van_der_pol_extended, verify_dynamics_homogeneity

# LQ cost matrix of the linearized oscillator, rounded to one decimal and padded with a zero x3 row/column
REFERENCE_P = np.array([[6.8, 4.0, 0.0], [4.0, 11.5, 0.0], [0.0, 0.0, 0.0]])


def case_study_system(a: float = 1.0, b: float = 1.0, T: float = 1.0) -> SystemModel:
    return van_der_pol_extended(a, b, T)


def case_study_cost(sys: SystemModel, Q=None, R=None) -> CostModel:
    """``|x|_Q + |u|_R`` with ``Q = diag(1, 1, 0)``, ``R = 1`` by default (degree bracket ``[2, 6]``)."""
    Q = np.diag([1.0, 1.0, 0.0]) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(1) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
    return quadratic_cost_mixed(QuadraticCostParams(Q, R), sys.spec)


def v0_quadratic(P=REFERENCE_P) -> Callable[[np.ndarray], np.ndarray]:
    P = np.asarray(P, dtype=float)
    return lambda x: quad_form(P, x)


# --- LQ baseline ---

def linearized_van_der_pol(a: float = 1.0, b: float = 1.0, T: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian of the Euler step at the origin."""
    A = np.array([[1.0, T], [-T * b, 1.0 + T * a]])
    B = np.array([[0.0], [T]])
    return A, B


@dataclass(frozen=True)
class RiccatiResult:
    P: np.ndarray
    iterations: int
    step_change: float
    converged: bool


def riccati_iteration(A, B, Q, R, tol: float = 1e-10, max_iter: int = 10_000) -> RiccatiResult:
    """Fixed-point iteration of the discrete Riccati map from ``P = Q``."""
    A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R))
    P = Q.copy()
    change = np.inf
    for k in range(1, max_iter + 1):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        nxt = Q + A.T @ P @ A - A.T @ P @ B @ K
        nxt = 0.5 * (nxt + nxt.T)
        change = float(np.max(np.abs(nxt - P)))
        P = nxt
        if change <= tol * max(1.0, float(np.max(np.abs(P)))):
            return RiccatiResult(P, k, change, True)
    return RiccatiResult(P, max_iter, change, False)


def embed_state_matrix(P2: np.ndarray, n: int = 3) -> np.ndarray:
    out = np.zeros((n, n))
    k = P2.shape[0]
    out[:k, :k] = P2
    return out


@dataclass(frozen=True)
class RiccatiReport:
    P: np.ndarray
    iterations: int
    converged: bool
    max_deviation: float


def riccati_report(a: float = 1.0, b: float = 1.0, T: float = 1.0, reference=REFERENCE_P) -> RiccatiReport:
    A, B = linearized_van_der_pol(a, b, T)
    res = riccati_iteration(A, B, np.eye(2), np.eye(1))
    P3 = embed_state_matrix(res.P)
    return RiccatiReport(P3, res.iterations, res.converged, float(np.max(np.abs(P3 - np.asarray(reference)))))


# --- error surfaces ---

@dataclass(frozen=True)
class ErrorSurface:
    states: np.ndarray
    classic: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def diff_lower(self) -> np.ndarray:
        return self.classic - self.lower

    @property
    def diff_upper(self) -> np.ndarray:
        return self.upper - self.classic

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "x3", "classic", "lower", "upper", "diff_lower", "diff_upper"])
            dl, du = self.diff_lower, self.diff_upper
            for k in range(self.states.shape[0]):
                w.writerow([repr(float(v)) for v in (*self.states[k], self.classic[k], self.lower[k],
                                                     self.upper[k], dl[k], du[k])])
        return path


def error_surface(env: ValueEnvelope, table: GridValueTable, pointwise: Optional[tuple] = None) -> ErrorSurface:
    """Envelopes against the grid table at the grid nodes.

    ``pointwise=(prev_env, sys, cost)`` re-solves the backup at each projected
    base point instead of reading the node table (a diagnostic without lattice
    interpolation error).
    """
    X = table.grid.nodes
    if pointwise is None:
        lo, hi = homvi.query_both(env, X)
    else:
        prev, sys, cost = pointwise
        if prev.iteration + 1 != env.iteration:
            raise ContractError("pointwise evaluation needs the envelope one iteration earlier")
        lo, hi = np.zeros(X.shape[0]), np.zeros(X.shape[0])
        nz = ~np.all(X == 0.0, axis=1)
        eps, base = project_many(env.spec.r, env.grid.radius, X[nz])
        blo, bhi = homvi.pointwise_backup(prev, sys, cost, base)
        t = np.log(eps)
        a, b = env.mu * t, env.mu * env.nu ** env.iteration * t
        lo[nz] = np.exp(np.minimum(a, b)) * blo
        hi[nz] = np.exp(np.maximum(a, b)) * bhi
    return ErrorSurface(X, table.values.copy(), lo, hi)


@dataclass(frozen=True)
class SurfaceSummary:
    samples: int
    lower_violations: int
    upper_violations: int
    min_diff_lower: float
    min_diff_upper: float
    annulus: tuple[float, float]
    mean_abs_lower_in: float
    mean_abs_lower_out: float
    mean_abs_upper_in: float
    mean_abs_upper_out: float
    origin_diff_lower: float
    origin_diff_upper: float
    violating_samples: int

    @property
    def satisfied_fraction(self) -> float:
        return 1.0 - self.violating_samples / float(self.samples) if self.samples else 1.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize(surface: ErrorSurface, annulus: tuple[float, float] = (1.0, 1.25), rtol: float = 1e-6,
              violation_mask: bool = False):
    """Sandwich counts, annulus statistics on ``|(x1, x2)|`` and the diffs at the sample nearest the origin."""
    V = surface.classic
    dl, du = surface.diff_lower, surface.diff_upper
    slack = rtol * (1.0 + np.abs(V))
    rad = np.hypot(surface.states[:, 0], surface.states[:, 1])
    inside = (rad >= annulus[0]) & (rad <= annulus[1])
    o = int(np.argmin(rad))
    bad = (dl < -slack) | (du < -slack)
    s = SurfaceSummary(
        V.shape[0], int(np.sum(dl < -slack)), int(np.sum(du < -slack)), float(dl.min()), float(du.min()),
        tuple(annulus), float(np.mean(np.abs(dl[inside]))), float(np.mean(np.abs(dl[~inside]))),
        float(np.mean(np.abs(du[inside]))), float(np.mean(np.abs(du[~inside]))), float(dl[o]), float(du[o]),
        int(np.sum(bad)))
    if violation_mask:
        return s, bad
    return s


def violation_cell_distance(env: ValueEnvelope, states: np.ndarray) -> np.ndarray:
    """Distance in cells from each state's base point to the nearest lattice line (0 on a line, 0.5 at a cell centre)."""
    _, base = project_many(env.spec.r, env.grid.radius, states)
    az, el = env.grid.angles(base, env.config.mirror_x3)
    h_az, h_el = env.grid.cell_size
    fa = (az + np.pi) / h_az
    fe = el / h_el
    da = np.abs(fa - np.rint(fa))
    de = np.abs(fe - np.rint(fe))
    return np.minimum(da, de)


# --- scaling demo ---

@dataclass(frozen=True)
class ScaleDemoReport:
    x: np.ndarray
    eps: float
    horizon: int
    exact_degree: bool
    supplied_lhs: float
    supplied_rhs: float
    supplied_residual: float
    optimum_here: Optional[float] = None
    optimum_there: Optional[float] = None
    transferred_cost: Optional[float] = None
    same_argmin: Optional[bool] = None
    transfer_residual: Optional[float] = None


def scale_demo(sys: SystemModel, cost: CostModel, x, eps: float, horizon: int, u=None,
               input_grid=None) -> ScaleDemoReport:
    """Both sides of ``J_{d,eps^-mu,nu}(lambda x, Lambda u) = J_{d,1,1}(x, u)``, plus the quantized optimality transfer.

    For costs with only a degree bracket the identity is evaluated but not
    guaranteed (it still holds whenever the inputs vanish).
    """
    spec = sys.spec
    x = np.asarray(x, dtype=float)
    u = np.zeros((horizon, sys.input_dim)) if u is None else np.asarray(u, dtype=float).reshape(horizon, -1)
    mu = cost.mu
    xs = dilate(spec.r, eps, x)
    scaled_w = CostWeights(float(eps) ** (-mu), spec.nu)
    lhs = eval_cost(sys, cost, scaled_w, horizon, xs, scale_input_sequence(spec.q, spec.nu, eps, u))
    rhs = eval_cost(sys, cost, CostWeights(), horizon, x, u)
    fields = {}
    if input_grid is not None:
        here = brute_force_value(sys, cost, x, input_grid, horizon)
        grids = scaled_input_grids(spec.q, spec.nu, eps, input_grid, horizon)
        there = brute_force_value(sys, cost, xs, grids, horizon, weights=scaled_w)
        ustar = scale_input_sequence(spec.q, spec.nu, eps, here.sequence)
        moved = eval_cost(sys, cost, scaled_w, horizon, xs, ustar)
        fields = dict(optimum_here=here.value, optimum_there=there.value, transferred_cost=moved,
                      same_argmin=bool(np.allclose(there.sequence, ustar, rtol=1e-12, atol=0.0)),
                      transfer_residual=max(relative_residual(there.value, here.value),
                                            relative_residual(moved, here.value)))
    return ScaleDemoReport(x, float(eps), horizon, cost.exact_degree, lhs, rhs, relative_residual(lhs, rhs),
                           **fields)


# --- verification battery ---

@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "n/a"
    residual: float
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "fail"


def verify_all(sys: SystemModel, cost: CostModel, v0: Optional[Callable] = None,
               seed: int = 0, samples: int = 100, tol: float = 1e-9) -> list[CheckResult]:
    """Homogeneity of ``f``, ``l``, ``j`` and ``V0``, and the trajectory/cost/value scaling identities."""
    rng = np.random.default_rng(seed)
    out = []
    rep = verify_dynamics_homogeneity(sys, samples=1000, tol=tol, seed=seed)
    where = (f"worst at x={np.array2string(rep.worst_x, precision=4)}, u={np.array2string(rep.worst_u, precision=4)}, "
             f"eps={rep.worst_eps:.4g}, component {rep.worst_component}")
    out.append(CheckResult("dynamics homogeneity", "pass" if rep.passed else "fail", rep.max_residual, where))
    crep = verify_cost_homogeneity(cost, tol=tol, seed=seed + 3)
    out.append(CheckResult(f"cost homogeneity (degree {cost.degree_label})", "pass" if crep.passed else "fail",
                           crep.max_residual))
    if v0 is not None:
        try:
            res = homvi.check_v0_degree(v0, sys.spec.r, cost.mu, tol=tol, seed=seed + 5)
            out.append(CheckResult(f"V0 homogeneity (degree {cost.mu:g})", "pass", res))
        except DomainError as exc:
            out.append(CheckResult(f"V0 homogeneity (degree {cost.mu:g})", "fail", np.inf, str(exc)))
    n_x, n_u = sys.state_dim, sys.input_dim
    worst_sol = worst_cost = worst_val = 0.0
    for _ in range(samples):
        x = rng.uniform(-1, 1, n_x)
        d = int(rng.integers(1, 4))
        u = rng.uniform(-1, 1, (d, n_u))
        eps = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
        worst_sol = max(worst_sol, check_solution_scaling(sys, x, u, eps, d).residual)
        if cost.exact_degree:
            worst_cost = max(worst_cost, check_cost_scaling(sys, cost, x, u, eps, d).residual)
            worst_val = max(worst_val, check_value_identity(sys, cost, x, u, eps, d).residual)
    out.append(CheckResult("solution scaling", "pass" if worst_sol <= tol else "fail", worst_sol))
    if cost.exact_degree:
        out.append(CheckResult("per-step cost scaling", "pass" if worst_cost <= tol else "fail", worst_cost))
        out.append(CheckResult("value identity", "pass" if worst_val <= tol else "fail", worst_val))
    else:
        note = f"cost has only a degree bracket {cost.degree_label}; exact identities need an exact degree"
        out.append(CheckResult("per-step cost scaling", "n/a", np.nan, note))
        out.append(CheckResult("value identity", "n/a", np.nan, note))
        nu = sys.spec.nu
        if cost.mu_upper is not None and cost.mu_upper > cost.mu * nu:
            out.append(CheckResult("degree bracket within [mu, mu nu]", "fail", cost.mu_upper - cost.mu * nu))
        else:
            out.append(CheckResult("degree bracket within [mu, mu nu]", "pass", 0.0))
    return out
