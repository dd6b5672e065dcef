"""Classical value iteration on a rectangular state grid, plus an exhaustive-search oracle."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .costs import CostModel, CostWeights
from .dilation import dilate, dilate_power
from .errors import BudgetError, ContractError, DomainError
from .numerics import ext_mul, relative_residual
from .systems import SystemModel, simulate_batch

ValueFn = Callable[[np.ndarray], np.ndarray]
OODM = ("clamp", "v0_extend", "penalty")

_BLOCK = 1 << 20


@dataclass(frozen=True)
class StateGrid:
    """Regular lattice over a box; a dimension with one node and ``lower == upper`` is pinned."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        cnt = tuple(int(c) for c in self.counts)
        if not (len(lo) == len(hi) == len(cnt)):
            raise ContractError("lower, upper and counts must have equal length")
        for a, b, c in zip(lo, hi, cnt):
            if c == 1:
                if a != b:
                    raise ContractError("a pinned dimension needs lower == upper")
            elif c < 2 or not b > a:
                raise ContractError("free dimensions need count >= 2 and upper > lower")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "counts", cnt)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def free(self) -> list[int]:
        return [i for i, c in enumerate(self.counts) if c > 1]

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, c) if c > 1 else np.array([a])
                for a, b, c in zip(self.lower, self.upper, self.counts)]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.counts))

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        ok = np.ones(X.shape[:-1], dtype=bool)
        for i, (a, b, c) in enumerate(zip(self.lower, self.upper, self.counts)):
            if c == 1:
                ok &= np.abs(X[..., i] - a) <= 1e-12 * max(1.0, abs(a))
            else:
                ok &= (X[..., i] >= a) & (X[..., i] <= b)
        return ok

    def clamp(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, np.asarray(self.lower), np.asarray(self.upper))

    def interpolate(self, values: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Multilinear interpolation over the free dimensions at in-box points ``X`` of shape ``(P, n)``."""
        table = np.asarray(values, dtype=float).reshape(self.shape)
        X = np.asarray(X, dtype=float)
        P = X.shape[0]
        base = np.zeros((P, self.dim), dtype=np.intp)
        frac = np.zeros((P, len(self.free)))
        for k, i in enumerate(self.free):
            h = (self.upper[i] - self.lower[i]) / (self.counts[i] - 1)
            t = np.clip((X[:, i] - self.lower[i]) / h, 0.0, self.counts[i] - 1)
            j = np.minimum(np.floor(t).astype(np.intp), self.counts[i] - 2)
            base[:, i] = j
            frac[:, k] = t - j
        out = np.zeros(P)
        for corner in itertools.product((0, 1), repeat=len(self.free)):
            idx = base.copy()
            w = np.ones(P)
            for k, (i, bit) in enumerate(zip(self.free, corner)):
                idx[:, i] += bit
                w = w * (frac[:, k] if bit else 1.0 - frac[:, k])
            v = table[tuple(idx.T)]
            with np.errstate(invalid="ignore"):
                out = out + np.where(w == 0.0, 0.0, w * v)
        return out


@dataclass(frozen=True)
class GridValueTable:
    grid: StateGrid
    iteration: int
    values: np.ndarray
    policy: np.ndarray
    oodm: str
    out_of_domain_fraction: float = 0.0

    def value_at(self, X, v0: Optional[ValueFn] = None) -> np.ndarray:
        """Read the table at arbitrary states using the table's out-of-domain rule."""
        return _read(self, np.atleast_2d(np.asarray(X, dtype=float)), v0)[0]


def init_table(grid: StateGrid, v0: ValueFn, oodm: str = "v0_extend") -> GridValueTable:
    if oodm not in OODM:
        raise DomainError(f"unknown out-of-domain mode {oodm!r}")
    vals = np.asarray(v0(grid.nodes), dtype=float)
    return GridValueTable(grid, 0, vals, np.full(grid.n_nodes, -1, dtype=np.intp), oodm)


def _read(table: GridValueTable, X: np.ndarray, v0: Optional[ValueFn]):
    grid = table.grid
    inside = grid.contains(X)
    out = np.empty(X.shape[0])
    if np.any(inside):
        out[inside] = grid.interpolate(table.values, X[inside])
    outside = ~inside
    if np.any(outside):
        if table.oodm == "clamp":
            out[outside] = grid.interpolate(table.values, grid.clamp(X[outside]))
        elif table.oodm == "v0_extend":
            if v0 is None:
                raise ContractError("v0_extend needs the V0 formula")
            out[outside] = np.asarray(v0(X[outside]), dtype=float)
        else:
            out[outside] = np.inf
    return out, outside


def classic_vi_iterate(table: GridValueTable, sys: SystemModel, cost: CostModel, input_grid,
                       v0: Optional[ValueFn] = None) -> GridValueTable:
    """``V_{i+1}(x) = min_u l(x,u) + V_i(f(x,u))`` at every node, exhaustive over ``input_grid``."""
    U = np.asarray(input_grid, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    X = table.grid.nodes
    M = U.shape[0]
    values = np.empty(X.shape[0])
    policy = np.empty(X.shape[0], dtype=np.intp)
    n_out = 0
    block = max(1, _BLOCK // M)
    for s in range(0, X.shape[0], block):
        xs = X[s:s + block]
        xb = np.broadcast_to(xs[:, None, :], (xs.shape[0], M, xs.shape[1]))
        ub = np.broadcast_to(U[None, :, :], (xs.shape[0], M, U.shape[1]))
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = sys(xb, ub).reshape(-1, X.shape[1])
            stage = cost.l(xb, ub)
        v, outside = _read(table, nxt, v0)
        n_out += int(np.sum(outside))
        with np.errstate(invalid="ignore"):
            obj = stage + v.reshape(xs.shape[0], M)
        if np.any(np.isnan(obj)):
            raise FloatingPointError("NaN in Bellman backup")
        k = np.argmin(obj, axis=1)
        values[s:s + block] = obj[np.arange(xs.shape[0]), k]
        policy[s:s + block] = k
    frac = n_out / float(X.shape[0] * M)
    return GridValueTable(table.grid, table.iteration + 1, values, policy, table.oodm, frac)


def run(grid: StateGrid, sys: SystemModel, cost: CostModel, input_grid, v0: ValueFn, iterations: int,
        oodm: str = "v0_extend") -> list[GridValueTable]:
    tables = [init_table(grid, v0, oodm)]
    for _ in range(iterations):
        tables.append(classic_vi_iterate(tables[-1], sys, cost, input_grid, v0))
    return tables


# --- exhaustive oracle ---

@dataclass(frozen=True)
class BruteForceResult:
    value: float
    sequence: np.ndarray


def _per_step_grids(input_grid, horizon: int) -> list[np.ndarray]:
    if isinstance(input_grid, (list, tuple)) and len(input_grid) and np.ndim(input_grid[0]) == 2:
        grids = [np.asarray(g, dtype=float) for g in input_grid]
        if len(grids) < horizon:
            raise ContractError("fewer per-step input grids than the horizon")
        return grids[:horizon]
    g = np.asarray(input_grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    return [g] * horizon


def brute_force_value(sys: SystemModel, cost: CostModel, x, input_grid, horizon: int,
                      terminal: Optional[ValueFn] = None, weights: Optional[CostWeights] = None,
                      budget: int = 10 ** 6) -> BruteForceResult:
    """Exact minimum of ``sum_k w_k l(phi(k), u_k) + w_d V0(phi(d))`` over every grid sequence.

    ``input_grid`` is one ``(M, n_u)`` array used at every step, or a list of
    per-step arrays. ``terminal`` defaults to the cost's own terminal cost.
    Ties go to the lexicographically smallest index sequence.
    """
    x = np.asarray(x, dtype=float)
    weights = weights or CostWeights()
    terminal = terminal if terminal is not None else cost.j
    if horizon == 0:
        return BruteForceResult(float(np.asarray(terminal(x[None, :]))[0]) * 1.0
                                if weights.weight(0) == 1.0 else
                                float(ext_mul(weights.weight(0), np.asarray(terminal(x[None, :]))[0])),
                                np.zeros((0, sys.input_dim)))
    grids = _per_step_grids(input_grid, horizon)
    sizes = [g.shape[0] for g in grids]
    total = int(np.prod(sizes, dtype=float))
    if total > budget:
        raise BudgetError(f"{total} sequences exceed the enumeration budget {budget}")
    idx = np.stack(np.unravel_index(np.arange(total), sizes), axis=-1)
    useq = np.stack([grids[k][idx[:, k]] for k in range(horizon)], axis=1)
    states = simulate_batch(sys, np.broadcast_to(x, (total, x.shape[0])), useq)
    J = np.zeros(total)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(horizon):
            J = J + ext_mul(weights.weight(k), cost.l(states[:, k], useq[:, k]))
        J = J + ext_mul(weights.weight(horizon), np.asarray(terminal(states[:, horizon]), dtype=float))
    if np.any(np.isnan(J)):
        raise FloatingPointError("NaN in enumerated costs")
    best = int(np.argmin(J))
    return BruteForceResult(float(J[best]), useq[best].copy())


def scaled_input_grids(q, nu: float, eps: float, input_grid, horizon: int) -> list[np.ndarray]:
    """Per-step grids ``lambda^q(eps)^(nu^k) U``: the image of the grid sequences under ``Lambda^q_nu(eps)``."""
    base = _per_step_grids(input_grid, horizon)
    return [dilate_power(q, eps, nu ** k, g) for k, g in enumerate(base)]


def corollary_scaling_probe(sys: SystemModel, cost: CostModel, x, eps: float, input_grid, horizon: int,
                            terminal: Optional[ValueFn] = None) -> float:
    """Residual of ``V(lambda^r(eps) x) = eps^mu V(x)`` with the feasible input set scaled to match.

    Only meaningful when ``nu == 1`` or ``mu == 0``.
    """
    spec = sys.spec
    if not (spec.nu == 1.0 or cost.mu == 0.0):
        raise DomainError("the ray-proportionality probe needs nu == 1 or mu == 0")
    x = np.asarray(x, dtype=float)
    here = brute_force_value(sys, cost, x, input_grid, horizon, terminal)
    grids = scaled_input_grids(spec.q, spec.nu, eps, input_grid, horizon)
    there = brute_force_value(sys, cost, dilate(spec.r, eps, x), grids, horizon, terminal)
    return relative_residual(there.value, float(ext_mul(eps ** cost.mu, here.value)))


def write_grid_table(path: Union[str, Path], table: GridValueTable, input_grid) -> Path:
    """CSV ``x1,..,xn,value,policy_input`` in lattice order (first input component for the policy)."""
    U = np.asarray(input_grid, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    path = Path(path)
    X = table.grid.nodes
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(X.shape[1])] + ["value", "policy_input"])
        for n in range(X.shape[0]):
            pol = "" if table.policy[n] < 0 else repr(float(U[table.policy[n], 0]))
            w.writerow([repr(float(v)) for v in X[n]] + [repr(float(table.values[n])), pol])
    return path
