"""Value iteration on a compact manifold, extended to the whole state space by homogeneity.

Bellman backups are solved only at manifold nodes. Anywhere else the lower
and upper envelopes are read along rays::

    lower_i(lambda^r(eps) xbar) = min(eps^mu, eps^(mu nu^i)) * lower_i(xbar)
    upper_i(lambda^r(eps) xbar) = max(eps^mu, eps^(mu nu^i)) * upper_i(xbar)

with both equal to 0 at the origin.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .costs import CostModel
from .dilation import DilationSpec, dilate
from .errors import ContractError, DomainError, NoFeasibleInputError
from .manifold import Manifold, ManifoldGrid, project_many, stencil_values, write_value_table
from .numerics import ext_mul
from .systems import SystemModel

log = logging.getLogger(__name__)

ValueFn = Callable[[np.ndarray], np.ndarray]

# (node, input) pairs evaluated per vectorized block
_BLOCK = 1 << 20


def uniform_input_grid(lo: float, hi: float, count: int, dim: int = 1) -> np.ndarray:
    """``count`` equally spaced inputs per dimension over ``[lo, hi]``, forced to contain 0."""
    if count < 1:
        raise ContractError("input grid needs at least one point")
    axis = np.linspace(lo, hi, count) if count > 1 else np.array([0.0])
    if lo <= 0.0 <= hi:
        k = int(np.argmin(np.abs(axis)))
        if abs(axis[k]) < 1e-9 * max(1.0, hi - lo):
            axis[k] = 0.0
        else:
            axis = np.sort(np.append(axis, 0.0))
    else:
        axis = np.sort(np.append(axis, 0.0))
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def check_v0_degree(v0: ValueFn, r, mu: float, samples: int = 100, tol: float = 1e-9, seed: int = 5) -> float:
    """Relative residual of ``V0(lambda^r(eps) x) == eps^mu V0(x)``."""
    rng = np.random.default_rng(seed)
    n = len(r.weights) if hasattr(r, "weights") else len(r)
    x = rng.uniform(-2, 2, size=(samples, n))
    eps = np.exp(rng.uniform(np.log(0.1), np.log(10), size=samples))
    lhs = np.asarray(v0(dilate(r, eps, x)), dtype=float)
    rhs = ext_mul(eps ** mu, np.asarray(v0(x), dtype=float))
    with np.errstate(invalid="ignore"):
        res = np.abs(lhs - rhs) / np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    res = np.where(np.isinf(lhs) & np.isinf(rhs), 0.0, res)
    worst = float(np.max(np.where(np.isnan(res), np.inf, res)))
    if worst > tol:
        raise DomainError(f"V0 is not homogeneous of degree {mu} (residual {worst:.3g})")
    return worst


@dataclass(frozen=True)
class VIConfig:
    input_grid: np.ndarray
    iterations: int = 1
    v0: Optional[ValueFn] = None
    read_back: str = "bilinear"
    mirror_x3: bool = False
    # read iteration-0 envelopes from V0 itself rather than its node samples
    v0_exact: bool = True

    def __post_init__(self):
        g = np.asarray(self.input_grid, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
        if g.shape[0] == 0:
            raise ContractError("input grid is empty")
        if not np.any(np.all(g == 0.0, axis=1)):
            raise DomainError("input grid must contain the zero input")
        object.__setattr__(self, "input_grid", g)
        if self.read_back not in ("bilinear", "nearest"):
            raise DomainError(f"unknown read-back mode {self.read_back!r}")
        if self.iterations < 0:
            raise ContractError("iterations must be nonnegative")


@dataclass(frozen=True)
class SweepStats:
    seconds: float
    lower_min: float
    lower_max: float
    upper_min: float
    upper_max: float


@dataclass(frozen=True)
class ValueEnvelope:
    iteration: int
    lower: np.ndarray
    upper: np.ndarray
    grid: Manifold
    spec: DilationSpec
    mu: float
    config: VIConfig
    lower_policy: Optional[np.ndarray] = None
    upper_policy: Optional[np.ndarray] = None
    stats: Optional[SweepStats] = None

    @property
    def nu(self) -> float:
        return self.spec.nu


def _zero_v0(x):
    return np.zeros(np.shape(x)[:-1])


def init_envelope(grid: Manifold, sys: SystemModel, cost: CostModel, config: VIConfig) -> ValueEnvelope:
    """Iteration 0: both envelopes equal ``V0`` sampled at the nodes."""
    if sys.spec is None:
        raise ContractError("homogeneous VI needs a system with a dilation spec")
    if grid.state_dim != sys.state_dim:
        raise ContractError("manifold dimension differs from the state dimension")
    if config.input_grid.shape[1] != sys.input_dim:
        raise ContractError("input grid dimension differs from the input dimension")
    v0 = config.v0 or _zero_v0
    check_v0_degree(v0, sys.spec.r, cost.mu)
    if config.v0 is None:
        config = replace(config, v0=_zero_v0)
    table = np.asarray(v0(grid.node_points), dtype=float)
    spec = DilationSpec(sys.spec.r, sys.spec.q, sys.spec.nu, cost.mu)
    return ValueEnvelope(0, table.copy(), table.copy(), grid, spec, float(cost.mu), config)


def _log_factors(env: ValueEnvelope, eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.log(eps)
    a = env.mu * t
    b = env.mu * env.nu ** env.iteration * t
    return np.minimum(a, b), np.maximum(a, b)


def query_both(env: ValueEnvelope, X) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper envelope values at states ``X`` of shape ``(..., n_x)``."""
    X = np.asarray(X, dtype=float)
    lead = X.shape[:-1]
    flat = X.reshape(-1, X.shape[-1])
    lo = np.zeros(flat.shape[0])
    hi = np.zeros(flat.shape[0])
    nz = ~np.all(flat == 0.0, axis=1)
    if np.any(nz):
        eps, base = project_many(env.spec.r, env.grid.radius, flat[nz])
        if env.iteration == 0 and env.config.v0_exact:
            blo = bhi = np.asarray(env.config.v0(base), dtype=float)
        else:
            idx, w = env.grid.locate(base, env.config.read_back, env.config.mirror_x3)
            blo = stencil_values(env.lower, idx, w)
            bhi = stencil_values(env.upper, idx, w)
        flo, fhi = _log_factors(env, eps)
        with np.errstate(over="ignore"):
            lo[nz] = ext_mul(np.exp(flo), blo)
            hi[nz] = ext_mul(np.exp(fhi), bhi)
    return lo.reshape(lead), hi.reshape(lead)


def query_lower(env: ValueEnvelope, x) -> Union[float, np.ndarray]:
    lo, _ = query_both(env, x)
    return float(lo) if lo.ndim == 0 else lo


def query_upper(env: ValueEnvelope, x) -> Union[float, np.ndarray]:
    _, hi = query_both(env, x)
    return float(hi) if hi.ndim == 0 else hi


def _backup(env: ValueEnvelope, sys: SystemModel, cost: CostModel, X: np.ndarray):
    """Minimize ``l(x,u) + V(f(x,u))`` over the input grid for both envelopes at states ``X``."""
    U = env.config.input_grid
    M = U.shape[0]
    n = X.shape[0]
    out = np.empty((4, n))
    block = max(1, _BLOCK // M)
    for s in range(0, n, block):
        xs = X[s:s + block]
        xb = np.broadcast_to(xs[:, None, :], (xs.shape[0], M, xs.shape[1]))
        ub = np.broadcast_to(U[None, :, :], (xs.shape[0], M, U.shape[1]))
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = sys(xb, ub)
            stage = cost.l(xb, ub)
        vlo, vhi = query_both(env, nxt)
        with np.errstate(invalid="ignore"):
            olo = stage + vlo
            ohi = stage + vhi
        if np.any(np.isnan(olo)) or np.any(np.isnan(ohi)):
            raise FloatingPointError("NaN in Bellman backup")
        klo = np.argmin(olo, axis=1)
        khi = np.argmin(ohi, axis=1)
        rows = np.arange(xs.shape[0])
        out[0, s:s + block] = olo[rows, klo]
        out[1, s:s + block] = ohi[rows, khi]
        out[2, s:s + block] = klo
        out[3, s:s + block] = khi
    return out[0], out[1], out[2].astype(np.intp), out[3].astype(np.intp)


def hom_vi_iterate(env: ValueEnvelope, sys: SystemModel, cost: CostModel) -> ValueEnvelope:
    """One sweep of the manifold-restricted Bellman backup for both envelopes."""
    t0 = time.perf_counter()
    lower, upper, klo, khi = _backup(env, sys, cost, env.grid.node_points)
    if np.any(lower > upper):
        raise RuntimeError("envelope order violated: lower > upper at some node")
    dt = time.perf_counter() - t0
    stats = SweepStats(dt, float(lower.min()), float(lower.max()), float(upper.min()), float(upper.max()))
    log.info("sweep %d -> %d: %.2fs lower [%.4g, %.4g] upper [%.4g, %.4g]", env.iteration, env.iteration + 1,
             dt, stats.lower_min, stats.lower_max, stats.upper_min, stats.upper_max)
    return ValueEnvelope(env.iteration + 1, lower, upper, env.grid, env.spec, env.mu, env.config,
                         klo, khi, stats)


def run(grid: Manifold, sys: SystemModel, cost: CostModel, config: VIConfig) -> list[ValueEnvelope]:
    envs = [init_envelope(grid, sys, cost, config)]
    for _ in range(config.iterations):
        envs.append(hom_vi_iterate(envs[-1], sys, cost))
    return envs


def pointwise_backup(env: ValueEnvelope, sys: SystemModel, cost: CostModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Envelopes of iteration ``env.iteration + 1`` evaluated directly at manifold points ``X``.

    Solves the backup at arbitrary points of the manifold instead of reading
    a node table, so it carries no lattice interpolation error.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo, hi, _, _ = _backup(env, sys, cost, X)
    return lo, hi


@dataclass(frozen=True)
class BoundsReport:
    samples: int
    lower_violations: int
    upper_violations: int
    max_gap: float
    min_diff_lower: float
    min_diff_upper: float

    @property
    def passed(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def check_bounds(env: ValueEnvelope, reference: Callable[[np.ndarray], np.ndarray], samples,
                 rtol: float = 1e-6) -> BoundsReport:
    """Count samples where ``lower <= V_i <= upper`` fails by more than ``rtol * (1 + |V_i|)``."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    ref = np.asarray(reference(X), dtype=float)
    lo, hi = query_both(env, X)
    with np.errstate(invalid="ignore"):
        dl = np.where(np.isinf(ref) & np.isinf(lo), 0.0, ref - lo)
        du = np.where(np.isinf(ref) & np.isinf(hi), 0.0, hi - ref)
        gap = np.where(np.isinf(hi), np.inf, (hi - lo) / np.maximum(1.0, np.abs(ref)))
    slack = rtol * (1.0 + np.where(np.isinf(ref), 0.0, np.abs(ref)))
    return BoundsReport(
        X.shape[0], int(np.sum(dl < -slack)), int(np.sum(du < -slack)),
        float(np.max(np.where(np.isnan(gap), 0.0, gap))), float(np.min(dl)), float(np.min(du)))


def extract_policy(env: ValueEnvelope, sys: SystemModel, cost: CostModel, x, mode: str = "mid") -> np.ndarray:
    """``argmin_u l(x,u) + Vhat(f(x,u))`` over the input grid, with ``lower <= Vhat <= upper``."""
    x = np.asarray(x, dtype=float)
    U = env.config.input_grid
    xb = np.broadcast_to(x, (U.shape[0], x.shape[0]))
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = sys(xb, U)
        stage = cost.l(xb, U)
    lo, hi = query_both(env, nxt)
    if mode == "mid":
        vhat = np.where(np.isinf(hi), np.inf, 0.5 * (lo + hi))
    elif mode == "lower":
        vhat = lo
    elif mode == "upper":
        vhat = hi
    else:
        raise DomainError(f"unknown policy mode {mode!r}")
    obj = stage + vhat
    if np.all(np.isinf(obj)):
        raise NoFeasibleInputError("every input gives an infinite objective")
    return U[int(np.argmin(obj))].copy()


# --- serialization ---

def envelope_metadata(env: ValueEnvelope, extra: Optional[dict] = None) -> dict:
    U = env.config.input_grid
    meta = {
        "iteration": env.iteration,
        "mu": env.mu,
        "nu": env.nu,
        "r": ",".join(f"{w:g}" for w in env.spec.r.weights),
        "q": ",".join(f"{w:g}" for w in env.spec.q.weights),
        "radius": env.grid.radius,
        "M": U.shape[0],
        "input_min": float(U.min()),
        "input_max": float(U.max()),
        "read_back": env.config.read_back,
        "mirror_x3": env.config.mirror_x3,
        "v0_exact": env.config.v0_exact,
    }
    if isinstance(env.grid, ManifoldGrid):
        h_az, h_el = env.grid.cell_size
        meta.update(n_az=env.grid.n_az, n_el=env.grid.n_el, cell_azimuth=h_az, cell_elevation=h_el)
    if env.stats is not None:
        meta["sweep_seconds"] = round(env.stats.seconds, 6)
    if extra:
        meta.update(extra)
    return meta


def write_metadata(path: Union[str, Path], meta: dict) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    return path


def read_metadata(path: Union[str, Path]) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def write_envelope(directory: Union[str, Path], env: ValueEnvelope, extra_meta: Optional[dict] = None,
                   stem: str = "homvi") -> Path:
    """Write ``<stem>_iterNNN.csv`` (columns ``lower,upper``) and its ``.meta`` sidecar."""
    if not isinstance(env.grid, ManifoldGrid):
        raise ContractError("only sphere lattices serialize to CSV")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{stem}_iter{env.iteration:03d}.csv"
    write_value_table(path, env.grid, {"lower": env.lower, "upper": env.upper})
    write_metadata(path.with_suffix(".meta"), envelope_metadata(env, extra_meta))
    return path
