"""The compact set on which value iteration is solved, and ray decomposition onto it.

Every nonzero state ``x`` is written ``x = lambda^r(eps) base`` with ``base`` on
a sphere of radius ``rho`` (``|lambda^r(1/eps) x| = rho``). The sphere lattice
covers the upper hemisphere of R^3 in (azimuth, elevation); node ``(i, j)``
has flat index ``j * n_az + i``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dilation import DilationWeights, as_weights, dilate
from .errors import ContractError, DomainError, NumericalRangeError

_LOG_EPS_BOUND = float(np.log(1e12))


# --- projection ---

def _log_norm_sq(x: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``log sum_i x_i^2 exp(-2 r_i t)``, computed stably."""
    with np.errstate(divide="ignore"):
        a = 2.0 * np.log(np.abs(x)) - 2.0 * r * t[..., None]
    m = np.max(a, axis=-1, keepdims=True)
    return m[..., 0] + np.log(np.sum(np.exp(a - m), axis=-1))


def solve_ray_eps(r, radius: float, X, bracket: tuple[float, float] = (1e-12, 1e12),
                  rtol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Bisection on ``log eps`` for ``|lambda^r(1/eps) x| = radius``; ``X`` is ``(P, n)`` with no zero rows."""
    r = as_weights(r).array
    X = np.asarray(X, dtype=float)
    target = 2.0 * np.log(radius)
    lo = np.full(X.shape[0], np.log(bracket[0]))
    hi = np.full(X.shape[0], np.log(bracket[1]))
    # h(t) is strictly decreasing in t
    if np.any(_log_norm_sq(X, r, lo) < target) or np.any(_log_norm_sq(X, r, hi) > target):
        raise NumericalRangeError("ray parameter not bracketed in [1e-12, 1e12]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        above = _log_norm_sq(X, r, mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= rtol):
            break
    return np.exp(0.5 * (lo + hi))


def project_many(r, radius: float, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ray decomposition of nonzero rows of ``X``: returns ``(eps, base)``."""
    r = as_weights(r)
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != len(r):
        raise ContractError(f"state dimension {X.shape[-1]} != weight dimension {len(r)}")
    if np.any(np.all(X == 0.0, axis=-1)):
        raise DomainError("the origin has no ray decomposition (use V(0) = 0)")
    if not np.all(np.isfinite(X)):
        raise NumericalRangeError("cannot project non-finite states")
    if r.is_standard:
        # |x| / eps**w = rho, solved in closed form
        norm = np.sqrt(np.sum(X * X, axis=-1))
        if np.any(~np.isfinite(norm)):
            norm = np.exp(0.5 * _log_norm_sq(X, np.zeros(len(r)), np.zeros(X.shape[0])))
        eps = (norm / radius) ** (1.0 / r.weights[0])
    else:
        eps = solve_ray_eps(r, radius, X)
    base = dilate(r, 1.0 / eps, X)
    return eps, base


# --- lattices ---

@dataclass(frozen=True)
class ManifoldGrid:
    """Regular (azimuth, elevation) lattice on the upper hemisphere of ``|x| = radius``."""

    radius: float
    n_az: int
    n_el: int

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        if self.n_az < 2 or self.n_el < 2:
            raise ContractError("lattice needs at least 2 nodes per angle")

    state_dim = 3

    @property
    def azimuths(self) -> np.ndarray:
        return np.linspace(-np.pi, np.pi, self.n_az)

    @property
    def elevations(self) -> np.ndarray:
        return np.linspace(0.0, np.pi / 2, self.n_el)

    @property
    def n_nodes(self) -> int:
        return self.n_az * self.n_el

    @property
    def node_angles(self) -> np.ndarray:
        el, az = np.meshgrid(self.elevations, self.azimuths, indexing="ij")
        return np.stack([az.ravel(), el.ravel()], axis=-1)

    @property
    def node_points(self) -> np.ndarray:
        ang = self.node_angles
        return angles_to_points(self.radius, ang[:, 0], ang[:, 1])

    @property
    def cell_size(self) -> tuple[float, float]:
        return 2 * np.pi / (self.n_az - 1), (np.pi / 2) / (self.n_el - 1)

    def angles(self, base: np.ndarray, mirror_x3: bool = False) -> tuple[np.ndarray, np.ndarray]:
        base = np.asarray(base, dtype=float)
        az = np.arctan2(base[..., 1], base[..., 0])
        el = np.arctan2(base[..., 2], np.hypot(base[..., 0], base[..., 1]))
        if np.any(el < 0):
            if not mirror_x3:
                raise DomainError("base point below the gridded hemisphere (enable mirror_x3 for even systems)")
            el = np.abs(el)
        return az, el

    def locate(self, base: np.ndarray, read_back: str = "bilinear", mirror_x3: bool = False):
        """Interpolation stencil ``(idx, w)`` of shape ``(P, 4)`` for base points on the sphere."""
        az, el = self.angles(base, mirror_x3)
        h_az, h_el = self.cell_size
        ta = np.clip((az + np.pi) / h_az, 0.0, self.n_az - 1)
        te = np.clip(el / h_el, 0.0, self.n_el - 1)
        if read_back == "nearest":
            i = np.rint(ta).astype(np.intp)
            j = np.rint(te).astype(np.intp)
            idx = np.repeat((j * self.n_az + i)[:, None], 4, axis=1)
            w = np.zeros(idx.shape)
            w[:, 0] = 1.0
            return idx, w
        if read_back != "bilinear":
            raise DomainError(f"unknown read-back mode {read_back!r}")
        i0 = np.minimum(np.floor(ta).astype(np.intp), self.n_az - 2)
        j0 = np.minimum(np.floor(te).astype(np.intp), self.n_el - 2)
        fa = ta - i0
        fe = te - j0
        k00 = j0 * self.n_az + i0
        idx = np.stack([k00, k00 + 1, k00 + self.n_az, k00 + self.n_az + 1], axis=-1)
        w = np.stack([(1 - fa) * (1 - fe), fa * (1 - fe), (1 - fa) * fe, fa * fe], axis=-1)
        return idx, w


def angles_to_points(radius: float, az, el) -> np.ndarray:
    az = np.asarray(az, dtype=float)
    el = np.asarray(el, dtype=float)
    return radius * np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


@dataclass(frozen=True)
class PointManifold:
    """A finite node set on ``|x| = radius``, read back by nearest node.

    Exact when the manifold itself is finite, e.g. ``{-rho, rho}`` in R^1.
    """

    points: np.ndarray
    radius: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if not self.radius > 0:
            raise DomainError("radius must be positive")

    @property
    def state_dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def node_points(self) -> np.ndarray:
        return self.points

    def locate(self, base: np.ndarray, read_back: str = "nearest", mirror_x3: bool = False):
        base = np.asarray(base, dtype=float)
        d2 = np.sum((base[:, None, :] - self.points[None, :, :]) ** 2, axis=-1)
        nearest = np.argmin(d2, axis=1)
        if np.any(d2[np.arange(base.shape[0]), nearest] > (1e-6 * self.radius) ** 2):
            raise DomainError("query base point is not a node of the finite manifold")
        idx = nearest[:, None]
        return idx, np.ones(idx.shape)

    @classmethod
    def line(cls, radius: float = 1.0, both_signs: bool = True) -> "PointManifold":
        pts = [[radius], [-radius]] if both_signs else [[radius]]
        return cls(np.asarray(pts), radius)


Manifold = Union[ManifoldGrid, PointManifold]


@dataclass(frozen=True)
class RayDecomposition:
    eps: float
    base: np.ndarray
    interp: tuple[tuple[int, float], ...]


def project_to_manifold(grid: Union[Manifold, float], r, x, read_back: str = "bilinear",
                        mirror_x3: bool = False) -> RayDecomposition:
    """Decompose ``x`` as ``lambda^r(eps) base``; pass a bare radius for projection only."""
    x = np.asarray(x, dtype=float)
    radius = grid if isinstance(grid, (int, float)) else grid.radius
    eps, base = project_many(r, float(radius), x[None, :])
    if isinstance(grid, (int, float)):
        return RayDecomposition(float(eps[0]), base[0], ())
    idx, w = grid.locate(base, read_back, mirror_x3)
    stencil = tuple((int(i), float(wt)) for i, wt in zip(idx[0], w[0]) if wt != 0.0)
    return RayDecomposition(float(eps[0]), base[0], stencil)


def stencil_values(values: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sum_k w_k values[idx_k]`` where zero weights never touch infinite values."""
    v = values[idx]
    with np.errstate(invalid="ignore"):
        terms = np.where(w == 0.0, 0.0, w * v)
    return np.sum(terms, axis=-1)


def interpolate(grid: Manifold, values, decomp: RayDecomposition) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_nodes,):
        raise ContractError(f"value table has {values.shape} entries, grid has {grid.n_nodes} nodes")
    idx = np.array([[i for i, _ in decomp.interp]])
    w = np.array([[wt for _, wt in decomp.interp]])
    if idx.size == 0:
        raise ContractError("decomposition carries no interpolation stencil")
    return float(stencil_values(values, idx, w)[0])


@dataclass(frozen=True)
class CoverageReport:
    passed: bool
    samples: int
    uncovered: int
    max_reconstruction_error: float


def coverage_check(grid: Manifold, r, samples: int = 1000, seed: int = 0, mirror_x3: bool = False,
                   states: Optional[np.ndarray] = None, tol: float = 1e-9) -> CoverageReport:
    """Project random nonzero states; fails on reconstruction error or bases outside the lattice."""
    rng = np.random.default_rng(seed)
    n = len(as_weights(r))
    X = rng.normal(size=(samples, n)) * np.exp(rng.uniform(-3, 3, size=(samples, 1))) if states is None \
        else np.asarray(states, dtype=float)
    eps, base = project_many(r, grid.radius, X)
    recon = dilate(r, eps, base)
    scale = np.maximum(1.0, np.abs(X))
    err = float(np.max(np.abs(recon - X) / scale))
    uncovered = 0
    if isinstance(grid, ManifoldGrid):
        el = np.arctan2(base[:, 2], np.hypot(base[:, 0], base[:, 1]))
        uncovered = int(np.sum(el < 0)) if not mirror_x3 else 0
    return CoverageReport(uncovered == 0 and err <= tol, X.shape[0], uncovered, err)


# --- CSV ---

def write_value_table(path: Union[str, Path], grid: ManifoldGrid, columns: dict[str, np.ndarray]) -> Path:
    """Rows in node order (elevation-major), header ``azimuth,elevation,x1,x2,x3,<columns>``."""
    path = Path(path)
    ang = grid.node_angles
    pts = grid.node_points
    names = list(columns)
    for k in names:
        if np.shape(columns[k]) != (grid.n_nodes,):
            raise ContractError(f"column {k} has the wrong length")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["azimuth", "elevation", "x1", "x2", "x3"] + names)
        for n in range(grid.n_nodes):
            w.writerow([repr(float(v)) for v in (*ang[n], *pts[n])] +
                       [repr(float(columns[k][n])) for k in names])
    return path


def read_value_table(path: Union[str, Path]) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]) if body else np.zeros((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}
