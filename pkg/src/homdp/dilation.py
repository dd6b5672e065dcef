"""Dilation maps, powered dilations, input-sequence scaling and signed powers.

All functions accept batched arrays: the last axis is the vector axis and any
leading axes are broadcast against ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError

# |w_i * log(eps)| beyond this switches to the log-domain product
_LOG_SWITCH = 500.0


@dataclass(frozen=True)
class DilationWeights:
    """Positive exponents ``r`` of a dilation ``x_i -> eps**r_i * x_i``."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(np.asarray(self.weights, dtype=float)))
        if len(w) == 0:
            raise DomainError("dilation weights must be nonempty")
        if not all(np.isfinite(v) and v > 0 for v in w):
            raise DomainError(f"dilation weights must be strictly positive, got {w}")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def is_standard(self) -> bool:
        return len(set(self.weights)) == 1

    def append(self, weight: float) -> "DilationWeights":
        return DilationWeights(self.weights + (float(weight),))

    @classmethod
    def standard(cls, n: int, c: float = 1.0) -> "DilationWeights":
        return cls((float(c),) * n)


def as_weights(w) -> DilationWeights:
    return w if isinstance(w, DilationWeights) else DilationWeights(tuple(np.atleast_1d(w)))


@dataclass(frozen=True)
class DilationSpec:
    """State weights ``r``, input weights ``q``, system degree ``nu``, cost degree ``mu``."""

    r: DilationWeights
    q: DilationWeights
    nu: float
    mu: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "r", as_weights(self.r))
        object.__setattr__(self, "q", as_weights(self.q))
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise DomainError(f"system degree nu must be positive, got {self.nu}")


def _check_eps(eps) -> np.ndarray:
    e = np.asarray(eps, dtype=float)
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise DomainError("dilation parameter eps must be a positive finite float")
    return e


def _check_dim(w: DilationWeights, x: np.ndarray) -> None:
    if x.ndim == 0 or x.shape[-1] != len(w):
        raise ContractError(f"vector dimension {x.shape[-1:] or '()'} != weight dimension {len(w)}")


def _dilate_log(w: np.ndarray, log_eps: np.ndarray, x: np.ndarray) -> np.ndarray:
    expo = log_eps[..., None] * w
    with np.errstate(divide="ignore", over="ignore"):
        mag = np.exp(expo + np.log(np.abs(x)))
    return np.where(x == 0, 0.0, np.sign(x) * mag)


def dilate(w, eps, x) -> np.ndarray:
    """Return ``lambda^w(eps) x`` with components ``eps**w_i * x_i``."""
    w = as_weights(w)
    x = np.asarray(x, dtype=float)
    _check_dim(w, x)
    e = _check_eps(eps)
    wa = w.array
    log_e = np.log(e)
    if np.all(np.abs(log_e)[..., None] * wa <= _LOG_SWITCH):
        return e[..., None] ** wa * x
    return _dilate_log(wa, log_e, x)


def dilate_power(w, eps, c: float, x) -> np.ndarray:
    """Powered dilation ``lambda^w(eps)^c x``, defined as ``lambda^w(eps**c) x``."""
    e = _check_eps(eps)
    with np.errstate(over="ignore", under="ignore"):
        ec = e ** float(c)
    if np.all(np.isfinite(ec)) and np.all(ec > 0):
        return dilate(w, ec, x)
    w = as_weights(w)
    x = np.asarray(x, dtype=float)
    _check_dim(w, x)
    return _dilate_log(w.array, float(c) * np.log(e), x)


def scale_input_sequence(q, c: float, eps: float, u) -> np.ndarray:
    """Apply ``Lambda^q_{c,k}(eps)``: input ``k`` is dilated by ``lambda^q(eps)^(c**k)``."""
    q = as_weights(q)
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ContractError("input sequence must be a (d, n_u) array")
    _check_dim(q, u)
    if u.shape[0] == 0:
        return u.copy()
    return np.stack([dilate_power(q, eps, float(c) ** k, u[k]) for k in range(u.shape[0])])


def signed_power(x, a: float):
    """``sign(x) * |x|**a``."""
    if not a > 0:
        raise DomainError("signed_power exponent must be positive")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.abs(x) ** a
    return float(out) if out.ndim == 0 else out


def as_input_sequence(u: Sequence, input_dim: int) -> np.ndarray:
    """Coerce a list of inputs (scalars allowed when ``input_dim == 1``) to ``(d, n_u)``."""
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 1 and input_dim == 1:
        arr = arr[:, None]
    if arr.size == 0:
        arr = np.zeros((0, input_dim))
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise ContractError(f"input sequence shape {arr.shape} incompatible with n_u={input_dim}")
    return arr
