"""Small numerical helpers: residuals and extended-real products."""

from __future__ import annotations

import numpy as np


def relative_residual(lhs, rhs) -> float:
    """Max of ``|lhs - rhs| / max(1, |lhs|, |rhs|)``; matching infinities count as zero."""
    a = np.asarray(lhs, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if a.size == 0:
        return 0.0
    if np.any(np.isnan(a)) or np.any(np.isnan(b)):
        return float("inf")
    both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
    with np.errstate(invalid="ignore"):
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        res = np.abs(a - b) / scale
    res = np.where(both_inf, 0.0, res)
    res = np.where(np.isnan(res), 1.0, res)  # finite vs inf
    return float(np.max(res))


def ext_mul(weight, value):
    """``weight * value`` on nonnegative extended reals.

    An infinite ``value`` stays infinite even when ``weight`` underflowed to 0,
    and a zero ``value`` stays zero even when ``weight`` overflowed.
    """
    w = np.asarray(weight, dtype=float)
    v = np.asarray(value, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = w * v
    out = np.where(v == 0, 0.0, out)
    out = np.where(np.isinf(v), np.inf, out)
    return out


def power_weight(gamma1: float, gamma2: float, k: int) -> float:
    """``gamma1 ** (gamma2 ** k)`` via logs; saturates to 0 or inf instead of raising."""
    if not gamma1 > 0:
        raise ValueError("gamma1 must be positive")
    with np.errstate(over="ignore"):
        expo = float(np.log(gamma1)) * float(gamma2) ** k
        if gamma1 == 1.0:
            return 1.0
        return float(np.exp(expo))
