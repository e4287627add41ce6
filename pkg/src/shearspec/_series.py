"""Vectorized truncated Taylor-series arithmetic.

Series are stored as stacked coefficient arrays of shape (order+1, ...)
where entry j holds f^(j)(t0)/j! at the expansion point. Used by the
oscillatory-integral engine to evaluate high-order endpoint derivatives
of smooth coefficient functions without symbolic differentiation.
"""

from __future__ import annotations

import numpy as np


def tmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product series, truncated to the shorter operand's order."""
    n = min(a.shape[0], b.shape[0])
    out = np.zeros((n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]),
                   dtype=np.result_type(a, b))
    for j in range(n):
        for i in range(j + 1):
            out[j] = out[j] + a[i] * b[j - i]
    return out


def tdiv(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Quotient series u/v (v[0] must be nonvanishing)."""
    n = min(u.shape[0], v.shape[0])
    out = np.zeros((n,) + np.broadcast_shapes(u.shape[1:], v.shape[1:]),
                   dtype=np.result_type(u, v))
    for j in range(n):
        acc = u[j] + np.zeros_like(out[j])
        for i in range(1, j + 1):
            acc = acc - v[i] * out[j - i]
        out[j] = acc / v[0]
    return out


def tpow(f: np.ndarray, alpha: float) -> np.ndarray:
    """Power series f**alpha (f[0] > 0)."""
    n = f.shape[0]
    out = np.zeros_like(np.asarray(f, dtype=float))
    out[0] = f[0] ** alpha
    for j in range(1, n):
        acc = np.zeros_like(out[0])
        for i in range(1, j + 1):
            acc = acc + (alpha * i - (j - i)) * f[i] * out[j - i]
        out[j] = acc / (j * f[0])
    return out


def tderiv(c: np.ndarray) -> np.ndarray:
    """Derivative series (order drops by one)."""
    n = c.shape[0]
    j = np.arange(1, n).reshape((n - 1,) + (1,) * (c.ndim - 1))
    return j * c[1:]
