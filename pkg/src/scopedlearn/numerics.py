"""Log-space utilities and the two special functions the inference code needs.

All likelihood accumulation in this package happens on the natural-log
scale: values are finite or -inf, never NaN. Products over feature bags
underflow in linear space for even moderately sized locales, so every
posterior is assembled as a sum of logs and normalized through
:func:`log_sum_exp`.
"""

from __future__ import annotations

import numpy as np

__all__ = ["LogProb", "digamma", "log_gamma", "log_sum_exp", "normalize_log"]

# Natural-log scale probability: finite or -inf, never NaN.
LogProb = float


def digamma(x):
    """Digamma (psi) function, elementwise, for x > 0.

    Recurrence shift into x >= 6 followed by the asymptotic expansion with
    terms through x**-10; absolute error below 1e-10 on that range.
    """
    arr = np.asarray(x, dtype=float)
    if arr.size == 0 or not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise ValueError("digamma requires finite x > 0")
    scalar = arr.ndim == 0
    z = np.array(arr, ndmin=1)
    acc = np.zeros_like(z)
    while True:
        low = z < 6.0
        if not low.any():
            break
        acc[low] -= 1.0 / z[low]  # psi(x) = psi(x + 1) - 1/x
        z[low] += 1.0
    u = 1.0 / (z * z)
    tail = u * (
        1.0 / 12.0
        - u * (1.0 / 120.0 - u * (1.0 / 252.0 - u * (1.0 / 240.0 - u / 132.0)))
    )
    out = acc + np.log(z) - 0.5 / z - tail
    return float(out[0]) if scalar else out.reshape(arr.shape)


def log_gamma(x):
    """Natural log of the gamma function, elementwise, for x > 0.

    Recurrence shift into x >= 8 followed by the Stirling series; absolute
    error below 1e-10 for arguments representable at that precision.
    """
    arr = np.asarray(x, dtype=float)
    if arr.size == 0 or not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise ValueError("log_gamma requires finite x > 0")
    scalar = arr.ndim == 0
    z = np.array(arr, ndmin=1)
    acc = np.zeros_like(z)
    while True:
        low = z < 8.0
        if not low.any():
            break
        acc[low] -= np.log(z[low])  # lgamma(x) = lgamma(x + 1) - log(x)
        z[low] += 1.0
    u = 1.0 / (z * z)
    series = (
        1.0 / 12.0 - u * (1.0 / 360.0 - u * (1.0 / 1260.0 - u / 1680.0))
    ) / z
    out = acc + (z - 0.5) * np.log(z) - z + 0.5 * np.log(2.0 * np.pi) + series
    return float(out[0]) if scalar else out.reshape(arr.shape)


def log_sum_exp(v, axis=None, keepdims: bool = False):
    """Stable log(sum(exp(v))) along `axis`.

    Entries may be -inf; a reduction whose entries are all -inf (or an
    empty input) is an error, as is any NaN.
    """
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty input")
    if np.isnan(arr).any():
        raise ValueError("log_sum_exp input contains NaN")
    hi = np.max(arr, axis=axis, keepdims=True)
    if not np.all(np.isfinite(hi)):
        if np.any(np.isneginf(hi)):
            raise ValueError("log_sum_exp: all entries are -inf")
        raise ValueError("log_sum_exp input contains +inf")
    out = hi + np.log(np.sum(np.exp(arr - hi), axis=axis, keepdims=True))
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    if out.ndim == 0:
        return float(out)
    return out


def normalize_log(v, axis=None):
    """Exponentiate-and-normalize log weights into a simplex vector.

    Returns exp(v - log_sum_exp(v)) along `axis`; rows of the result sum
    to 1 within 1e-12 and the output is invariant to adding a constant
    to all inputs.
    """
    arr = np.asarray(v, dtype=float)
    lse = log_sum_exp(arr, axis=axis, keepdims=True)
    return np.exp(arr - lse)
