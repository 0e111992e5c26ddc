"""Stick-breaking bijection between the open probability simplex and the
open box (0,1)^(R-1).

An abundance vector ``a`` (R nonnegative entries summing to one) is
represented by coordinates ``t`` with

    a_r = (prod_{k<r} t_k) * (1 - t_r)   for r < R,
    a_R =  prod_{k<R} t_k,

which turns the equality constraint into the box constraint
``0 < t_r < 1``.  All functions accept a single vector or a matrix whose
columns are independent points.
"""

from __future__ import annotations

import numpy as np

STICK_EPS = 1e-12  # domain tolerance for (0,1) checks


def _as_float_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim not in (1, 2):
        raise ValueError("expected a vector or a matrix of column vectors")
    return a


def stick_to_abundance(t: np.ndarray) -> np.ndarray:
    """Unchecked stick -> abundance transform; columnwise for 2-D input.

    Hot-path helper: no domain validation, output shape (R, ...) for
    input shape (R-1, ...).
    """
    t = np.asarray(t, dtype=float)
    r1 = t.shape[0]
    prods = np.empty((r1 + 1,) + t.shape[1:])
    prods[0] = 1.0
    np.cumprod(t, axis=0, out=prods[1:])
    a = np.empty_like(prods)
    np.multiply(prods[:r1], 1.0 - t, out=a[:r1])
    a[r1] = prods[r1]
    return a


def t_to_a(t, R: int | None = None) -> np.ndarray:
    """Map stick coordinates to an abundance vector on the simplex.

    Parameters
    ----------
    t : array, shape (R-1,) or (R-1, N)
        Stick coordinates, each strictly inside (0, 1).
    R : int, optional
        Expected number of abundances; validated against ``len(t) + 1``.

    Returns
    -------
    array, shape (R,) or (R, N); nonnegative columns summing to one.
    """
    t = _as_float_array(t)
    if R is not None and R != t.shape[0] + 1:
        raise ValueError(f"t has {t.shape[0]} entries, expected R-1={R - 1}")
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise ValueError("stick coordinates must lie strictly in (0,1)")
    return stick_to_abundance(t)


def a_to_t(a) -> np.ndarray:
    """Inverse stick transform: t_r = (sum_{i>r} a_i) / (sum_{i>=r} a_i).

    Requires a strictly positive abundance vector summing to one
    (boundary points have no preimage in the open box).
    """
    a = _as_float_array(a)
    if np.any(a <= 0.0):
        raise ValueError("abundances must be strictly positive")
    if np.any(np.abs(a.sum(axis=0) - 1.0) > STICK_EPS):
        raise ValueError("abundances must sum to one")
    # suffix[r] = sum_{i >= r} a_i (1-based r); suffix[0] = 1
    suffix = np.cumsum(a[::-1], axis=0)[::-1]
    t = suffix[1:] / suffix[:-1]
    return np.clip(t, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def jacobian_a_wrt_t(t) -> np.ndarray:
    """Jacobian matrix d a_r / d t_i, shape (R, R-1), for one stick point.

    Entries: 0 for i > r, a_r/(t_i - 1) for i = r, a_r/t_i for i < r.
    Each column sums to zero (the image stays on the simplex).
    """
    t = _as_float_array(t)
    if t.ndim != 1:
        raise ValueError("jacobian_a_wrt_t expects a single stick vector")
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise ValueError("stick coordinates must lie strictly in (0,1)")
    a = stick_to_abundance(t)
    R = a.shape[0]
    jac = np.zeros((R, R - 1))
    for r in range(R):
        jac[r, :r] = a[r] / t[:r]
        if r < R - 1:
            jac[r, r] = a[r] / (t[r] - 1.0)
    return jac
