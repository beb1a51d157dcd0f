"""Finite differences and compensated summation used across the package.

All callables handled here are vectorised over leading axes: a point set has
shape ``(..., n)`` and the callable returns an array whose leading axes match.
"""

import math

import numpy as np

REL_STEP = 1e-5
MIN_STEP = 1e-5


def fd_steps(x):
    """Central-difference step per coordinate, ``max(1e-5, 1e-5 |x_j|)``."""
    x = np.asarray(x, dtype=float)
    return np.maximum(MIN_STEP, REL_STEP * np.abs(x))


def fd_jacobian(func, x, steps=None):
    """Central-difference derivative of ``func`` with respect to the last axis of ``x``.

    If ``func(x)`` has shape ``(..., *s)`` the result has shape ``(..., *s, n)``
    with ``out[..., k] = d func / d x_k``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = fd_steps(x) if steps is None else np.broadcast_to(steps, x.shape)
    cols = []
    for k in range(n):
        e = np.zeros(x.shape)
        e[..., k] = h[..., k]
        fp = np.asarray(func(x + e), dtype=float)
        fm = np.asarray(func(x - e), dtype=float)
        hk = h[..., k].reshape(h.shape[:-1] + (1,) * (fp.ndim - x.ndim + 1))
        cols.append((fp - fm) / (2.0 * hk))
    return np.stack(cols, axis=-1)


def fd_gradient(func, x, steps=None):
    """Gradient of a scalar field; shape ``(..., n)``."""
    return fd_jacobian(func, x, steps)


def fd_hessian(grad, x, steps=None):
    """Hessian from a gradient callable, symmetrised; shape ``(..., n, n)``."""
    hess = fd_jacobian(grad, x, steps)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def compensated_sum(values):
    """Exactly rounded sum of an iterable of floats."""
    return math.fsum(float(v) for v in values)


def squared_norm(v):
    """Compensated ``sum(v_i**2)`` for a 1-d real vector."""
    return math.fsum(float(c) * float(c) for c in np.ravel(v))


def as_point(x, dim=None, what="point"):
    """Validate a single finite point of the given dimension and return it as float array."""
    from .errors import InvalidInputError

    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{what} must be a 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidInputError(f"{what} has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} has non-finite entries")
    return arr


def matvec(a, v):
    """Batched ``a @ v`` over leading axes."""
    return np.einsum("...ij,...j->...i", a, v)


def combine(c, y):
    """Batched ``sum_k c_k y_k`` for coefficients ``(..., N)`` and rows ``(..., N, n)``."""
    return np.einsum("...k,...kn->...n", c, y)


def dot(a, b):
    return np.einsum("...i,...i->...", a, b)
