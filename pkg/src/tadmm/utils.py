"""Small shared helpers: array coercion, ordered reductions, validation."""

import numpy as np


def as_vector(v, name="vector", size=None):
    """Coerce to a 1-D float64 array, optionally checking its length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    return arr


def as_matrix(m, name="matrix", shape=None):
    """Coerce to a 2-D float64 array, optionally checking its shape."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if shape is not None:
        rows, cols = shape
        if rows is not None and arr.shape[0] != rows:
            raise ValueError(f"{name} must have {rows} rows, got {arr.shape[0]}")
        if cols is not None and arr.shape[1] != cols:
            raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    return arr


def check_symmetric(m, name="matrix", tol=1e-12):
    """Raise unless ``m`` is symmetric within ``tol`` (absolute, entrywise)."""
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    err = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if err > tol:
        raise ValueError(f"{name} is not symmetric (max asymmetry {err:.3e} > {tol:.0e})")


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix (dense eigensolve)."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh((m + m.T) / 2.0)[0])


def ordered_sum(arrays):
    """Sum a sequence of equal-shape arrays strictly left to right.

    Guarantees a fixed floating-point reduction order regardless of how the
    caller parallelizes the work that produced the terms.
    """
    it = iter(arrays)
    try:
        total = np.array(next(it), dtype=float, copy=True)
    except StopIteration:
        raise ValueError("ordered_sum needs at least one term") from None
    for a in it:
        total += a
    return total


def kron_apply(m, v, block):
    """Apply ``(m ⊗ I_block)`` to a stacked vector without forming the lift.

    ``v`` stacks ``m.shape[1]`` blocks of length ``block``.
    """
    n_in = m.shape[1]
    return (m @ v.reshape(n_in, block)).reshape(-1)
