"""Dense-vector kernels and the finite-difference gradient oracle.

All public math in the lab runs through these helpers. Tests pin 64-bit
arithmetic; production callers may pass float32 data, which is promoted.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from alignlab.errors import NonFiniteError, ShapeMismatchError, ZeroNormError

DEFAULT_FD_EPS = 1e-5


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeMismatchError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def check_finite(x: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors: a.b / (|a||b|).

    Symmetric in its arguments and invariant to positive rescaling of
    either input. Rejects dimension mismatches and zero-norm inputs
    rather than returning NaN.
    """
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise ShapeMismatchError(
            f"cosine_similarity: dimension mismatch {va.shape[0]} vs {vb.shape[0]}"
        )
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine_similarity: zero-norm input")
    return float(np.dot(va, vb) / (na * nb))


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def normalize_rows(m) -> tuple[np.ndarray, np.ndarray]:
    """Return (unit-norm rows, original norms). Raises on zero-norm rows."""
    mat = as_matrix(m)
    norms = row_norms(mat)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroNormError(f"normalize_rows: row {bad} has zero norm")
    return mat / norms[:, None], norms


def row_cosines(a, b) -> np.ndarray:
    """Per-row cosine between matched rows of two equal-shape matrices."""
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise ShapeMismatchError(f"row_cosines: shape mismatch {ma.shape} vs {mb.shape}")
    ua, _ = normalize_rows(ma)
    ub, _ = normalize_rows(mb)
    return np.einsum("ij,ij->i", ua, ub)


def logsumexp(values) -> float:
    """log(sum(exp(v))) via max-shift; exact for singleton input."""
    v = as_vector(values)
    if v.size == 0:
        raise ShapeMismatchError("logsumexp: empty input")
    m = float(np.max(v))
    if v.size == 1:
        return m
    return m + float(np.log(np.sum(np.exp(v - m))))


def finite_difference_gradient(
    f: Callable[[np.ndarray], float],
    params,
    eps: float = DEFAULT_FD_EPS,
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    This is the oracle every analytic gradient in the repo is checked
    against: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) per coordinate.
    """
    if eps <= 0:
        raise ShapeMismatchError("finite_difference_gradient: eps must be > 0")
    theta = as_vector(params).copy()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + eps
        hi = float(f(theta))
        theta[i] = orig - eps
        lo = float(f(theta))
        theta[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteError(
                f"finite_difference_gradient: non-finite f at coordinate {i}"
            )
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    """max_i |a_i - b_i| / (max(|a_i|, |b_i|) + floor).

    The acceptance metric for gradient checks; `floor` guards near-zero
    coordinates.
    """
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise ShapeMismatchError("max_relative_error: length mismatch")
    denom = np.maximum(np.abs(va), np.abs(vb)) + floor
    return float(np.max(np.abs(va - vb) / denom)) if va.size else 0.0
