"""Small numerical core used by every model in the package.

All array math is done in float64 on plain numpy arrays.  Matrices are
2-D, biases are 1-D, and shape problems raise :class:`ShapeError` early
with both offending shapes in the message, because silent broadcasting is
the classic way to train garbage without noticing.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericalError, ShapeError

Matrix = np.ndarray
Vector = np.ndarray


def make_rng(seed: int) -> np.random.Generator:
    """Return the package-wide deterministic generator (PCG64) for a seed."""
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Multiply two 2-D float64 matrices.

    Args:
        a: array of shape (m, k).
        b: array of shape (k, n).

    Returns:
        The (m, n) product in float64.

    Raises:
        ShapeError: if either argument is not 2-D or the inner
            dimensions disagree.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D arguments, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    """Hyperbolic tangent."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x: np.ndarray) -> np.ndarray:
    """Rectified linear unit, max(x, 0)."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> Matrix:
    """Draw a (rows, cols) weight matrix from the Glorot uniform range.

    Entries are uniform on [-limit, limit] with
    limit = sqrt(6 / (rows + cols)).
    """
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"glorot_init needs positive dimensions, got ({rows}, {cols})")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def finite_diff_gradient(
    f: Callable[[np.ndarray], float],
    params: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Numerically estimate df/dparams with central differences.

    Args:
        f: scalar function of a flat parameter vector.  It must not keep
            references to the vector it is handed; a scratch copy is reused.
        params: flat float64 vector, left unmodified.
        eps: half-width of the central difference step.

    Returns:
        Vector of the same shape as ``params`` with
        (f(p + eps*e_j) - f(p - eps*e_j)) / (2*eps) in coordinate j.

    Raises:
        NumericalError: if any evaluation of ``f`` is non-finite; the
            message names the coordinate being perturbed.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1:
        raise ShapeError(f"finite_diff_gradient needs a flat vector, got shape {params.shape}")
    if eps <= 0.0:
        raise NumericalError(f"step size must be positive, got {eps}")
    grad = np.empty_like(params)
    scratch = params.copy()
    for j in range(params.size):
        original = scratch[j]
        scratch[j] = original + eps
        f_plus = float(f(scratch))
        scratch[j] = original - eps
        f_minus = float(f(scratch))
        scratch[j] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(
                f"non-finite loss while perturbing coordinate {j}: f(+eps)={f_plus}, f(-eps)={f_minus}"
            )
        grad[j] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise |a - b| / max(|a|, |b|, 1e-8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.abs(a - b) / denom
