"""Dense float64 linear algebra and elementary neural primitives.

Matrices are plain 2-D float64 numpy arrays in row-major order.  Everything
here is a pure function; the eigensolver is a cyclic Jacobi iteration so the
whole stack stays deterministic and dependency-free.
"""

from __future__ import annotations

import numpy as np

Mat = np.ndarray

_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
_GELU_CUBIC = 0.044715


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class ZeroNormError(ValueError):
    """A vector that must be nonzero has zero norm."""


class NotSymmetricError(ValueError):
    """Input matrix is not symmetric within tolerance."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to reach its tolerance."""


def as_mat(x, name: str = "matrix") -> Mat:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def matmul(a: Mat, b: Mat) -> Mat:
    a = as_mat(a, "a")
    b = as_mat(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}"
        )
    return a @ b


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction; rows sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm_row(x, gain, bias, eps: float = 1e-5) -> np.ndarray:
    """Normalize a row to zero mean / unit (biased) variance, then scale-shift."""
    x = np.asarray(x, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if not (x.shape == gain.shape == bias.shape):
        raise ShapeMismatchError(
            f"layer_norm_row length mismatch: x{x.shape} gain{gain.shape} bias{bias.shape}"
        )
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    mean = x.mean()
    var = np.mean((x - mean) ** 2)
    return gain * (x - mean) / np.sqrt(var + eps) + bias


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeMismatchError(f"cosine length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroNormError("cosine undefined for zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def gelu_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(tanh term, x^2) shared by the GELU value and its derivative."""
    x2 = x * x
    return np.tanh(_SQRT_2_OVER_PI * x * (1.0 + _GELU_CUBIC * x2)), x2


def gelu_value(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + t)


def gelu_deriv(x: np.ndarray, t: np.ndarray, x2: np.ndarray) -> np.ndarray:
    d_inner = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_CUBIC * x2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner


def gelu(x):
    """tanh-approximation GELU (GPT-2 convention)."""
    x = np.asarray(x, dtype=np.float64)
    t, _ = gelu_parts(x)
    out = gelu_value(x, t)
    return float(out) if out.ndim == 0 else out


def gelu_grad(x):
    """Derivative of the tanh-approximation GELU."""
    x = np.asarray(x, dtype=np.float64)
    t, x2 = gelu_parts(x)
    out = gelu_deriv(x, t, x2)
    return float(out) if out.ndim == 0 else out


def sym_eig(c: Mat, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, Mat]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvector matrix with matching columns).
    Sweeps stop once the largest off-diagonal magnitude drops below `tol`.
    """
    c = as_mat(c, "c")
    d = c.shape[0]
    if c.shape[1] != d:
        raise NotSymmetricError(f"matrix must be square, got {c.shape}")
    asym = np.abs(c - c.T).max() if d > 0 else 0.0
    if asym > 1e-10:
        raise NotSymmetricError(f"matrix asymmetry {asym:.3e} exceeds 1e-10")

    a = 0.5 * (c + c.T)
    v = np.eye(d)
    if d <= 1:
        return a.diagonal().copy(), v

    off_mask = ~np.eye(d, dtype=bool)
    skip = 0.1 * tol
    for _ in range(max_sweeps):
        off = np.abs(a[off_mask]).max()
        if off < tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                cos_r = 1.0 / np.sqrt(t * t + 1.0)
                sin_r = t * cos_r
                # two-sided rotation J^T A J on the (p, q) plane
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = cos_r * col_p - sin_r * col_q
                a[:, q] = sin_r * col_p + cos_r * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = cos_r * row_p - sin_r * row_q
                a[q, :] = sin_r * row_p + cos_r * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = cos_r * vec_p - sin_r * vec_q
                v[:, q] = sin_r * vec_p + cos_r * vec_q
    residual = np.abs(a[off_mask]).max()
    if residual >= tol:
        raise ConvergenceError(
            f"Jacobi sweeps exhausted ({max_sweeps}); off-diagonal residual {residual:.3e}"
        )
    eigvals = a.diagonal().copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], v[:, order]
