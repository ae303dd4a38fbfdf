"""Dense real matrix primitives shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64; functions
validate shape and finiteness on entry. The symmetric eigensolver is a
cyclic Jacobi routine (compiled when available).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._backend import jacobi_eigh
from .errors import ValidationError

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "SymEigen",
    "as_matrix",
    "is_symmetric",
    "sym_eigen",
    "pseudo_inverse",
    "reflexive_ginverse",
    "centering_matrix",
    "kron",
    "direct_sum",
    "residual_projector",
    "cholesky",
    "det",
    "rank",
]

JACOBI_RTOL = 1e-12


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds.

    ``eig_tol`` is relative to the largest absolute eigenvalue; ``sym_tol``
    is an absolute bound on ``|M - M'|``.
    """

    eig_tol: float = 1e-9
    sym_tol: float = 1e-10

    def __post_init__(self):
        if not (self.eig_tol > 0 and self.sym_tol > 0):
            raise ValidationError("tolerances must be strictly positive")


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class SymEigen:
    values: NDArray[np.float64]
    vectors: NDArray[np.float64]

    def reconstruct(self) -> NDArray[np.float64]:
        return (self.vectors * self.values) @ self.vectors.T


def as_matrix(m: ArrayLike, name: str = "matrix") -> NDArray[np.float64]:
    """Coerce to a finite 2-D float64 array with at least one row and column."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"{name}: expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: entries must be finite")
    return a


def _square(m: ArrayLike, name: str) -> NDArray[np.float64]:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name}: expected a square matrix, got shape {a.shape}")
    return a


def is_symmetric(m: ArrayLike, tol: float = DEFAULT_TOL.sym_tol) -> bool:
    a = np.asarray(m, dtype=np.float64)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(np.max(np.abs(a - a.T), initial=0.0) <= tol)


def sym_eigen(m: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> SymEigen:
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Must be symmetric within ``tol.sym_tol``; it is symmetrized as
        ``(m + m') / 2`` before the Jacobi sweeps.
    tol : Tolerances

    Returns
    -------
    SymEigen
        Ascending eigenvalues with matching orthonormal eigenvector columns.

    Raises
    ------
    ValidationError
        If ``m`` is not square or not symmetric.
    """
    a = _square(m, "sym_eigen input")
    if not is_symmetric(a, tol.sym_tol):
        raise ValidationError(
            f"sym_eigen input not symmetric (max |M - M'| = {np.max(np.abs(a - a.T)):.3g})"
        )
    w, v = jacobi_eigh(0.5 * (a + a.T), JACOBI_RTOL)
    return SymEigen(values=w, vectors=v)


def _zero_cut(values: NDArray, tol: Tolerances, scale: float = 0.0) -> float:
    return tol.eig_tol * max(float(np.max(np.abs(values), initial=0.0)), scale)


def pseudo_inverse(m: ArrayLike, tol: Tolerances = DEFAULT_TOL, scale: float = 0.0) -> NDArray[np.float64]:
    """Moore-Penrose inverse of a symmetric non-negative definite matrix.

    Eigenvalues above ``eig_tol * max(max|eig|, scale)`` are inverted, the
    rest zeroed. ``scale`` is the magnitude of the data the matrix was
    formed from; it lets a matrix that is zero up to rounding be recognised
    as zero rather than as noise to invert.
    """
    eig = sym_eigen(m, tol)
    cut = _zero_cut(eig.values, tol, scale)
    if eig.values[0] < -cut:
        raise ValidationError(f"pseudo_inverse: matrix is indefinite (min eigenvalue {eig.values[0]:.3g})")
    keep = eig.values > cut
    v = eig.vectors[:, keep]
    out = (v / eig.values[keep]) @ v.T
    return 0.5 * (out + out.T)


def reflexive_ginverse(
    m: ArrayLike,
    left_weight: ArrayLike | None = None,
    right_weight: ArrayLike | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> NDArray[np.float64]:
    """A reflexive generalized inverse built from a rank factorization.

    With ``m = B C`` (B full column rank, C full row rank), returns
    ``C_r B_l`` where ``B_l = (B' W1 B)^{-1} B' W1`` is a weighted left
    inverse and ``C_r = W2 C' (C W2 C')^{-1}`` a weighted right inverse.
    Identity weights give the Moore-Penrose inverse; any other positive
    definite weights give a different reflexive g-inverse (``m G m = m``
    and ``G m G = G``).
    """
    eig = sym_eigen(m, tol)
    keep = np.abs(eig.values) > _zero_cut(eig.values, tol)
    q = eig.vectors[:, keep]
    b = q * eig.values[keep]
    c = q.T
    n = q.shape[0]
    w1 = np.eye(n) if left_weight is None else as_matrix(left_weight, "left_weight")
    w2 = np.eye(n) if right_weight is None else as_matrix(right_weight, "right_weight")
    if b.shape[1] == 0:
        return np.zeros((n, n))
    b_left = np.linalg.solve(b.T @ w1 @ b, b.T @ w1)
    c_right = w2 @ c.T @ np.linalg.inv(c @ w2 @ c.T)
    return c_right @ b_left


def centering_matrix(m: int) -> NDArray[np.float64]:
    """``I_m - J_m / m``."""
    if int(m) != m or m < 1:
        raise ValidationError(f"centering_matrix: size must be a positive integer, got {m}")
    m = int(m)
    return np.eye(m) - np.full((m, m), 1.0 / m)


def kron(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    return np.kron(as_matrix(a, "kron lhs"), as_matrix(b, "kron rhs"))


def direct_sum(blocks: Sequence[ArrayLike]) -> NDArray[np.float64]:
    """Block-diagonal assembly of square blocks; off-block entries are exactly zero."""
    if len(blocks) == 0:
        raise ValidationError("direct_sum: need at least one block")
    mats = [_square(b, f"direct_sum block {i}") for i, b in enumerate(blocks)]
    size = sum(x.shape[0] for x in mats)
    out = np.zeros((size, size))
    pos = 0
    for x in mats:
        k = x.shape[0]
        out[pos:pos + k, pos:pos + k] = x
        pos += k
    return out


def residual_projector(m: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """Orthogonal projector onto the complement of the column space: ``I - M (M'M)^+ M'``."""
    a = as_matrix(m, "residual_projector input")
    gram = a.T @ a
    proj = np.eye(a.shape[0]) - a @ pseudo_inverse(0.5 * (gram + gram.T), tol) @ a.T
    return 0.5 * (proj + proj.T)


def rank(m: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> int:
    """Numerical rank of a symmetric matrix (eigenvalues above the relative cut)."""
    eig = sym_eigen(m, tol)
    return int(np.sum(np.abs(eig.values) > _zero_cut(eig.values, tol)))


def cholesky(m: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """Lower-triangular ``L`` with ``L L' = m`` for symmetric positive definite ``m``."""
    a = _square(m, "cholesky input")
    eig = sym_eigen(a, tol)
    if not eig.values[0] > _zero_cut(eig.values, tol):
        raise ValidationError(f"cholesky: matrix is not positive definite (min eigenvalue {eig.values[0]:.3g})")
    return np.linalg.cholesky(0.5 * (a + a.T))


def det(m: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> float:
    a = _square(m, "det input")
    if is_symmetric(a, tol.sym_tol):
        return float(np.prod(sym_eigen(a, tol).values))
    return float(np.linalg.det(a))
