"""Direct-effect information matrices and contrast dispersion.

Per response ``k`` the t x t block is the Schur complement

    C_k = T' A* T - T' A* F (F' A* F)^- F' A* T,   A* = H_n kron V*_k,

and the full information matrix is the direct sum of ``C_k / sigma_k^2``.
:func:`info_block_projection` computes the same block by an explicit
whitening-and-projection route and serves as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .design import Design, is_oa_type1_strength2
from .errors import DegeneracyError, EstimabilityError, ValidationError
from .linalg import (
    DEFAULT_TOL,
    Tolerances,
    as_matrix,
    centering_matrix,
    direct_sum,
    kron,
    pseudo_inverse,
    residual_projector,
    sym_eigen,
)
from .model import (
    StudyConfig,
    incidence_carry,
    incidence_direct,
    nuisance_block,
    shift_matrix,
    v_star,
)

__all__ = [
    "InfoBlock",
    "InfoMatrix",
    "ContrastSet",
    "QSummary",
    "PropertyReport",
    "info_block",
    "info_block_projection",
    "info_matrix",
    "oa_closed_form",
    "q_traces",
    "is_completely_symmetric",
    "helmert_contrasts",
    "contrast_dispersion",
    "check_properties",
    "zero_floor",
]

GInverse = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class InfoBlock:
    k: int
    C: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    positive_eigs: NDArray[np.float64]
    estimable: bool


@dataclass(frozen=True)
class InfoMatrix:
    blocks: tuple[InfoBlock, ...]
    sigma2s: tuple[float, ...]
    full: NDArray[np.float64]

    @property
    def g(self) -> int:
        return len(self.blocks)

    @property
    def estimable(self) -> bool:
        return all(b.estimable for b in self.blocks)


@dataclass(frozen=True)
class ContrastSet:
    blocks: tuple[NDArray[np.float64], ...]

    @property
    def combined(self) -> NDArray[np.float64]:
        rows = sum(b.shape[0] for b in self.blocks)
        cols = sum(b.shape[1] for b in self.blocks)
        out = np.zeros((rows, cols))
        r = c = 0
        for b in self.blocks:
            out[r:r + b.shape[0], c:c + b.shape[1]] = b
            r += b.shape[0]
            c += b.shape[1]
        return out

    @classmethod
    def helmert(cls, t: int, g: int = 1) -> "ContrastSet":
        h = helmert_contrasts(t)
        return cls(tuple(h for _ in range(g)))


@dataclass(frozen=True)
class QSummary:
    q11: float
    q12: float
    q22: float
    Q: NDArray[np.float64]
    detQ: float
    factor: float


@dataclass(frozen=True)
class PropertyReport:
    """Largest violations of the structural properties of an information matrix."""

    asymmetry: float
    min_eigenvalue: float
    max_row_sum: float
    max_col_sum: float

    def holds(self, zero_tol: float = 1e-9, sym_tol: float = 1e-9, nnd_tol: float = 1e-9) -> bool:
        return (
            self.asymmetry <= sym_tol
            and self.min_eigenvalue >= -nnd_tol
            and self.max_row_sum <= zero_tol
            and self.max_col_sum <= zero_tol
        )


def zero_floor(n: int, vstar: NDArray[np.float64]) -> float:
    """Absolute scale below which information eigenvalues count as zero (times eig_tol).

    Guards the relative cut when a block is identically zero up to rounding
    (e.g. a single subject).
    """
    return float(n * np.max(np.abs(vstar)))


def _spectrum(c: NDArray, floor: float, tol: Tolerances) -> tuple[NDArray, NDArray, bool]:
    w = sym_eigen(c, tol).values
    t = c.shape[0]
    cut = tol.eig_tol * max(float(np.max(np.abs(w))), floor)
    pos = w[w > cut]
    return w, pos, pos.size == t - 1


def _check_dims(d: Design, v: NDArray) -> None:
    if v.shape != (d.p, d.p):
        raise ValidationError(f"covariance is {v.shape[0]}x{v.shape[1]} but the design has p={d.p} periods")


def info_block(
    d: Design,
    v: ArrayLike,
    tol: Tolerances = DEFAULT_TOL,
    ginverse: GInverse | None = None,
    k: int = 0,
) -> InfoBlock:
    """Information block for direct effects of one response.

    Parameters
    ----------
    d : Design
    v : array_like, shape (p, p)
        Within-subject covariance (symmetric positive definite).
    tol : Tolerances
    ginverse : callable, optional
        Generalized inverse applied to the carryover block ``F' A* F``.
        Defaults to the Moore-Penrose inverse; the result does not depend
        on the choice.
    k : int
        Response index stored on the returned block.
    """
    v = as_matrix(v, "V")
    _check_dims(d, v)
    vs = v_star(v, tol)
    a = kron(centering_matrix(d.n), vs)
    tmat = incidence_direct(d)
    fmat = incidence_carry(d)
    at = a @ tmat
    af = a @ fmat
    c11 = tmat.T @ at
    c12 = tmat.T @ af
    c22 = fmat.T @ af
    floor = zero_floor(d.n, vs)
    gi = pseudo_inverse(0.5 * (c22 + c22.T), tol, floor) if ginverse is None else ginverse(c22)
    c = c11 - c12 @ gi @ c12.T
    w, pos, ok = _spectrum(0.5 * (c + c.T), floor, tol)
    return InfoBlock(k=k, C=c, eigenvalues=w, positive_eigs=pos, estimable=ok)


def info_block_projection(d: Design, v: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """Same block via ``T' S pr_perp(S [X_1 F]) S T`` with ``S = (I_n kron V)^{-1/2}``.

    O((np)^3); intended as an oracle for :func:`info_block`.
    """
    v = as_matrix(v, "V")
    _check_dims(d, v)
    eig = sym_eigen(v, tol)
    if not eig.values[0] > 0:
        raise ValidationError("V is not positive definite")
    # (I_n kron V)^{-1/2} = I_n kron V^{-1/2}
    v_inv_half = (eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T
    s = kron(np.eye(d.n), v_inv_half)
    st = s @ incidence_direct(d)
    nuis = s @ np.hstack([nuisance_block(d), incidence_carry(d)])
    return st.T @ residual_projector(nuis, tol) @ st


def info_matrix(d: Design, cfg: StudyConfig, tol: Tolerances = DEFAULT_TOL) -> InfoMatrix:
    """Direct sum of ``C_k / sigma_k^2`` over the responses of ``cfg``."""
    cache: dict[bytes, InfoBlock] = {}
    blocks = []
    for k, v in enumerate(cfg.covariances(d.p, tol)):
        key = v.tobytes()
        if key not in cache:
            cache[key] = info_block(d, v, tol, k=k)
        b = cache[key]
        blocks.append(b if b.k == k else InfoBlock(k, b.C, b.eigenvalues, b.positive_eigs, b.estimable))
    sig = tuple(cfg.sigma2s)
    full = direct_sum([b.C / s2 for b, s2 in zip(blocks, sig)])
    return InfoMatrix(blocks=tuple(blocks), sigma2s=sig, full=full)


def q_traces(d: Design, v: ArrayLike, subject: int = 0, tol: Tolerances = DEFAULT_TOL) -> tuple[float, float, float]:
    """``(q11, q12, q22)`` trace expressions from one subject's incidence matrix."""
    vs = v_star(v, tol)
    psi = shift_matrix(d.p)
    t1 = np.zeros((d.p, d.t))
    t1[np.arange(d.p), d.layout[:, subject] - 1] = 1.0
    q11 = float(np.trace(t1.T @ vs @ t1))
    q12 = float(np.trace(t1.T @ vs @ psi @ t1))
    q22 = float(np.trace(t1.T @ psi.T @ vs @ psi @ t1) - vs[0, 0] / d.t)
    return q11, q12, q22


def oa_closed_form(
    d: Design,
    v: ArrayLike,
    tol: Tolerances = DEFAULT_TOL,
    scaled_denominator: bool = True,
) -> tuple[NDArray[np.float64], QSummary]:
    """Closed-form information block ``(det(Q) / q22) H_t`` for an OA_I design.

    ``Q = n/(t-1) [[q11, q12], [q12, q22]]`` with traces taken over the first
    subject. With ``scaled_denominator=True`` (default) the denominator is
    the scaled entry ``Q[1, 1] = n q22 / (t-1)``, which reproduces
    :func:`info_block` exactly. ``False`` divides by the bare trace ``q22``
    and overstates the block by the factor ``n / (t-1)``; kept for
    comparison with results computed under that reading.

    The returned matrix is per response, not scaled by ``1 / sigma_k^2``.
    """
    v = as_matrix(v, "V")
    _check_dims(d, v)
    ok, _ = is_oa_type1_strength2(d)
    if not ok:
        raise ValidationError("oa_closed_form requires an OA_I(n, p=t, t, 2) design")
    q11, q12, q22 = q_traces(d, v, 0, tol)
    scale = d.n / (d.t - 1)
    qmat = scale * np.array([[q11, q12], [q12, q22]])
    det_q = float(qmat[0, 0] * qmat[1, 1] - qmat[0, 1] ** 2)
    mag = float(np.max(np.abs(qmat)))
    if abs(det_q) <= tol.eig_tol * mag * mag or abs(q22) <= tol.eig_tol * mag:
        raise DegeneracyError(f"closed form is degenerate (det Q = {det_q:.3g}, q22 = {q22:.3g})")
    denom = qmat[1, 1] if scaled_denominator else q22
    factor = det_q / denom
    summary = QSummary(q11=q11, q12=q12, q22=q22, Q=qmat, detQ=det_q, factor=factor)
    return factor * centering_matrix(d.t), summary


def is_completely_symmetric(m: ArrayLike, tol: float = 1e-9) -> bool:
    """All diagonal entries equal and all off-diagonal entries equal, within ``tol``."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValidationError("complete symmetry needs a square matrix")
    diag = np.diag(a)
    off = a[~np.eye(a.shape[0], dtype=bool)]
    if np.ptp(diag) > tol:
        return False
    return off.size == 0 or bool(np.ptp(off) <= tol)


def helmert_contrasts(t: int) -> NDArray[np.float64]:
    """Orthonormal Helmert contrasts, shape (t-1, t)."""
    if t < 2:
        raise ValidationError(f"contrasts need t >= 2, got {t}")
    out = np.zeros((t - 1, t))
    for k in range(1, t):
        out[k - 1, :k] = 1.0
        out[k - 1, k] = -k
        out[k - 1] /= np.sqrt(k * (k + 1))
    return out


def contrast_dispersion(info: InfoMatrix, contrasts: ContrastSet, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """``G_d = direct sum of sigma_k^2 L_k C_k^+ L_k'``."""
    if len(contrasts.blocks) != info.g:
        raise ValidationError(f"{len(contrasts.blocks)} contrast blocks for {info.g} responses")
    parts = []
    for b, s2, lk in zip(info.blocks, info.sigma2s, contrasts.blocks):
        if not b.estimable:
            raise EstimabilityError(f"direct-effect contrasts are not estimable for response {b.k}")
        parts.append(s2 * lk @ pseudo_inverse(0.5 * (b.C + b.C.T), tol) @ lk.T)
    return direct_sum(parts)


def check_properties(c: ArrayLike) -> PropertyReport:
    """Symmetry, non-negative definiteness and zero row/column sums of ``c``.

    ``min_eigenvalue`` is relative to the largest absolute eigenvalue.
    """
    a = as_matrix(c)
    sym = 0.5 * (a + a.T)
    w = np.linalg.eigvalsh(sym)
    scale = max(float(np.max(np.abs(w))), 1.0)
    return PropertyReport(
        asymmetry=float(np.max(np.abs(a - a.T))),
        min_eigenvalue=float(w[0] / scale),
        max_row_sum=float(np.max(np.abs(a.sum(axis=1)))),
        max_col_sum=float(np.max(np.abs(a.sum(axis=0)))),
    )
