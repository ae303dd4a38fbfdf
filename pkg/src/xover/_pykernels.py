"""Pure-Python (numpy) implementations of the hot kernels.

Mirrors the API of the compiled ``_ckernels`` module exactly; used when the
extension is not built or when ``XOVER_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import numpy as np

__all__ = ["jacobi_eigh", "block_spectra"]


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def jacobi_eigh(a, rel_tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric input. Only used as a starting copy.
    rel_tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``rel_tol`` times its initial value.
    max_sweeps : int
        Hard cap on the number of sweeps.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns, ordered like ``w``.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    off0 = _off_norm(a)
    thresh = rel_tol * off0
    for _ in range(max_sweeps):
        if _off_norm(a) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                g = 100.0 * abs(apq)
                # negligible next to both pivots: drop it (Rutishauser)
                if abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    tn = 0.5 / theta  # theta**2 would overflow
                else:
                    tn = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        tn = -tn
                c = 1.0 / np.sqrt(tn * tn + 1.0)
                s = tn * c
                colp = a[:, p].copy()
                colq = a[:, q]
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :]
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _sequence_blocks(seqs: np.ndarray, t: int) -> np.ndarray:
    """Stack of p x 2t matrices [T_s, psi T_s] for each candidate sequence."""
    n_seq, p = seqs.shape
    b = np.zeros((n_seq, p, 2 * t))
    rows = np.arange(p)
    for s in range(n_seq):
        b[s, rows, seqs[s]] = 1.0
        b[s, rows[1:], t + seqs[s, :-1]] = 1.0
    return b


def block_spectra(seqs, counts, vstar, t: int, zero_rtol: float, abs_scale: float):
    """Spectra of the direct-effect information block for many designs.

    Each design is a multiset of subject sequences given by a row of
    ``counts`` over the candidate ``seqs`` (0-based labels, shape S x p).
    Returns a (D, t) array of ascending eigenvalues.
    """
    seqs = np.ascontiguousarray(seqs, dtype=np.int64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    vstar = np.ascontiguousarray(vstar, dtype=np.float64)
    blocks = _sequence_blocks(seqs, t)
    w_seq = np.einsum("spa,pq,sqb->sab", blocks, vstar, blocks)
    out = np.empty((counts.shape[0], t))
    for d in range(counts.shape[0]):
        c = counts[d].astype(np.float64)
        n = c.sum()
        s_sum = np.tensordot(c, blocks, axes=1)
        m = np.tensordot(c, w_seq, axes=1) - s_sum.T @ vstar @ s_sum / n
        c11 = m[:t, :t]
        c12 = m[:t, t:]
        c22 = m[t:, t:]
        w22, v22 = jacobi_eigh(c22)
        cut = zero_rtol * max(np.max(np.abs(w22)), abs_scale)
        keep = w22 > cut
        pinv = (v22[:, keep] / w22[keep]) @ v22[:, keep].T
        info = c11 - c12 @ pinv @ c12.T
        info = 0.5 * (info + info.T)
        out[d] = jacobi_eigh(info)[0]
    return out
