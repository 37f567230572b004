"""Small dense symmetric-matrix kernel.

Everything here works on plain ``numpy`` arrays. Matrices handled by the
estimator are tiny (N rarely above a dozen), so clarity wins over speed.
"""

from dataclasses import dataclass

import numpy as np

SYM_TOL = 1e-12
JACOBI_TOL = 1e-14
COND_LIMIT = 1e12


class LinalgError(ValueError):
    pass


class SingularMatrixError(LinalgError):
    """Raised when a matrix that must be inverted is (numerically) singular."""

    def __init__(self, factor, cond):
        self.factor = factor
        self.cond = cond
        super().__init__(f"{factor} is singular (condition estimate {cond:.3e})")


def as_sym(m, check=True):
    """Return ``m`` as a symmetrized float array.

    With ``check`` the input must already be symmetric up to
    ``SYM_TOL * (1 + max|m|)``; the result is ``(m + m.T) / 2`` either way.
    """
    a = np.array(m, dtype=float, copy=True)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise LinalgError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError("matrix has non-finite entries")
    if check:
        scale = 1.0 + np.max(np.abs(a))
        asym = np.max(np.abs(a - a.T))
        if asym > SYM_TOL * scale:
            raise LinalgError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (a + a.T)


def symmetrize(m):
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in ascending order and the matching orthonormal basis."""

    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self):
        return (self.basis * self.eigenvalues) @ self.basis.T

    def apply(self, fn):
        """Matrix function ``Q f(L) Q^T``."""
        return symmetrize((self.basis * fn(self.eigenvalues)) @ self.basis.T)

    @property
    def min(self):
        return float(self.eigenvalues[0])

    @property
    def max(self):
        return float(self.eigenvalues[-1])


def jacobi_eigen(m, tol=JACOBI_TOL, max_sweeps=100):
    """Cyclic Jacobi eigen-solver.

    Sweeps over every off-diagonal pair and annihilates it with a plane
    rotation until the off-diagonal Frobenius norm drops below
    ``tol * ||m||_F``.
    """
    a = as_sym(m)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2) * 2.0)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle from the symmetric Schur decomposition
                gap = a[q, q] - a[p, p]
                if abs(apq) * 1e150 < abs(gap):
                    t = apq / gap  # tau would overflow; first-order angle
                else:
                    tau = gap / (2.0 * apq)
                    t = np.copysign(1.0, tau) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise LinalgError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(w[order], v[:, order])


def sym_eigen(m, method="lapack"):
    """Spectral decomposition of a symmetric matrix, eigenvalues ascending.

    ``method="lapack"`` uses ``numpy.linalg.eigh``; ``method="jacobi"`` runs
    the in-house cyclic Jacobi solver. Both return the same contract.
    """
    if method == "jacobi":
        return jacobi_eigen(m)
    if method != "lapack":
        raise ValueError(f"unknown eigen method {method!r}")
    a = as_sym(m)
    w, v = np.linalg.eigh(a)
    return SpectralDecomposition(w, v)


def eigvals(m):
    """Ascending eigenvalues of a symmetric matrix (no symmetry check)."""
    return np.linalg.eigvalsh(symmetrize(np.asarray(m, dtype=float)))


def spd_inverse(m, factor="matrix"):
    """Inverse of an SPD matrix through its eigenvalues.

    Raises :class:`SingularMatrixError` if the smallest eigenvalue is not
    positive or the condition number exceeds ``COND_LIMIT``.
    """
    dec = sym_eigen(m)
    lo, hi = dec.min, dec.max
    if lo <= 0.0 or hi / lo > COND_LIMIT:
        cond = np.inf if lo <= 0.0 else hi / lo
        raise SingularMatrixError(factor, cond)
    return dec.apply(lambda w: 1.0 / w)


def spd_sqrt(m):
    """Principal square root of a PSD matrix (tiny negative eigenvalues clipped)."""
    dec = sym_eigen(m)
    if dec.min < -1e-12 * (1.0 + abs(dec.max)):
        raise LinalgError(f"matrix is not PSD (min eigenvalue {dec.min:.3e})")
    return dec.apply(lambda w: np.sqrt(np.clip(w, 0.0, None)))


def _checked_inverse(m, factor):
    m = np.asarray(m, dtype=float)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(factor, cond)
    return np.linalg.inv(m)


def kailath_inverse(a, b, c):
    """``(A + B C)^{-1}`` via ``A^{-1} - A^{-1} B (I + C A^{-1} B)^{-1} C A^{-1}``.

    ``A`` is N x N, ``B`` is N x M and ``C`` is M x N. ``A`` need not be
    symmetric. Raises :class:`SingularMatrixError` naming ``A`` or the inner
    factor when either is ill-conditioned beyond ``COND_LIMIT``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = a.shape[0]
    if b.ndim == 1:
        b = b.reshape(n, 1)
    if c.ndim == 1:
        c = c.reshape(1, n)
    if a.shape != (n, n) or b.shape[0] != n or c.shape != (b.shape[1], n):
        raise LinalgError(
            f"incompatible shapes A{a.shape}, B{b.shape}, C{c.shape}"
        )
    a_inv = _checked_inverse(a, "A")
    inner = np.eye(b.shape[1]) + c @ a_inv @ b
    inner_inv = _checked_inverse(inner, "I + C A^-1 B")
    return a_inv - a_inv @ b @ inner_inv @ c @ a_inv


def psd_order(m1, m2, tol=1e-10):
    """True iff ``m1 <= m2`` in the Loewner order, up to a relative tolerance.

    Checks ``lambda_min(m2 - m1) >= -tol * (1 + rho(m2 - m1))``.
    """
    m1 = np.atleast_2d(np.asarray(m1, dtype=float))
    m2 = np.atleast_2d(np.asarray(m2, dtype=float))
    if m1.shape != m2.shape:
        raise LinalgError(f"dimension mismatch {m1.shape} vs {m2.shape}")
    w = eigvals(m2 - m1)
    rho = float(np.max(np.abs(w)))
    return bool(w[0] >= -tol * (1.0 + rho))
