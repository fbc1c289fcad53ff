"""Dense complex matrix kernel.

All heavier routines (soft-system defect sweeps, the semidefinite solver,
positivity verdicts) reduce to the Hermitian spectral primitives collected
here.  Matrices are plain ``numpy`` arrays of complex doubles; every entry
is required to be finite.  Hermitian input is enforced by explicit
symmetrization ``(a + a*)/2`` before the eigensolve, and the symmetrization
defect is checked against a tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotHermitian, NotSquare, ShapeMismatch

__all__ = [
    "Tolerance",
    "default_tolerance",
    "as_matrix",
    "dagger",
    "frobenius",
    "hermiticity_defect",
    "herm_eigen",
    "op_norm",
    "min_eig",
    "max_eig",
    "is_psd",
    "kron",
    "batch_op_norm",
    "batch_min_eig",
]


@dataclass(frozen=True)
class Tolerance:
    """Absolute/relative slack used by tolerance-aware positivity checks."""

    abs_eps: float = 1e-12
    rel_eps: float = 1e-9

    def __post_init__(self):
        if self.abs_eps < 0 or self.rel_eps < 0:
            raise ValueError("tolerance components must be nonnegative")

    def slack(self, scale: float = 0.0) -> float:
        """Total allowed defect for a quantity of magnitude ``scale``."""
        return self.abs_eps + self.rel_eps * abs(scale)


def default_tolerance(dim: int) -> Tolerance:
    """Dimension-scaled default: abs 1e-9*dim, rel 1e-9.

    Defect quantities of interest decay like 2**(-m), far above roundoff
    at desk scale, so these are generous without masking real failures.
    """
    return Tolerance(abs_eps=1e-9 * max(dim, 1), rel_eps=1e-9)


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D complex array and reject non-finite entries."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not (np.all(np.isfinite(m.real)) and np.all(np.isfinite(m.imag))):
        raise ValueError("matrix entries must be finite (no NaN/Inf)")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.swapaxes(np.asarray(a), -1, -2))


def frobenius(a) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(np.asarray(a)))


def hermiticity_defect(a) -> float:
    """Frobenius norm of ``a - a*``; zero exactly for Hermitian input."""
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise NotSquare(f"matrix is {m.shape[0]}x{m.shape[1]}")
    return float(np.linalg.norm(m - dagger(m)))


def _require_hermitian(a, tol: Tolerance | None) -> np.ndarray:
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise NotSquare(f"matrix is {m.shape[0]}x{m.shape[1]}")
    dim = m.shape[0]
    if tol is None:
        tol = default_tolerance(dim)
    defect = float(np.linalg.norm(m - dagger(m)))
    if defect > tol.abs_eps * max(dim, 1):
        raise NotHermitian(
            f"symmetrization defect {defect:.3e} exceeds "
            f"{tol.abs_eps * max(dim, 1):.3e} for dim {dim}"
        )
    return 0.5 * (m + dagger(m))


def herm_eigen(a, tol: Tolerance | None = None):
    """Hermitian eigendecomposition ``a = V diag(w) V*``.

    Returns eigenvalues ascending and a unitary matrix of eigenvectors.
    The input is symmetrized first; a symmetrization defect above
    ``tol.abs_eps * dim`` raises :class:`NotHermitian`.
    """
    h = _require_hermitian(a, tol)
    w, v = np.linalg.eigh(h)
    return w, v


def op_norm(a) -> float:
    """Largest singular value; equals max |eigenvalue| for Hermitian input."""
    m = as_matrix(a)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, ord=2))


def min_eig(a, tol: Tolerance | None = None) -> float:
    """Smallest eigenvalue of a (tolerance-checked) Hermitian matrix."""
    w, _ = herm_eigen(a, tol)
    return float(w[0])


def max_eig(a, tol: Tolerance | None = None) -> float:
    """Largest eigenvalue of a (tolerance-checked) Hermitian matrix."""
    w, _ = herm_eigen(a, tol)
    return float(w[-1])


def is_psd(a, tol: Tolerance | None = None) -> bool:
    """Positive semidefiniteness up to ``abs_eps + rel_eps * ||a||``."""
    w, _ = herm_eigen(a, tol)
    if w.size == 0:
        return True
    if tol is None:
        tol = default_tolerance(int(np.asarray(a).shape[0]))
    scale = float(np.max(np.abs(w)))
    return float(w[0]) >= -tol.slack(scale)


def kron(a, b) -> np.ndarray:
    """Kronecker product; dimensions multiply."""
    return np.kron(as_matrix(a), as_matrix(b))


def batch_op_norm(stack: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a (..., n, m) stack."""
    s = np.asarray(stack)
    if s.size == 0:
        return np.zeros(s.shape[:-2])
    return np.linalg.svd(s, compute_uv=False)[..., 0]


def batch_min_eig(stack: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each (symmetrized) matrix in a stack."""
    s = np.asarray(stack)
    h = 0.5 * (s + dagger(s))
    return np.linalg.eigvalsh(h)[..., 0]
