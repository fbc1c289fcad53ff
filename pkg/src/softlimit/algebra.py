"""Finite-dimensional von Neumann algebras and concrete operator systems.

An algebra is a finite direct sum of full matrix blocks; elements carry one
complex matrix per block.  Operator systems are stored concretely as a
basis inside such an algebra, with the unital/self-adjoint invariants
checked by solving small linear systems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import NotInSpan, ShapeMismatch
from .linalg import Tolerance, as_matrix, dagger, default_tolerance

__all__ = [
    "FdVNAlgebra",
    "AlgElement",
    "OperatorSystemSpace",
    "order_norm",
    "order_norm_bisect",
    "amplify_element",
    "membership",
]


@dataclass(frozen=True)
class FdVNAlgebra:
    """Direct sum of full matrix blocks, given by its block sizes."""

    block_sizes: tuple

    def __init__(self, block_sizes):
        sizes = tuple(int(n) for n in block_sizes)
        if not sizes or any(n <= 0 for n in sizes):
            raise ValueError("block sizes must be a nonempty list of positive counts")
        object.__setattr__(self, "block_sizes", sizes)

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def dim(self) -> int:
        """Linear dimension sum(n_j^2)."""
        return int(sum(n * n for n in self.block_sizes))

    @property
    def hilbert_dim(self) -> int:
        """Dimension sum(n_j) of the underlying Hilbert space."""
        return int(sum(self.block_sizes))

    def zero(self) -> "AlgElement":
        return AlgElement(self, [np.zeros((n, n), dtype=np.complex128) for n in self.block_sizes])

    def unit(self) -> "AlgElement":
        return AlgElement(self, [np.eye(n, dtype=np.complex128) for n in self.block_sizes])

    def matrix_units(self):
        """All matrix units E_ij per block, with labels ``E[p]ij``."""
        out = []
        for p, n in enumerate(self.block_sizes):
            for i in range(n):
                for j in range(n):
                    blocks = [np.zeros((m, m), dtype=np.complex128) for m in self.block_sizes]
                    blocks[p][i, j] = 1.0
                    out.append((f"E[{p}]{i}{j}", AlgElement(self, blocks)))
        return out

    def basis_elements(self):
        """Matrix units plus the unit; the default probe set."""
        return [("unit", self.unit())] + self.matrix_units()

    def __repr__(self):
        return f"FdVNAlgebra({list(self.block_sizes)})"


def unit(algebra: FdVNAlgebra) -> "AlgElement":
    """Identity in every block; the order unit."""
    return algebra.unit()


class AlgElement:
    """Element of an :class:`FdVNAlgebra`: one matrix per block."""

    __slots__ = ("algebra", "blocks")

    def __init__(self, algebra: FdVNAlgebra, blocks):
        mats = [as_matrix(b) for b in blocks]
        if len(mats) != algebra.num_blocks:
            raise ShapeMismatch(
                f"expected {algebra.num_blocks} blocks, got {len(mats)}"
            )
        for m, n in zip(mats, algebra.block_sizes):
            if m.shape != (n, n):
                raise ShapeMismatch(f"block of shape {m.shape} does not match size {n}")
        self.algebra = algebra
        self.blocks = tuple(mats)

    def _check_same(self, other: "AlgElement"):
        if self.algebra.block_sizes != other.algebra.block_sizes:
            raise ShapeMismatch("elements live in different algebras")

    def __add__(self, other):
        self._check_same(other)
        return AlgElement(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._check_same(other)
        return AlgElement(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, other):
        if isinstance(other, AlgElement):
            self._check_same(other)
            return AlgElement(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])
        return AlgElement(self.algebra, [complex(other) * a for a in self.blocks])

    def __rmul__(self, scalar):
        return AlgElement(self.algebra, [complex(scalar) * a for a in self.blocks])

    def __neg__(self):
        return AlgElement(self.algebra, [-a for a in self.blocks])

    def adjoint(self) -> "AlgElement":
        return AlgElement(self.algebra, [dagger(a) for a in self.blocks])

    def norm(self) -> float:
        """Ambient spectral norm: max over blocks of the operator norm."""
        return max(linalg.op_norm(b) for b in self.blocks)

    def hs_norm(self) -> float:
        return float(np.sqrt(sum(np.linalg.norm(b) ** 2 for b in self.blocks)))

    def trace(self) -> complex:
        return complex(sum(np.trace(b) for b in self.blocks))

    def vec(self) -> np.ndarray:
        """Flatten all blocks into one coefficient vector."""
        return np.concatenate([b.ravel() for b in self.blocks])

    def is_selfadjoint(self, tol: Tolerance | None = None) -> bool:
        t = tol or default_tolerance(self.algebra.hilbert_dim)
        return all(
            float(np.linalg.norm(b - dagger(b))) <= t.slack(linalg.op_norm(b))
            for b in self.blocks
        )

    def min_eig(self, tol: Tolerance | None = None) -> float:
        return min(linalg.min_eig(b, tol) for b in self.blocks)

    def symmetrize(self) -> "AlgElement":
        return AlgElement(self.algebra, [0.5 * (b + dagger(b)) for b in self.blocks])

    def __repr__(self):
        return f"AlgElement({self.algebra!r})"


def element_from_vec(algebra: FdVNAlgebra, v: np.ndarray) -> AlgElement:
    """Inverse of :meth:`AlgElement.vec`."""
    v = np.asarray(v, dtype=np.complex128).ravel()
    blocks, k = [], 0
    for n in algebra.block_sizes:
        blocks.append(v[k : k + n * n].reshape(n, n))
        k += n * n
    if k != v.size:
        raise ShapeMismatch("coefficient vector length does not match the algebra")
    return AlgElement(algebra, blocks)


def order_norm(a: AlgElement) -> float:
    """Norm induced by the order unit.

    On a concrete subsystem this coincides with the ambient spectral norm,
    so it is evaluated as the max block operator norm.
    """
    return a.norm()


def order_norm_bisect(a: AlgElement, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Order-unit formula evaluated by bisection on the 2x2 block dilation.

    Finds inf over lambda > 0 such that [[lambda 1, a], [a*, lambda 1]] is
    positive semidefinite.  Serves as an independent cross-check of
    :func:`order_norm`; quadratically slower, never used in sweeps.
    """
    psd_tol = Tolerance(abs_eps=0.0, rel_eps=0.0)

    def dilation_psd(lam: float) -> bool:
        for b in a.blocks:
            n = b.shape[0]
            big = np.block([[lam * np.eye(n), b], [dagger(b), lam * np.eye(n)]])
            w = np.linalg.eigvalsh(0.5 * (big + dagger(big)))
            if w[0] < -1e-14 * max(lam, 1.0):
                return False
        return True

    hi = max(a.norm(), tol)
    hi = max(hi * 2.0, tol)
    lo = 0.0
    if dilation_psd(0.0):
        return 0.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if dilation_psd(mid):
            hi = mid
        else:
            lo = mid
    del psd_tol
    return hi


def amplify_element(entries, nu: int | None = None) -> AlgElement:
    """Assemble a nu x nu array of elements into M_nu of the algebra.

    Entry (i, j) is placed as ``a_ij (x) E_ij`` (element factor first), so
    the amplified algebra has block sizes ``n_p * nu``.
    """
    rows = list(entries)
    if nu is None:
        nu = len(rows)
    if len(rows) != nu or any(len(r) != nu for r in rows):
        raise ShapeMismatch(f"expected a {nu}x{nu} array of elements")
    first = rows[0][0]
    algebra = first.algebra
    for r in rows:
        for e in r:
            if e.algebra.block_sizes != algebra.block_sizes:
                raise ShapeMismatch("all entries must live in the same algebra")
    amp_algebra = FdVNAlgebra([n * nu for n in algebra.block_sizes])
    blocks = []
    for p, n in enumerate(algebra.block_sizes):
        big = np.zeros((n * nu, n * nu), dtype=np.complex128)
        for i in range(nu):
            for j in range(nu):
                e_ij = np.zeros((nu, nu))
                e_ij[i, j] = 1.0
                big += np.kron(rows[i][j].blocks[p], e_ij)
        blocks.append(big)
    return AlgElement(amp_algebra, blocks)


def amplified_algebra(algebra: FdVNAlgebra, nu: int) -> FdVNAlgebra:
    if nu < 1:
        raise ValueError("amplification level must be >= 1")
    return FdVNAlgebra([n * nu for n in algebra.block_sizes])


def membership(space: "OperatorSystemSpace", a: AlgElement, tol: float = 1e-9) -> np.ndarray:
    """Coefficients of ``a`` in the basis of ``space``.

    Solved by least squares on the flattened blocks; residual above ``tol``
    raises :class:`NotInSpan`.
    """
    if a.algebra.block_sizes != space.ambient.block_sizes:
        raise ShapeMismatch("element does not live in the ambient algebra")
    target = a.vec()
    coeffs, *_ = np.linalg.lstsq(space._basis_matrix(), target, rcond=None)
    residual = float(np.linalg.norm(space._basis_matrix() @ coeffs - target))
    scale = max(1.0, float(np.linalg.norm(target)))
    if residual > tol * scale:
        raise NotInSpan(f"least-squares residual {residual:.3e} exceeds {tol:.1e}")
    return coeffs


@dataclass
class OperatorSystemSpace:
    """Concrete operator system: a basis inside an ambient algebra.

    The span must be linearly independent, contain the unit, and be closed
    under adjoints; ``validate`` checks all three and reports the offending
    basis index on failure.
    """

    ambient: FdVNAlgebra
    basis: list
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.basis = list(self.basis)
        for b in self.basis:
            if b.algebra.block_sizes != self.ambient.block_sizes:
                raise ShapeMismatch("basis element outside the ambient algebra")

    @classmethod
    def full(cls, algebra: FdVNAlgebra) -> "OperatorSystemSpace":
        """The whole algebra viewed as an operator system."""
        return cls(algebra, [e for _, e in algebra.matrix_units()])

    def _basis_matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack([b.vec() for b in self.basis], axis=1)
        return self._matrix

    @property
    def dim(self) -> int:
        return len(self.basis)

    def validate(self, tol: float = 1e-9):
        """Raise ValueError naming the violated invariant, if any."""
        m = self._basis_matrix()
        # independence via pivoted rank of the Gram matrix
        gram = dagger(m) @ m
        rank = np.linalg.matrix_rank(gram, tol=1e-12 * max(1.0, float(np.abs(gram).max())))
        if rank < len(self.basis):
            sing = np.linalg.svd(m, compute_uv=False)
            raise ValueError(
                f"basis is linearly dependent (rank {rank} of {len(self.basis)}, "
                f"smallest singular value {sing[-1]:.3e})"
            )
        try:
            membership(self, self.ambient.unit(), tol)
        except NotInSpan:
            raise ValueError("span does not contain the unit")
        for idx, b in enumerate(self.basis):
            try:
                membership(self, b.adjoint(), tol)
            except NotInSpan:
                raise ValueError(f"span is not adjoint-closed (offending index {idx})")

    def contains(self, a: AlgElement, tol: float = 1e-9) -> bool:
        try:
            membership(self, a, tol)
            return True
        except NotInSpan:
            return False

    def orthonormal_basis(self) -> list:
        """Hilbert-Schmidt Gram-Schmidt with pivoting; rejects dependent input."""
        vectors = [b.vec() for b in self.basis]
        out = []
        for idx, v in enumerate(vectors):
            w = v.copy()
            for u in out:
                w = w - np.vdot(u, w) * u
            nrm = float(np.linalg.norm(w))
            if nrm < 1e-12 * max(1.0, float(np.linalg.norm(v))):
                raise ValueError(f"basis is linearly dependent at index {idx}")
            out.append(w / nrm)
        return [element_from_vec(self.ambient, u) for u in out]
