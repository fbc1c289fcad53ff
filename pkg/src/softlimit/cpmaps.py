"""Linear maps between block algebras carried by Choi data.

A map f between direct sums of matrix blocks is stored block-pair-wise:
for each (source block p, target block q) a tensor ``T[p][q]`` of shape
``(n_p, n_p, m_q, m_q)`` with ``T[i, j, k, l] = f(E_ij in block p)[k, l]``.
The Choi matrix convention is the unnormalized ``C(f) = sum_ij E_ij (x)
f(E_ij)``, used everywhere; block-pair storage keeps positivity checks
small and mirrors the direct-sum structure.

Complete positivity is equivalent to every pair Choi matrix being PSD;
unitality and contractivity are checked on the image of the unit.
"""
from __future__ import annotations

import numpy as np

from .algebra import AlgElement, FdVNAlgebra
from .errors import (
    DimensionMismatch,
    InconsistentAction,
    NotHermitian,
    ShapeMismatch,
)
from .linalg import Tolerance, as_matrix, dagger, default_tolerance, op_norm

__all__ = [
    "CPMap",
    "from_action",
    "from_function",
    "identity_map",
    "zero_map",
    "trace_state_to_unit",
    "embed_tensor_unit",
    "normalized_partial_trace",
    "diag_embedding",
    "diag_compression",
    "stochastic_map",
    "convex_combination",
    "compress_blocks",
    "compose",
    "amplify_map",
    "adjoint_map",
    "choi_distance",
    "mult_defect",
    "map_norm_interval",
    "cb_norm_lower",
]


def _tensor_to_choi_matrix(t: np.ndarray) -> np.ndarray:
    n, _, m, _ = t.shape
    return np.ascontiguousarray(t.transpose(0, 2, 1, 3).reshape(n * m, n * m))


def _choi_matrix_to_tensor(c: np.ndarray, n: int, m: int) -> np.ndarray:
    return np.ascontiguousarray(c.reshape(n, m, n, m).transpose(0, 2, 1, 3))


class CPMap:
    """Linear map between two block algebras, given by Choi tensors.

    ``choi[p][q]`` has shape (n_p, n_p, m_q, m_q).  Verification results
    (cp/unital/contractive/Hermiticity-preserving) are computed on first
    request and cached; instances are treated as immutable afterwards.
    """

    __slots__ = ("source", "target", "choi", "_flags", "_tol", "_stack")

    def __init__(self, source: FdVNAlgebra, target: FdVNAlgebra, choi, tol: Tolerance | None = None):
        self.source = source
        self.target = target
        tensors = []
        for p, n in enumerate(source.block_sizes):
            row = []
            for q, m in enumerate(target.block_sizes):
                t = np.asarray(choi[p][q], dtype=np.complex128)
                if t.shape != (n, n, m, m):
                    raise ShapeMismatch(
                        f"choi tensor for pair ({p},{q}) has shape {t.shape}, "
                        f"expected {(n, n, m, m)}"
                    )
                row.append(t)
            tensors.append(tuple(row))
        self.choi = tuple(tensors)
        self._flags = {}
        self._tol = tol
        self._stack = None

    def _stacked(self):
        """All pair tensors as one (P, Q, n, n, m, m) array, for uniform
        block sizes on both sides; None otherwise.  Cached."""
        if self._stack is None:
            if len(set(self.source.block_sizes)) == 1 and len(set(self.target.block_sizes)) == 1:
                self._stack = np.stack([np.stack(row) for row in self.choi])
            else:
                self._stack = False
        return None if self._stack is False else self._stack

    # -- structure ---------------------------------------------------------

    def pair_choi_matrix(self, p: int, q: int) -> np.ndarray:
        """Choi matrix of the (p, q) component, size n_p*m_q."""
        return _tensor_to_choi_matrix(self.choi[p][q])

    def tolerance(self) -> Tolerance:
        if self._tol is not None:
            return self._tol
        dim = max(n * m for n in self.source.block_sizes for m in self.target.block_sizes)
        return default_tolerance(dim)

    # -- action ------------------------------------------------------------

    def apply(self, x: AlgElement) -> AlgElement:
        if x.algebra.block_sizes != self.source.block_sizes:
            raise DimensionMismatch("element does not match the map's source algebra")
        stacked = self._stacked()
        if stacked is not None:
            xs = np.stack(x.blocks)
            out = np.einsum("pij,pqijkl->qkl", xs, stacked)
            return AlgElement(self.target, list(out))
        out = []
        for q, m in enumerate(self.target.block_sizes):
            acc = np.zeros((m, m), dtype=np.complex128)
            for p in range(self.source.num_blocks):
                acc += np.einsum("ij,ijkl->kl", x.blocks[p], self.choi[p][q])
            out.append(acc)
        return AlgElement(self.target, out)

    def apply_stack(self, xs: np.ndarray, p: int = 0, q: int = 0) -> np.ndarray:
        """Apply the (p, q) component to a stack (B, n_p, n_p) of matrices.

        Intended for sweeps over single-block algebras, where it is the
        whole action.
        """
        return np.einsum("bij,ijkl->bkl", np.asarray(xs, dtype=np.complex128), self.choi[p][q])

    def apply_many(self, elements) -> list:
        return [self.apply(x) for x in elements]

    # -- verification ------------------------------------------------------

    def _pair_is_psd(self, p: int, q: int, tol: Tolerance) -> bool:
        c = self.pair_choi_matrix(p, q)
        dim = c.shape[0]
        herm_defect = float(np.linalg.norm(c - dagger(c)))
        scale = max(1.0, float(np.max(np.abs(np.diag(c).real))) if dim else 1.0)
        if herm_defect > tol.slack(scale) * dim:
            return False
        h = 0.5 * (c + dagger(c))
        shift = tol.slack(scale)
        try:
            np.linalg.cholesky(h + 2.0 * shift * np.eye(dim))
            return True
        except np.linalg.LinAlgError:
            w = np.linalg.eigvalsh(h)
            return bool(w[0] >= -tol.slack(float(np.max(np.abs(w)))))

    def is_cp(self, tol: Tolerance | None = None) -> bool:
        key = ("cp", tol)
        if key not in self._flags:
            t = tol or self.tolerance()
            stacked = self._stacked()
            if stacked is not None and stacked.shape[2] == 1 and stacked.shape[4] == 1:
                vals = stacked[:, :, 0, 0, 0, 0]
                self._flags[key] = bool(
                    np.all(np.abs(vals.imag) <= t.slack(1.0))
                    and np.all(vals.real >= -t.slack(1.0))
                )
            else:
                self._flags[key] = all(
                    self._pair_is_psd(p, q, t)
                    for p in range(self.source.num_blocks)
                    for q in range(self.target.num_blocks)
                )
        return self._flags[key]

    def is_herm_preserving(self, tol: Tolerance | None = None) -> bool:
        key = ("herm", tol)
        if key not in self._flags:
            t = tol or self.tolerance()
            ok = True
            for p in range(self.source.num_blocks):
                for q in range(self.target.num_blocks):
                    c = self.pair_choi_matrix(p, q)
                    if float(np.linalg.norm(c - dagger(c))) > t.slack(1.0) * max(c.shape[0], 1):
                        ok = False
            self._flags[key] = ok
        return self._flags[key]

    def unit_image(self) -> AlgElement:
        return self.apply(self.source.unit())

    def is_unital(self, tol: Tolerance | None = None) -> bool:
        key = ("unital", tol)
        if key not in self._flags:
            t = tol or self.tolerance()
            diff = self.unit_image() - self.target.unit()
            self._flags[key] = diff.norm() <= t.slack(1.0) * self.target.hilbert_dim
        return self._flags[key]

    def is_ucp(self, tol: Tolerance | None = None) -> bool:
        return self.is_cp(tol) and self.is_unital(tol)

    def is_cpc(self, tol: Tolerance | None = None) -> bool:
        t = tol or self.tolerance()
        return self.is_cp(tol) and self.unit_image().norm() <= 1.0 + t.slack(1.0) * self.target.hilbert_dim

    def verify(self, tol: Tolerance | None = None) -> dict:
        """Return {'cp': ..., 'ucp': ..., 'cpc': ...}.

        cp is Choi positivity per block pair; for cp maps the cb norm is
        the norm of the unit image, so cpc reduces to ``||f(1)|| <= 1``
        within tolerance.
        """
        return {"cp": self.is_cp(tol), "ucp": self.is_ucp(tol), "cpc": self.is_cpc(tol)}

    # -- algebra of maps ----------------------------------------------------

    def _binary(self, other: "CPMap", op) -> "CPMap":
        if (
            self.source.block_sizes != other.source.block_sizes
            or self.target.block_sizes != other.target.block_sizes
        ):
            raise DimensionMismatch("maps have different source/target algebras")
        choi = [
            [op(self.choi[p][q], other.choi[p][q]) for q in range(self.target.num_blocks)]
            for p in range(self.source.num_blocks)
        ]
        return CPMap(self.source, self.target, choi)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __mul__(self, scalar):
        s = complex(scalar)
        choi = [[s * t for t in row] for row in self.choi]
        return CPMap(self.source, self.target, choi)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CPMap({self.source!r} -> {self.target!r})"


# -- constructors -----------------------------------------------------------


def from_function(source: FdVNAlgebra, target: FdVNAlgebra, fn) -> CPMap:
    """Assemble the Choi tensors by evaluating ``fn`` on all matrix units.

    ``fn`` maps an :class:`AlgElement` of ``source`` to one of ``target``;
    linearity is assumed, not checked.
    """
    choi = [
        [
            np.zeros((n, n, m, m), dtype=np.complex128)
            for m in target.block_sizes
        ]
        for n in source.block_sizes
    ]
    for p, n in enumerate(source.block_sizes):
        for i in range(n):
            for j in range(n):
                blocks = [np.zeros((s, s), dtype=np.complex128) for s in source.block_sizes]
                blocks[p][i, j] = 1.0
                image = fn(AlgElement(source, blocks))
                for q in range(target.num_blocks):
                    choi[p][q][i, j] = image.blocks[q]
    return CPMap(source, target, choi)


def from_action(source: FdVNAlgebra, target: FdVNAlgebra, pairs, tol: float = 1e-10) -> CPMap:
    """Build a map from its action on a spanning set.

    ``pairs`` is a sequence of (input element, output element).  The linear
    map is recovered by least squares on the flattened coordinates; a
    residual above ``tol`` (relative to the data scale) means the action is
    not well defined on linear dependencies and raises
    :class:`InconsistentAction`.
    """
    ins = np.stack([x.vec() for x, _ in pairs], axis=1)
    outs = np.stack([y.vec() for _, y in pairs], axis=1)
    # F @ ins = outs, solved column-block-wise via lstsq on ins^T F^T = outs^T
    f_t, *_ = np.linalg.lstsq(ins.T, outs.T, rcond=None)
    f = f_t.T
    residual = float(np.linalg.norm(f @ ins - outs))
    scale = max(1.0, float(np.linalg.norm(outs)))
    if residual > tol * scale * max(1, len(pairs)):
        raise InconsistentAction(
            f"action residual {residual:.3e} exceeds tolerance on the spanning set"
        )
    src_offsets = np.cumsum([0] + [n * n for n in source.block_sizes])
    tgt_offsets = np.cumsum([0] + [m * m for m in target.block_sizes])
    choi = []
    for p, n in enumerate(source.block_sizes):
        row = []
        cols = slice(src_offsets[p], src_offsets[p + 1])
        for q, m in enumerate(target.block_sizes):
            rows = slice(tgt_offsets[q], tgt_offsets[q + 1])
            block = f[rows, cols]  # (m*m, n*n)
            row.append(block.T.reshape(n, n, m, m))
        choi.append(row)
    return CPMap(source, target, choi)


def identity_map(algebra: FdVNAlgebra) -> CPMap:
    choi = []
    for p, n in enumerate(algebra.block_sizes):
        row = []
        for q, m in enumerate(algebra.block_sizes):
            t = np.zeros((n, n, m, m), dtype=np.complex128)
            if p == q:
                for i in range(n):
                    for j in range(n):
                        t[i, j, i, j] = 1.0
            row.append(t)
        choi.append(row)
    return CPMap(algebra, algebra, choi)


def zero_map(source: FdVNAlgebra, target: FdVNAlgebra) -> CPMap:
    choi = [
        [np.zeros((n, n, m, m), dtype=np.complex128) for m in target.block_sizes]
        for n in source.block_sizes
    ]
    return CPMap(source, target, choi)


def trace_state_to_unit(source: FdVNAlgebra, target: FdVNAlgebra | None = None) -> CPMap:
    """x |-> tr(x)/dim * 1, the normalized-trace state followed by the unit."""
    target = target or source
    d = source.hilbert_dim
    choi = []
    for p, n in enumerate(source.block_sizes):
        row = []
        for q, m in enumerate(target.block_sizes):
            t = np.zeros((n, n, m, m), dtype=np.complex128)
            for i in range(n):
                t[i, i] = np.eye(m) / d
            row.append(t)
        choi.append(row)
    return CPMap(source, target, choi)


def embed_tensor_unit(n: int, k: int) -> CPMap:
    """M_n -> M_{n k}, x |-> x (x) 1_k."""
    source = FdVNAlgebra([n])
    target = FdVNAlgebra([n * k])
    t = np.zeros((n, n, n * k, n * k), dtype=np.complex128)
    eye_k = np.eye(k)
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            t[i, j] = np.kron(e, eye_k)
    return CPMap(source, target, [[t]])


def normalized_partial_trace(n: int, k: int) -> CPMap:
    """M_{n k} -> M_n, x |-> (tr_2 x)/k, tracing out the second factor."""
    source = FdVNAlgebra([n * k])
    target = FdVNAlgebra([n])
    t = np.zeros((n * k, n * k, n, n), dtype=np.complex128)
    for i1 in range(n):
        for i2 in range(k):
            for j1 in range(n):
                out = np.zeros((n, n), dtype=np.complex128)
                out[i1, j1] = 1.0 / k
                t[i1 * k + i2, j1 * k + i2] = out
    return CPMap(source, target, [[t]])


def diag_embedding(n: int) -> CPMap:
    """C^n (n scalar blocks) -> M_n, v |-> diag(v)."""
    source = FdVNAlgebra([1] * n)
    target = FdVNAlgebra([n])
    choi = []
    for p in range(n):
        t = np.zeros((1, 1, n, n), dtype=np.complex128)
        t[0, 0, p, p] = 1.0
        choi.append([t])
    return CPMap(source, target, choi)


def diag_compression(n: int) -> CPMap:
    """M_n -> C^n, x |-> its diagonal; a conditional expectation."""
    source = FdVNAlgebra([n])
    target = FdVNAlgebra([1] * n)
    row = []
    for q in range(n):
        t = np.zeros((n, n, 1, 1), dtype=np.complex128)
        t[q, q, 0, 0] = 1.0
        row.append(t)
    return CPMap(source, target, [row])


def stochastic_map(weights: np.ndarray) -> CPMap:
    """Map between commutative algebras given by a matrix of weights.

    ``weights`` has shape (m, n) and acts by v |-> weights @ v on the
    diagonal coordinates; completely positive iff entrywise nonnegative,
    unital iff rows sum to one.
    """
    w = np.asarray(weights, dtype=np.complex128)
    m, n = w.shape
    source = FdVNAlgebra([1] * n)
    target = FdVNAlgebra([1] * m)
    choi = [
        [w[q, p].reshape(1, 1, 1, 1).astype(np.complex128) for q in range(m)]
        for p in range(n)
    ]
    return CPMap(source, target, choi)


def convex_combination(maps, weights) -> CPMap:
    """Weighted sum of maps with common source/target."""
    if len(maps) != len(weights) or not maps:
        raise ShapeMismatch("need matching, nonempty maps and weights")
    acc = maps[0] * weights[0]
    for f, w in zip(maps[1:], weights[1:]):
        acc = acc + (f * w)
    return acc


def compress_blocks(algebra: FdVNAlgebra, keep) -> CPMap:
    """Compression of a direct sum onto a sub-direct-sum (kept indices)."""
    keep = list(keep)
    target = FdVNAlgebra([algebra.block_sizes[p] for p in keep])
    choi = []
    for p, n in enumerate(algebra.block_sizes):
        row = []
        for qi, p_keep in enumerate(keep):
            m = target.block_sizes[qi]
            t = np.zeros((n, n, m, m), dtype=np.complex128)
            if p == p_keep:
                for i in range(n):
                    for j in range(n):
                        t[i, j, i, j] = 1.0
            row.append(t)
        choi.append(row)
    return CPMap(algebra, target, choi)


# -- composition / amplification / adjoint ----------------------------------


def compose(f: CPMap, g: CPMap) -> CPMap:
    """The map f o g (g applied first)."""
    if g.target.block_sizes != f.source.block_sizes:
        raise DimensionMismatch("compose requires g.target == f.source")
    P = g.source.num_blocks
    Q = g.target.num_blocks
    R = f.target.num_blocks
    sg, sf = g._stacked(), f._stacked()
    if sg is not None and sf is not None:
        out = np.einsum("pqijkl,qrkluv->prijuv", sg, sf)
        return CPMap(g.source, f.target,
                     [[out[p, r] for r in range(R)] for p in range(P)])
    choi = []
    for p in range(P):
        row = []
        for r in range(R):
            n = g.source.block_sizes[p]
            m = f.target.block_sizes[r]
            acc = np.zeros((n, n, m, m), dtype=np.complex128)
            for q in range(Q):
                acc += np.einsum("ijkl,kluv->ijuv", g.choi[p][q], f.choi[q][r])
            row.append(acc)
        choi.append(row)
    return CPMap(g.source, f.target, choi)


def amplify_map(f: CPMap, nu: int) -> CPMap:
    """Matrix amplification f (x) id_nu.

    Uses the same Kronecker convention as element amplification (element
    factor first), so amplified application agrees with entrywise
    application on amplified elements.
    """
    if nu < 1:
        raise ValueError("amplification level must be >= 1")
    if nu == 1:
        return f
    source = FdVNAlgebra([n * nu for n in f.source.block_sizes])
    target = FdVNAlgebra([m * nu for m in f.target.block_sizes])
    eye = np.eye(nu)
    choi = []
    for p, n in enumerate(f.source.block_sizes):
        row = []
        for q, m in enumerate(f.target.block_sizes):
            t = f.choi[p][q]
            # (f (x) id)(x (x) E_ab) = f(x) (x) E_ab in the a(x)E layout
            big = np.einsum("ijkl,ac,bd->iajbkcld", t, eye, eye)
            row.append(big.reshape(n * nu, n * nu, m * nu, m * nu))
        choi.append(row)
    return CPMap(source, target, choi)


def adjoint_map(f: CPMap) -> CPMap:
    """Hilbert-Schmidt adjoint: <f(x), y> = <x, f*(y)> for all x, y."""
    choi = []
    for q, m in enumerate(f.target.block_sizes):
        row = []
        for p, n in enumerate(f.source.block_sizes):
            row.append(np.conj(f.choi[p][q]).transpose(2, 3, 0, 1))
        choi.append(row)
    return CPMap(f.target, f.source, choi)


# -- diagnostics -------------------------------------------------------------


def choi_distance(f: CPMap, g: CPMap) -> float:
    """Max Frobenius distance between matching pair Choi matrices."""
    if (
        f.source.block_sizes != g.source.block_sizes
        or f.target.block_sizes != g.target.block_sizes
    ):
        raise DimensionMismatch("maps have different source/target algebras")
    return max(
        float(np.linalg.norm(f.choi[p][q] - g.choi[p][q]))
        for p in range(f.source.num_blocks)
        for q in range(f.target.num_blocks)
    )


def mult_defect(f: CPMap, pairs) -> float:
    """Max over pairs (a, b) of ||f(ab) - f(a) f(b)||."""
    worst = 0.0
    for a, b in pairs:
        lhs = f.apply(a * b)
        rhs = f.apply(a) * f.apply(b)
        worst = max(worst, (lhs - rhs).norm())
    return worst


def _random_unitary(rng, n: int) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _random_symmetry(rng, n: int, rank: int) -> np.ndarray:
    """Self-adjoint unitary 2P - I with P a random rank-``rank`` projection."""
    u = _random_unitary(rng, n)
    d = np.ones(n)
    d[rank:] = -1.0
    return (u * d) @ dagger(u)


def map_norm_interval(delta: CPMap, restarts: int = 64, refine_steps: int = 40, seed: int = 0):
    """Bracket the operator norm of a Hermiticity-preserving map.

    Lower bound: max of ||delta(x)|| over matrix-unit contractions and
    randomized self-adjoint unitaries 2P - I (projections of every rank,
    seeded, with local refinement).  Upper bound: the completely bounded
    norm from the semidefinite program, which dominates the operator norm.
    """
    if not delta.is_herm_preserving():
        raise NotHermitian("map_norm_interval expects a Hermiticity-preserving map")
    from . import sdp  # local import; sdp builds on this module

    rng = np.random.default_rng(seed)
    best = 0.0
    for _, e in delta.source.matrix_units():
        best = max(best, delta.apply(e).norm())

    sizes = delta.source.block_sizes
    for trial in range(restarts):
        blocks = []
        for n in sizes:
            rank = int(rng.integers(0, n + 1))
            blocks.append(_random_symmetry(rng, n, rank))
        x = AlgElement(delta.source, blocks)
        val = delta.apply(x).norm()
        eps = 0.3
        for _ in range(refine_steps):
            cand_blocks = []
            for b, n in zip(x.blocks, sizes):
                h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
                h = 0.5 * (h + dagger(h))
                w, v = np.linalg.eigh(eps * h)
                u = (v * np.exp(1j * w)) @ dagger(v)
                cand_blocks.append(u @ b @ dagger(u))
            cand = AlgElement(delta.source, cand_blocks)
            cand_val = delta.apply(cand).norm()
            if cand_val > val:
                x, val = cand, cand_val
            else:
                eps *= 0.7
        best = max(best, val)

    upper = sdp.cb_norm(delta)
    return best, max(upper, best)


def _polar_unitary(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def cb_norm_lower(delta: CPMap, level: int | None = None, restarts: int = 24,
                  iters: int = 60, seed: int = 0) -> float:
    """Randomized lower bound on the completely bounded norm.

    Alternating maximization of ``||(delta (x) id_nu)(x)||`` over unitary
    contractions x: given x, take a top singular pair of the image; given
    the pair, the best x is the polar unitary of the adjoint image.  The
    amplification level defaults to the target Hilbert-space dimension,
    which is enough for the bound to be tight at the optimum.
    """
    nu = level or delta.target.hilbert_dim
    amp = amplify_map(delta, nu)
    amp_adj = adjoint_map(amp)
    rng = np.random.default_rng(seed)
    sizes = amp.source.block_sizes
    best = 0.0
    for _ in range(restarts):
        x = AlgElement(amp.source, [_random_unitary(rng, n) for n in sizes])
        val = 0.0
        for _ in range(iters):
            y = amp.apply(x)
            norms = [op_norm(b) for b in y.blocks]
            q_star = int(np.argmax(norms))
            new_val = norms[q_star]
            u, s, vh = np.linalg.svd(y.blocks[q_star])
            phi = u[:, 0]
            psi = vh[0, :].conj()
            y_blocks = [np.zeros_like(b) for b in y.blocks]
            y_blocks[q_star] = np.outer(phi, psi.conj())
            grad = amp_adj.apply(AlgElement(amp.target, y_blocks))
            x = AlgElement(
                amp.source,
                [
                    _polar_unitary(b) if np.linalg.norm(b) > 1e-14 else np.eye(n)
                    for b, n in zip(grad.blocks, sizes)
                ],
            )
            if new_val <= val + 1e-12:
                val = max(val, new_val)
                break
            val = new_val
        best = max(best, val)
    return best
