"""Small dense semidefinite programming and its two front-end problems.

The core solves the standard-form problem

    min  sum_k <C_k, X_k>   s.t.  sum_k <A_ik, X_k> = b_i,  X_k >= 0

with a primal-dual interior-point method (Mehrotra predictor-corrector,
Nesterov-Todd scaling).  Complex Hermitian blocks are embedded into real
symmetric blocks of doubled size, which keeps the kernel simple; the
embedding doubles inner products, so objective and right-hand sides are
rescaled transparently.

Front ends: the completely bounded norm of a Hermiticity-preserving map
(two-PSD-block program fed by the Choi matrix) and ucp-extendability of a
candidate functional on a concrete operator system (feasibility program
with an eigenvalue-shift objective).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cpmaps
from .algebra import FdVNAlgebra, OperatorSystemSpace, membership
from .errors import NotHermitian, NumericalFailure, SolverFailure
from .linalg import dagger

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "solve",
    "cb_norm",
    "ucp_member",
    "hermitian_basis",
]


def hermitian_basis(n: int) -> list:
    """Orthonormal (Hilbert-Schmidt) basis of Hermitian n x n matrices."""
    out = []
    for i in range(n):
        e = np.zeros((n, n), dtype=np.complex128)
        e[i, i] = 1.0
        out.append(e)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            s = np.zeros((n, n), dtype=np.complex128)
            s[i, j] = inv_sqrt2
            s[j, i] = inv_sqrt2
            out.append(s)
            a = np.zeros((n, n), dtype=np.complex128)
            a[i, j] = 1j * inv_sqrt2
            a[j, i] = -1j * inv_sqrt2
            out.append(a)
    return out


# -- real symmetric interior-point core --------------------------------------


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _chol_psd(a: np.ndarray, tries: int = 3) -> np.ndarray:
    jitter = 0.0
    d = a.shape[0]
    scale = max(1.0, float(np.trace(a)) / max(d, 1))
    for _ in range(tries):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(d))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-14 * scale)
    raise NumericalFailure("Cholesky factorization failed (iterate left the cone)")


def _max_step(d: np.ndarray, mhat: np.ndarray) -> float:
    """Largest alpha with diag(d) + alpha * mhat >= 0."""
    inv_sqrt = 1.0 / np.sqrt(d)
    b = _sym(inv_sqrt[:, None] * mhat * inv_sqrt[None, :])
    lam = float(np.linalg.eigvalsh(b)[0])
    if lam >= -1e-14:
        return np.inf
    return 1.0 / (-lam)


def _solve_real(dims, cmats, astacks, b, gap_tol, feas_tol, max_iter):
    """Interior-point solve of the real symmetric standard form.

    ``astacks[k]`` has shape (m, d_k, d_k).  Returns a dict with blocks,
    multipliers, status and the iteration trace.
    """
    m = len(b)
    nblocks = len(dims)
    b = np.asarray(b, dtype=float)

    def op_a(xs):
        if m == 0:
            return np.zeros(0)
        return sum(np.einsum("iab,ab->i", astacks[k], xs[k]) for k in range(nblocks))

    def op_at(y):
        return [np.einsum("i,iab->ab", y, astacks[k]) for k in range(nblocks)]

    scale = max([1.0, float(np.max(np.abs(b))) if m else 1.0]
                + [float(np.max(np.abs(c))) if c.size else 1.0 for c in cmats])
    xs = [scale ** 0.5 * np.eye(d) for d in dims]
    zs = [scale ** 0.5 * np.eye(d) for d in dims]
    y = np.zeros(m)

    norm_b = float(np.linalg.norm(b)) if m else 0.0
    norm_c = float(np.sqrt(sum(np.linalg.norm(c) ** 2 for c in cmats)))
    total_dim = sum(dims)
    trace_rows = []
    best = None
    status = "max_iter"

    for it in range(max_iter):
        rp = b - op_a(xs)
        aty = op_at(y)
        rd = [cmats[k] - zs[k] - aty[k] for k in range(nblocks)]
        gap = float(sum(np.einsum("ab,ab->", xs[k], zs[k]) for k in range(nblocks)))
        mu = gap / total_dim
        pobj = float(sum(np.einsum("ab,ab->", cmats[k], xs[k]) for k in range(nblocks)))
        dobj = float(b @ y)
        relgap = abs(gap) / (1.0 + abs(pobj) + abs(dobj))
        pres = float(np.linalg.norm(rp)) / (1.0 + norm_b)
        dres = float(np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd))) / (1.0 + norm_c)
        trace_rows.append((it, mu, relgap, pres, dres))

        score = max(relgap, pres, dres)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in xs], y.copy(), [z.copy() for z in zs],
                    pobj, dobj, relgap, pres, dres, it)

        if relgap <= gap_tol and pres <= feas_tol and dres <= feas_tol:
            status = "optimal"
            break
        if it > 8 and abs(dobj) > 1e9 * scale * (1.0 + abs(pobj)) and pres > feas_tol:
            status = "infeasible"
            break
        if it > 8 and abs(pobj) > 1e10 * scale and dres > feas_tol:
            status = "infeasible"
            break

        # Nesterov-Todd scaling per block
        gs, ginvs, dvecs, ws = [], [], [], []
        for k in range(nblocks):
            lx = _chol_psd(_sym(xs[k]))
            lz = _chol_psd(_sym(zs[k]))
            u, s, vt = np.linalg.svd(lz.T @ lx)
            s = np.maximum(s, 1e-250)
            g = lx @ vt.T / np.sqrt(s)[None, :]
            ginv = np.sqrt(s)[:, None] * (vt @ np.linalg.inv(lx))
            gs.append(g)
            ginvs.append(ginv)
            dvecs.append(s)
            ws.append(g @ g.T)

        if m:
            mm = np.zeros((m, m))
            for k in range(nblocks):
                t = np.einsum("ab,ibc,cd->iad", ws[k], astacks[k], ws[k])
                mm += astacks[k].reshape(m, -1) @ t.reshape(m, -1).T
            mm = _sym(mm)
            try:
                lm = np.linalg.cholesky(mm + 1e-13 * np.trace(mm) / m * np.eye(m))
            except np.linalg.LinAlgError:
                raise NumericalFailure("Schur complement is singular (dependent constraints?)")

        def solve_dirs(rhats):
            grg = [gs[k] @ rhats[k] @ gs[k].T for k in range(nblocks)]
            wrdw = [ws[k] @ rd[k] @ ws[k] for k in range(nblocks)]
            if m:
                rhs = rp - op_a(grg) + op_a(wrdw)
                dy = np.linalg.solve(lm.T, np.linalg.solve(lm, rhs))
            else:
                dy = np.zeros(0)
            atdy = op_at(dy)
            dz = [rd[k] - atdy[k] for k in range(nblocks)]
            dx = [grg[k] - ws[k] @ dz[k] @ ws[k] for k in range(nblocks)]
            return dx, dy, dz

        # predictor
        rhat_aff = [-np.diag(dvecs[k]) for k in range(nblocks)]
        dxa, dya, dza = solve_dirs(rhat_aff)
        dxa_hat = [ginvs[k] @ dxa[k] @ ginvs[k].T for k in range(nblocks)]
        dza_hat = [gs[k].T @ dza[k] @ gs[k] for k in range(nblocks)]
        ap = min([1.0] + [_max_step(dvecs[k], dxa_hat[k]) for k in range(nblocks)])
        ad = min([1.0] + [_max_step(dvecs[k], dza_hat[k]) for k in range(nblocks)])
        gap_aff = float(sum(
            np.einsum("ab,ab->", xs[k] + ap * dxa[k], zs[k] + ad * dza[k])
            for k in range(nblocks)
        ))
        sigma = min(max((max(gap_aff, 0.0) / max(gap, 1e-300)) ** 3, 1e-8), 0.99999)

        # corrector
        rhats = []
        for k in range(nblocks):
            d = dvecs[k]
            h = _sym(dxa_hat[k] @ dza_hat[k])
            num = sigma * mu * np.eye(len(d)) - np.diag(d * d) - h
            rhats.append(2.0 * num / np.add.outer(d, d))
        dx, dy, dz = solve_dirs(rhats)
        dx_hat = [ginvs[k] @ dx[k] @ ginvs[k].T for k in range(nblocks)]
        dz_hat = [gs[k].T @ dz[k] @ gs[k] for k in range(nblocks)]
        ap = min([1.0] + [0.98 * _max_step(dvecs[k], dx_hat[k]) for k in range(nblocks)])
        ad = min([1.0] + [0.98 * _max_step(dvecs[k], dz_hat[k]) for k in range(nblocks)])

        xs = [_sym(xs[k] + ap * dx[k]) for k in range(nblocks)]
        zs = [_sym(zs[k] + ad * dz[k]) for k in range(nblocks)]
        y = y + ad * dy

    if status == "optimal":
        payload = (None, xs, y, zs, pobj, dobj, relgap, pres, dres, it)
    else:
        payload = best
    _, xs, y, zs, pobj, dobj, relgap, pres, dres, it_best = payload
    return {
        "status": status,
        "X": xs,
        "y": y,
        "Z": zs,
        "pobj": pobj,
        "dobj": dobj,
        "relgap": relgap,
        "pres": pres,
        "dres": dres,
        "iterations": it + 1,
        "trace": trace_rows,
    }


# -- complex Hermitian layer --------------------------------------------------


def _embed(h: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a Hermitian matrix (doubled size)."""
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def _extract(xr: np.ndarray, n: int) -> np.ndarray:
    a = xr[:n, :n]
    b = xr[n:, n:]
    c = xr[n:, :n]
    d = xr[:n, n:]
    x = 0.5 * (a + b) + 0.5j * (c - d)
    return 0.5 * (x + dagger(x))


@dataclass
class SdpProblem:
    """Standard-form SDP over complex Hermitian blocks.

    ``constraints`` is a list of (blocks, rhs) with one Hermitian matrix
    per block (zero matrices allowed) and a real right-hand side.
    """

    block_dims: list
    objective: list
    constraints: list
    sense: str = "min"

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if len(self.objective) != len(self.block_dims):
            raise ValueError("objective needs one block per block dimension")
        for blocks, _ in self.constraints:
            if len(blocks) != len(self.block_dims):
                raise ValueError("each constraint needs one block per block dimension")


@dataclass
class SdpSolution:
    primal_value: float
    dual_value: float
    primal_blocks: list
    status: str
    iterations: int = 0
    gap: float = np.nan
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    trace: list = field(default_factory=list)


def solve(problem: SdpProblem, gap_tol: float = 1e-8, feas_tol: float = 1e-8,
          max_iter: int = 200) -> SdpSolution:
    """Solve a complex-Hermitian standard-form SDP.

    On status ``optimal`` the duality gap is below ``gap_tol`` and the
    feasibility residuals below ``feas_tol``; ``max_iter`` returns the best
    iterate reached.  Ill-conditioned linear algebra raises
    :class:`NumericalFailure`.
    """
    sign = 1.0 if problem.sense == "min" else -1.0
    dims = [2 * int(d) for d in problem.block_dims]
    cmats = [sign * _embed(np.asarray(c, dtype=np.complex128)) for c in problem.objective]
    m = len(problem.constraints)
    astacks = []
    for k, d in enumerate(problem.block_dims):
        stack = np.zeros((m, 2 * d, 2 * d))
        for i, (blocks, _) in enumerate(problem.constraints):
            stack[i] = _embed(np.asarray(blocks[k], dtype=np.complex128))
        astacks.append(stack)
    b = np.array([2.0 * float(rhs) for _, rhs in problem.constraints])

    res = _solve_real(dims, cmats, astacks, b, gap_tol, feas_tol, max_iter)
    primal = [
        _extract(xr, int(d)) for xr, d in zip(res["X"], problem.block_dims)
    ]
    pval = sign * res["pobj"] / 2.0
    dval = sign * res["dobj"] / 2.0
    return SdpSolution(
        primal_value=pval,
        dual_value=dval,
        primal_blocks=primal,
        status=res["status"],
        iterations=res["iterations"],
        gap=res["relgap"],
        primal_residual=res["pres"],
        dual_residual=res["dres"],
        trace=res["trace"],
    )


# -- completely bounded norm ---------------------------------------------------


def _full_choi(f: "cpmaps.CPMap") -> np.ndarray:
    """Choi matrix of f viewed as a map between full matrix algebras.

    The direct sums are embedded block-diagonally; the unit ball and the
    completely bounded norm are unchanged by this embedding.
    """
    c = f.source.hilbert_dim
    d = f.target.hilbert_dim
    out = np.zeros((c * d, c * d), dtype=np.complex128)
    src_off = np.cumsum([0] + list(f.source.block_sizes))
    tgt_off = np.cumsum([0] + list(f.target.block_sizes))
    for p, n in enumerate(f.source.block_sizes):
        for q, mq in enumerate(f.target.block_sizes):
            t = f.choi[p][q]
            for i in range(n):
                for j in range(n):
                    u = src_off[p] + i
                    v = src_off[p] + j
                    block = t[i, j]
                    out[u * d + tgt_off[q]: u * d + tgt_off[q] + mq,
                        v * d + tgt_off[q]: v * d + tgt_off[q] + mq] += block
    return out


def cb_norm(delta: "cpmaps.CPMap", gap_tol: float = 1e-9, feas_tol: float = 1e-9,
            max_iter: int = 200) -> float:
    """Completely bounded norm of a Hermiticity-preserving map.

    Computed as the completely bounded trace norm of the adjoint map via
    the standard two-PSD-block program fed by the (Hermitian) Choi matrix:

        min ||tr_out Y||  over  Y + J >= 0,  Y - J >= 0,

    modeled with an extra slack block ``t I - tr_out Y >= 0``.  For maps
    between commutative algebras the norm has the exact max-row-sum
    closed form and no solve is needed.
    """
    if not delta.is_herm_preserving():
        raise NotHermitian("cb_norm expects a Hermiticity-preserving map (Hermitian Choi)")

    if all(n == 1 for n in delta.source.block_sizes) and all(
        m == 1 for m in delta.target.block_sizes
    ):
        w = np.array(
            [[delta.choi[p][q][0, 0, 0, 0] for p in range(delta.source.num_blocks)]
             for q in range(delta.target.num_blocks)]
        )
        return float(np.max(np.sum(np.abs(w), axis=1))) if w.size else 0.0

    if max(float(np.max(np.abs(t))) for row in delta.choi for t in row) == 0.0:
        return 0.0

    adj = cpmaps.adjoint_map(delta)
    jmat = _full_choi(adj)
    jmat = 0.5 * (jmat + dagger(jmat))
    c = adj.source.hilbert_dim
    d = adj.target.hilbert_dim
    cd = c * d

    # blocks: P = Y + J, Q = Y - J, S = t I_c - tr_out(Y), [t]
    block_dims = [cd, cd, c, 1]
    zero_cd = np.zeros((cd, cd), dtype=np.complex128)
    zero_c = np.zeros((c, c), dtype=np.complex128)
    zero_t = np.zeros((1, 1), dtype=np.complex128)
    objective = [zero_cd, zero_cd, zero_c, np.array([[1.0 + 0j]])]

    constraints = []
    for bmat in hermitian_basis(cd):
        rhs = float(np.real(np.einsum("ab,ba->", bmat, 2.0 * jmat)))
        constraints.append(([bmat, -bmat, zero_c, zero_t], rhs))
    eye_d = np.eye(d)
    for bc in hermitian_basis(c):
        lift = 0.5 * np.kron(bc, eye_d)
        constraints.append(
            ([lift, lift, bc, np.array([[-np.trace(bc)]], dtype=np.complex128)], 0.0)
        )

    prob = SdpProblem(block_dims, objective, constraints, sense="min")
    sol = solve(prob, gap_tol=gap_tol, feas_tol=feas_tol, max_iter=max_iter)
    if sol.status != "optimal":
        raise SolverFailure(f"cb-norm SDP finished with status {sol.status}")
    return float(max(sol.primal_value, 0.0))


# -- ucp membership -------------------------------------------------------------


def _dedupe_constraints(constraints, tol: float = 1e-9):
    """Drop linearly dependent constraints; detect inconsistent ones.

    Returns (kept constraints, consistent flag).
    """
    kept = []
    basis = []
    consistent = True
    for blocks, rhs in constraints:
        vec = np.concatenate([np.asarray(b, dtype=np.complex128).ravel() for b in blocks])
        full = np.concatenate([vec.real, vec.imag, [float(rhs)]])
        coeff = full[:-1]
        r = full.copy()
        for u in basis:
            r = r - (u[:-1] @ r[:-1]) * u / max(u[:-1] @ u[:-1], 1e-300)
        if np.linalg.norm(r[:-1]) <= tol * max(1.0, np.linalg.norm(coeff)):
            if abs(r[-1]) > tol * max(1.0, abs(rhs)):
                consistent = False
            continue
        basis.append(r)
        kept.append((blocks, rhs))
    return kept, consistent


def ucp_member(space: OperatorSystemSpace, k: int, candidate, tol: float = 1e-7) -> bool:
    """Does a candidate functional extend to a ucp map on the ambient algebra?

    ``candidate`` lists one k x k value per basis element of ``space``.
    At finite dimension, extendability from the system to the ambient
    algebra is automatic for ucp maps, so membership reduces to a
    feasibility program over Choi blocks with linear agreement and
    unitality constraints.  Solved by maximizing an eigenvalue shift:
    the candidate is a matrix state iff the optimal shift is ~0.
    """
    ambient = space.ambient
    values = [np.asarray(v, dtype=np.complex128) for v in candidate]
    if len(values) != len(space.basis):
        raise ValueError("need one candidate value per basis element")
    for v in values:
        if v.shape != (k, k):
            raise ValueError(f"candidate values must be {k}x{k}")

    # Hermitian spanning set with induced values; a ucp map is *-linear, so
    # inconsistent induced values mean no extension exists.
    herm_elements = []
    for b, v in zip(space.basis, values):
        try:
            coeffs = membership(space, b.adjoint())
        except Exception:
            return False
        v_star = sum(c * val for c, val in zip(coeffs, values))
        herm_elements.append((0.5 * (b + b.adjoint()), 0.5 * (v + v_star)))
        herm_elements.append(((0.5 / 1j) * (b - b.adjoint()), (0.5 / 1j) * (v - v_star)))

    kbasis = hermitian_basis(k)
    nblocks = ambient.num_blocks
    block_dims = [n * k for n in ambient.block_sizes] + [1]

    def lift(element_blocks, bmat):
        return [np.kron(np.asarray(eb).T, bmat) for eb in element_blocks]

    constraints = []
    # agreement on the Hermitian spanning set
    for h_el, v_val in herm_elements:
        if float(np.linalg.norm(v_val - dagger(v_val))) > 1e-8 * max(1.0, float(np.linalg.norm(v_val))):
            return False
        for bmat in kbasis:
            blocks = lift(h_el.blocks, bmat)
            tshift = np.array([[-sum(np.trace(a) for a in blocks)]], dtype=np.complex128)
            rhs = float(np.real(np.einsum("ab,ba->", bmat, v_val)))
            constraints.append((blocks + [tshift], rhs))
    # unitality
    for bmat in kbasis:
        blocks = lift(ambient.unit().blocks, bmat)
        tshift = np.array([[-sum(np.trace(a) for a in blocks)]], dtype=np.complex128)
        constraints.append((blocks + [tshift], float(np.real(np.trace(bmat)))))

    kept, consistent = _dedupe_constraints(constraints)
    if not consistent:
        return False

    zero_blocks = [np.zeros((d, d), dtype=np.complex128) for d in block_dims]
    objective = list(zero_blocks)
    objective[-1] = np.array([[1.0 + 0j]])
    prob = SdpProblem(block_dims, objective, kept, sense="min")
    sol = solve(prob, gap_tol=1e-9, feas_tol=1e-9, max_iter=200)
    if sol.status == "infeasible":
        return False
    if sol.status != "optimal":
        raise SolverFailure(f"membership SDP finished with status {sol.status}")
    return bool(sol.primal_value <= tol * max(1.0, ambient.hilbert_dim))
