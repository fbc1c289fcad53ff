"""Finite-level noncommutative state spaces and the dual side of soft systems.

A matrix state at level k is a ucp map from a concrete operator system
into M_k, stored through an ambient-algebra witness map (extendability at
finite dimension makes this lossless).  Pulling states back along ucp maps
is contravariant; on soft systems the pulled-back transitivity defects can
never exceed the primal ones, which is the quantitative shadow of the
projective-limit picture on the dual side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cpmaps
from .algebra import AlgElement, FdVNAlgebra, OperatorSystemSpace, membership
from .cpmaps import CPMap
from .errors import DimensionMismatch, NotInSpan
from .linalg import batch_op_norm, dagger
from .softsys import SoftSystem

__all__ = [
    "MatrixState",
    "sample_states",
    "canonical_states",
    "pushback",
    "projective_defect",
    "kadison_eval",
]


@dataclass
class MatrixState:
    """ucp map from (the ambient of) an operator system into M_k."""

    space: OperatorSystemSpace
    level: int
    cpmap: CPMap
    label: str = ""

    def __post_init__(self):
        if self.cpmap.target.block_sizes != (self.level,):
            raise DimensionMismatch("state map must land in a single matrix block M_k")
        if self.cpmap.source.block_sizes != self.space.ambient.block_sizes:
            raise DimensionMismatch("state map must be carried by the ambient algebra")

    def verified(self) -> bool:
        return self.cpmap.is_ucp()

    def __call__(self, a: AlgElement) -> np.ndarray:
        return self.cpmap.apply(a).blocks[0]


def sample_states(space: OperatorSystemSpace, k: int, count: int, seed: int = 0,
                  max_tries: int = 200) -> list:
    """Random matrix states at level k, seeded.

    Sampling draws a PSD Choi block per ambient block, projects onto the
    unitality constraint by solving the small linear system (spreading the
    correction across blocks), and rejects draws whose positivity is lost.
    """
    ambient = space.ambient
    rng = np.random.default_rng(seed)
    n_total = ambient.hilbert_dim
    out = []
    tries = 0
    while len(out) < count and tries < max_tries * count:
        tries += 1
        blocks = []
        for n in ambient.block_sizes:
            g = rng.standard_normal((n * k, n * k)) + 1j * rng.standard_normal((n * k, n * k))
            blocks.append(g @ dagger(g))
        total = sum(float(np.trace(b).real) for b in blocks)
        # blend with the (interior) trace-state Choi so the unitality
        # correction below rarely pushes an eigenvalue negative
        theta = 0.35
        blocks = [
            (1.0 - theta) * b * (k / total) + theta * np.eye(n * k) / n_total
            for b, n in zip(blocks, ambient.block_sizes)
        ]
        # unitality correction: sum_p tr_1 C_p = I_k
        tr1 = sum(
            np.einsum("iaib->ab", b.reshape(n, k, n, k))
            for b, n in zip(blocks, ambient.block_sizes)
        )
        delta = np.eye(k) - tr1
        blocks = [
            b + np.kron(np.eye(n), delta) / n_total
            for b, n in zip(blocks, ambient.block_sizes)
        ]
        if any(np.linalg.eigvalsh(0.5 * (b + dagger(b)))[0] < -1e-12 for b in blocks):
            continue
        choi = [
            [cpmaps._choi_matrix_to_tensor(0.5 * (b + dagger(b)), n, k)]
            for b, n in zip(blocks, ambient.block_sizes)
        ]
        state = MatrixState(
            space, k, CPMap(ambient, FdVNAlgebra([k]), choi), label=f"s{len(out)}"
        )
        if state.verified():
            out.append(state)
    if len(out) < count:
        raise RuntimeError(f"state sampling starved after {tries} tries")
    return out


def canonical_states(space: OperatorSystemSpace, k: int) -> list:
    """Deterministic witnesses: compressions onto k-dim corners.

    For a full matrix block of size >= k these attain operator norms of
    self-adjoint elements supported there, which random sampling only
    approaches.
    """
    ambient = space.ambient
    out = []
    target = FdVNAlgebra([k])
    for p, n in enumerate(ambient.block_sizes):
        if n < k:
            continue
        for start in range(0, n - k + 1):
            def comp(x, p=p, start=start):
                return AlgElement(target, [x.blocks[p][start:start + k, start:start + k]])

            out.append(MatrixState(
                space, k, cpmaps.from_function(ambient, target, comp),
                label=f"corner[{p}]{start}",
            ))
    return out


def pushback(phi: CPMap, x: MatrixState, space: OperatorSystemSpace | None = None) -> MatrixState:
    """Pull a state on the target of phi back to a state on its source."""
    if phi.target.block_sizes != x.cpmap.source.block_sizes:
        raise DimensionMismatch("state is not defined on the target of the map")
    target_space = space or OperatorSystemSpace.full(phi.source)
    return MatrixState(target_space, x.level, cpmaps.compose(x.cpmap, phi),
                       label=f"{x.label}*")


def projective_defect(sys: SoftSystem, k: int, samples: int = 8, seed: int = 0,
                      states=None):
    """Dual image of the transitivity defect under pulled-back states.

    For each triple n > m > l and each sampled state x at level n, the
    defect sup over the level-l basis of ||x(j_nl e) - x(j_nm j_ml e)|| is
    recorded next to the primal pointwise defect on the same probes; the
    dual value can never exceed the primal one since states are
    contractions.  Rows: (n, m, l, state label, dual, primal).
    """
    rows = []
    for n in range(2, sys.horizon):
        level_states = states(n) if states is not None else sample_states(
            OperatorSystemSpace.full(sys.levels[n]), k, samples, seed=seed + n
        )
        for m in range(1, n):
            for l in range(m):
                probes = sys.probes(l)
                deltas = [
                    sys.connecting(n, l).apply(a)
                    - sys.connecting(n, m).apply(sys.connecting(m, l).apply(a))
                    for _, a in probes
                ]
                primal = max(d.norm() for d in deltas)
                for x in level_states:
                    dual = max(batch_op_norm(np.stack([x(d) for d in deltas])))
                    rows.append((n, m, l, x.label, float(dual), float(primal)))
    return rows


def kadison_eval(space: OperatorSystemSpace, a: AlgElement, x: MatrixState) -> np.ndarray:
    """Evaluate a matrix state on a system element.

    Linear in ``a``; positive elements map to PSD matrices and the unit to
    the identity.  Raises :class:`NotInSpan` if ``a`` is outside the span.
    """
    membership(space, a)  # raises NotInSpan
    return x(a)
