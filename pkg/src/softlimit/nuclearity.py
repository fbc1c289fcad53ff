"""Completely positive approximation systems and the induced split systems.

Naming convention, fixed package-wide: ``down_n`` maps the approximated
system's ambient into the n-th finite level, ``up_n`` maps the level back,
and the induced connecting maps are ``j[n][m] = down_n o up_m``.  The
induced system is split with right inverse given by the down maps.

Example generators: a commutative interval algebra discretized on a fine
grid with piecewise-linear approximations, a tensor-power tower with
conditional expectations (exactly transitive), and a convex trace-state
perturbation of a strict system (genuinely soft).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cpmaps
from .algebra import AlgElement, FdVNAlgebra, OperatorSystemSpace
from .cpmaps import CPMap
from .errors import BadGrid, FlagViolation, HorizonTooShort
from .softsys import SoftSystem, SplitData

__all__ = [
    "CpaSystem",
    "InducedSystem",
    "induce",
    "refine_summable_cpa",
    "example_interval",
    "example_uhf",
    "example_perturbed",
    "qd_defect",
    "split_factorization",
]


@dataclass
class CpaSystem:
    """Paired down/up completely positive contractions through finite levels."""

    space: OperatorSystemSpace
    down: list
    up: list
    levels: list
    name: str = ""

    def __post_init__(self):
        if not (len(self.down) == len(self.up) == len(self.levels)):
            raise ValueError("down, up and levels must have equal length")
        ambient = self.space.ambient
        for k, (d, u, lev) in enumerate(zip(self.down, self.up, self.levels)):
            if d.source.block_sizes != ambient.block_sizes or \
                    d.target.block_sizes != lev.block_sizes:
                raise ValueError(f"down[{k}] does not run ambient -> level")
            if u.source.block_sizes != lev.block_sizes or \
                    u.target.block_sizes != ambient.block_sizes:
                raise ValueError(f"up[{k}] does not run level -> ambient")

    @property
    def depth(self) -> int:
        return len(self.levels)

    def verify_cpc(self):
        for k, f in enumerate(self.down):
            if not f.is_cpc():
                raise FlagViolation(f"down[{k}] is not a cp contraction")
        for k, f in enumerate(self.up):
            if not f.is_cpc():
                raise FlagViolation(f"up[{k}] is not a cp contraction")

    def reconstruction_defect(self, probe: AlgElement, n: int) -> float:
        """r_n(a) = ||up_n(down_n(a)) - a||."""
        return (self.up[n].apply(self.down[n].apply(probe)) - probe).norm()


@dataclass
class InducedSystem:
    """Soft system on the approximation levels, plus its split data."""

    soft: SoftSystem
    split: SplitData
    inequality_rows: list = field(default_factory=list)
    # rows: (n, m, l, probe_id, lhs, rhs) with lhs <= rhs the proof bound


def induce(cpa: CpaSystem, probes=None) -> InducedSystem:
    """Build the induced soft system j[n][m] = down_n o up_m.

    For every probe the transitivity defect is compared against the bound
    ||(id - up_m down_m)(up_l(a_l))||, which dominates it because the down
    maps are contractions; both sides are recorded and the inequality is
    asserted.
    """
    cpa.verify_cpc()
    maps = {}
    for n in range(cpa.depth):
        for m in range(n):
            maps[(n, m)] = cpmaps.compose(cpa.down[n], cpa.up[m])
    soft = SoftSystem(cpa.levels, maps, name=f"{cpa.name}|induced",
                      provenance="induced")
    system = InducedSystem(soft=soft, split=SplitData(maps=list(cpa.down)))

    rows = []
    for l in range(max(cpa.depth - 2, 0)):
        probe_list = probes(l) if probes is not None else soft.probes(l)
        for pid, a_l in probe_list:
            lifted = cpa.up[l].apply(a_l)
            for m in range(l + 1, cpa.depth - 1):
                bound_el = lifted - cpa.up[m].apply(cpa.down[m].apply(lifted))
                rhs = bound_el.norm()
                for n in range(m + 1, cpa.depth):
                    lhs = (
                        soft.connecting(n, l).apply(a_l)
                        - soft.connecting(n, m).apply(soft.connecting(m, l).apply(a_l))
                    ).norm()
                    if lhs > rhs + 1e-10:
                        raise FlagViolation(
                            f"induced defect {lhs:.3e} exceeds its bound {rhs:.3e} "
                            f"at (n,m,l)=({n},{m},{l}) probe {pid}"
                        )
                    rows.append((n, m, l, pid, float(lhs), float(rhs)))
    system.inequality_rows = rows
    return system


def refine_summable_cpa(cpa: CpaSystem, probes, target=None) -> CpaSystem:
    """Subsequence of approximation levels with summable reconstruction decay.

    Measures d_n = max over probes of ||(id - up_n down_n)(a)|| and selects
    greedily the smallest next level with d below the target at its
    position (default target 2^-position scaled by the first measurement).
    Raises :class:`HorizonTooShort` when the tail never falls below the
    target.
    """
    defects = []
    for n in range(cpa.depth):
        defects.append(max(cpa.reconstruction_defect(a, n) for _, a in probes))
    if target is None:
        base = max(defects[0], 1e-12)
        target = [base * 2.0 ** (1 - k) for k in range(cpa.depth)]
    target = [float(t) for t in target]

    selected = []
    for n in range(cpa.depth):
        if defects[n] < target[len(selected)]:
            selected.append(n)
    if len(selected) < 2 or selected[-1] != cpa.depth - 1:
        raise HorizonTooShort(
            f"reconstruction defects {defects} never fall below the target tail"
        )
    return CpaSystem(
        space=cpa.space,
        down=[cpa.down[n] for n in selected],
        up=[cpa.up[n] for n in selected],
        levels=[cpa.levels[n] for n in selected],
        name=f"{cpa.name}|summable",
    )


# -- examples -----------------------------------------------------------------


def interval_ambient(fine: int = 256) -> FdVNAlgebra:
    """Functions on [0, 1) sampled at the ``fine`` points i/fine, as diagonals."""
    return FdVNAlgebra([1] * fine)


def interval_function(fn, fine: int = 256) -> AlgElement:
    """Discretize a scalar function at the sample points i/fine."""
    ambient = interval_ambient(fine)
    ts = np.arange(fine) / fine
    return AlgElement(ambient, [np.array([[complex(fn(t))]]) for t in ts])


def example_interval(grids, fine: int = 256) -> CpaSystem:
    """Piecewise-linear approximation system for functions on [0, 1).

    Level g evaluates at the g+1 nodes {0, 1/g, ..., (g-1)/g, t_max} (all
    exact sample points since g divides the fine grid; t_max is the last
    fine point) and interpolates back with the hat-function partition of
    unity on those nodes.  Interpolation is endpoint-anchored, so linear
    functions reconstruct exactly and the defect of a probe f is bounded
    by its modulus of continuity at scale 1/g, with the curvature bound
    h^2/8 * max|f''| on interior cells.
    """
    grids = [int(g) for g in grids]
    if any(g2 <= g1 for g1, g2 in zip(grids, grids[1:])) or not grids:
        raise BadGrid("grids must be strictly increasing and nonempty")
    if any(g <= 1 or fine % g != 0 or fine // g < 2 for g in grids):
        raise BadGrid(f"each grid must exceed 1 and properly divide the fine grid {fine}")
    ambient = interval_ambient(fine)
    ts = np.arange(fine) / fine
    downs, ups, levels = [], [], []
    for g in grids:
        s = fine // g
        node_idx = [j * s for j in range(g)] + [fine - 1]
        nodes = ts[node_idx]
        sample = np.zeros((g + 1, fine))
        for row, i in enumerate(node_idx):
            sample[row, i] = 1.0
        interp = np.zeros((fine, g + 1))
        for i, t in enumerate(ts):
            j = int(np.searchsorted(nodes, t, side="right") - 1)
            if j >= g:
                interp[i, g] = 1.0
                continue
            w = (t - nodes[j]) / (nodes[j + 1] - nodes[j])
            interp[i, j] = 1.0 - w
            interp[i, j + 1] = w
        downs.append(cpmaps.stochastic_map(sample))
        ups.append(cpmaps.stochastic_map(interp))
        levels.append(FdVNAlgebra([1] * (g + 1)))
    space = OperatorSystemSpace.full(ambient)
    return CpaSystem(space=space, down=downs, up=ups, levels=levels,
                     name=f"interval{grids}")


def example_uhf(depth: int) -> CpaSystem:
    """Tensor-power tower M_2 c M_4 c ... with conditional expectations.

    Ambient M_{2^depth}; down_n is the normalized partial trace onto
    M_{2^n}, up_n tensors with the unit.  down_n o up_n is the identity on
    the level exactly, so the induced system is strict.
    """
    if not (1 <= depth <= 6):
        raise ValueError("depth must be between 1 and 6 (dims <= 64)")
    big = 2 ** depth
    downs, ups, levels = [], [], []
    for n in range(1, depth + 1):
        d = 2 ** n
        k = big // d
        levels.append(FdVNAlgebra([d]))
        downs.append(cpmaps.normalized_partial_trace(d, k))
        ups.append(cpmaps.embed_tensor_unit(d, k))
    space = OperatorSystemSpace.full(FdVNAlgebra([big]))
    return CpaSystem(space=space, down=downs, up=ups, levels=levels,
                     name=f"uhf{depth}")


def example_perturbed(base: SoftSystem, weights, state_maker=None) -> SoftSystem:
    """Trace-state perturbation of a strict system: a genuinely soft testbed.

    j'[n][m] = (1 - w_m) j[n][m] + w_m (state_m o) 1, with w indexed by the
    source level.  Each perturbed map is a convex combination of ucp maps,
    hence ucp; the system is not strict for any positive weight.
    """
    weights = [float(w) for w in weights]
    if len(weights) < base.horizon:
        raise ValueError("need one weight per level")
    if any(not (0.0 <= w < 1.0) for w in weights):
        raise ValueError("weights must lie in [0, 1)")
    maker = state_maker or (
        lambda src, tgt: cpmaps.trace_state_to_unit(src, tgt)
    )
    maps = {}
    for n in range(base.horizon):
        for m in range(n):
            j = base.connecting(n, m)
            mix = maker(base.levels[m], base.levels[n])
            maps[(n, m)] = cpmaps.convex_combination([j, mix], [1.0 - weights[m], weights[m]])
    return SoftSystem(base.levels, maps, name=f"{base.name}|perturbed",
                      provenance="perturbed", verify=False)


def constant_base_system(horizon: int, dim: int = 2) -> SoftSystem:
    """Strict system with one fixed matrix level and identity maps."""
    algebra = FdVNAlgebra([dim])
    ident = cpmaps.identity_map(algebra)
    maps = {(n, m): ident for n in range(horizon) for m in range(n)}
    return SoftSystem([algebra] * horizon, maps, name=f"const{dim}x{horizon}",
                      provenance="strict", verify=False)


def qd_defect(maps, probe_pairs):
    """Pointwise multiplicativity and isometry defects of cpc maps.

    ``maps`` share a common source; ``probe_pairs`` are (label, a, b).
    Rows are (map index, label, mult defect, isometry defect) where the
    isometry defect of a is | ||psi(a)|| - ||a|| |.
    """
    rows = []
    for k, psi in enumerate(maps):
        for pid, a, b in probe_pairs:
            mult = (psi.apply(a * b) - psi.apply(a) * psi.apply(b)).norm()
            iso = abs(psi.apply(a).norm() - a.norm())
            rows.append((k, pid, float(mult), float(iso)))
    return rows


def split_factorization(cpa: CpaSystem, level: int, mid_factor=None):
    """Factorization theta o gamma through a finite level, from split data.

    gamma = alpha o s_level and theta = up_level o beta, where (alpha,
    beta) is an exact nuclearity factorization of the finite level (every
    finite-dimensional block algebra admits one; by default the diagonal
    embedding/compression pair for commutative levels, identity otherwise).
    Returns (gamma, theta) as maps ambient -> mid and mid -> ambient.
    """
    s = cpa.down[level]
    up = cpa.up[level]
    lev = cpa.levels[level]
    if mid_factor is not None:
        alpha, beta = mid_factor
    elif all(n == 1 for n in lev.block_sizes):
        alpha = cpmaps.diag_embedding(lev.num_blocks)
        beta = cpmaps.diag_compression(lev.num_blocks)
    else:
        alpha = cpmaps.identity_map(lev)
        beta = cpmaps.identity_map(lev)
    gamma = cpmaps.compose(alpha, s)
    theta = cpmaps.compose(up, beta)
    return gamma, theta
