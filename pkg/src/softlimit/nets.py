"""Finite-horizon analysis of bounded nets over a soft system.

A bounded net holds one element per level up to the horizon.  The
analyses report tail sup norms (the seminorm stand-in), convergence
defects against the net's own pushforwards, null-decay evidence, quotient
positivity with explicit positive lifts, limit-map probes, and the
truncation/extension approximation pair available for strict systems.

All verdicts carry the window they were computed on; the trailing half of
the horizon is the default tail.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cpmaps
from .algebra import AlgElement, FdVNAlgebra
from .cpmaps import CPMap
from .errors import DimensionMismatch, NotSelfAdjoint, NotStrict
from .softsys import SoftSystem, exact_transitivity_residual, fit_decay_rate

__all__ = [
    "BoundedNet",
    "NetVerdict",
    "basic_net",
    "unit_net",
    "analyze_net",
    "quotient_positive",
    "limit_map_probe",
    "net_algebra",
    "truncation_cpa",
    "net_to_element",
    "element_to_net",
]


@dataclass
class BoundedNet:
    """One element per level of a soft system, with a provenance tag."""

    system: SoftSystem
    entries: list
    tag: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.entries) != self.system.horizon:
            raise DimensionMismatch("need one entry per level up to the horizon")
        for a, lev in zip(self.entries, self.system.levels):
            if a.algebra.block_sizes != lev.block_sizes:
                raise DimensionMismatch("net entry does not match its level algebra")

    def norms(self) -> list:
        return [a.norm() for a in self.entries]

    def sup_norm(self) -> float:
        return max(self.norms())

    def adjoint(self) -> "BoundedNet":
        return BoundedNet(self.system, [a.adjoint() for a in self.entries],
                          tag=self.tag, meta=dict(self.meta))

    def product(self, other: "BoundedNet") -> "BoundedNet":
        return BoundedNet(self.system, [a * b for a, b in zip(self.entries, other.entries)],
                          tag="custom", meta={"op": "product"})


def basic_net(sys: SoftSystem, level: int, seed_element: AlgElement) -> BoundedNet:
    """Forward orbit (j_n,level a)_n; zero below the starting level."""
    entries = []
    for n in range(sys.horizon):
        if n < level:
            entries.append(sys.levels[n].zero())
        elif n == level:
            entries.append(seed_element)
        else:
            entries.append(sys.connecting(n, level).apply(seed_element))
    return BoundedNet(sys, entries, tag=f"basic({level})")


def unit_net(sys: SoftSystem) -> BoundedNet:
    return BoundedNet(sys, [lev.unit() for lev in sys.levels], tag="unit")


@dataclass
class NetVerdict:
    seminorm_estimate: float
    jconv_defect: dict           # m -> sup_{n>m} ||a_n - j_nm a_m||
    null_rate: float
    null_residual: float
    tail_norm: float
    cauchy_rows: list            # (m, m', ||j_{N-1,m} a_m - j_{N-1,m'} a_{m'}||)
    window: tuple                # (start, end) levels used as the tail


def _tail_window(horizon: int) -> tuple:
    return (horizon // 2, horizon)


def analyze_net(x: BoundedNet) -> NetVerdict:
    """Seminorm estimate, convergence defects and null evidence for a net.

    The Cauchy profile compares top-level pushforwards of tail entries,
    the finite stand-in for the net of limit approximants.
    """
    sys = x.system
    horizon = sys.horizon
    lo, hi = _tail_window(horizon)
    norms = x.norms()
    seminorm = max(norms[lo:hi]) if norms[lo:hi] else 0.0

    jconv = {}
    for m in range(horizon - 1):
        worst = 0.0
        j_apply_m = [sys.connecting(n, m) for n in range(m + 1, horizon)]
        for n, j in zip(range(m + 1, horizon), j_apply_m):
            worst = max(worst, (x.entries[n] - j.apply(x.entries[m])).norm())
        jconv[m] = worst

    rate, resid = fit_decay_rate({n: v for n, v in enumerate(norms)})
    top = horizon - 1
    cauchy = []
    for m in range(lo, horizon):
        am = sys.connecting(top, m).apply(x.entries[m])
        for mp in range(m + 1, horizon):
            amp = sys.connecting(top, mp).apply(x.entries[mp])
            cauchy.append((m, mp, float((am - amp).norm())))
    return NetVerdict(
        seminorm_estimate=float(seminorm),
        jconv_defect=jconv,
        null_rate=rate,
        null_residual=resid,
        tail_norm=float(max(norms[lo:hi], default=0.0)),
        cauchy_rows=cauchy,
        window=(lo, hi),
    )


def quotient_positive(x: BoundedNet, tol: float):
    """Positivity of the class of a self-adjoint net, with an explicit lift.

    The negativity nu_n = max(0, -min_eig(a_n)) must fall below ``tol`` on
    the tail window; the returned lift a_n + nu_n 1 is positive levelwise
    and the scalar correction net carries its own decay fit.
    """
    sys = x.system
    for n, a in enumerate(x.entries):
        if not a.is_selfadjoint():
            raise NotSelfAdjoint(f"net entry {n} is not self-adjoint within tolerance")
    negativity = [max(0.0, -a.min_eig()) for a in x.entries]
    lo, hi = _tail_window(sys.horizon)
    verdict = max(negativity[lo:hi], default=0.0) <= tol
    rate, resid = fit_decay_rate({n: v for n, v in enumerate(negativity)})
    lift = None
    if verdict:
        lift = BoundedNet(
            sys,
            [a + nu * lev.unit() for a, nu, lev in zip(x.entries, negativity, sys.levels)],
            tag="lift",
            meta={"correction": negativity},
        )
    return {
        "verdict": bool(verdict),
        "lift": lift,
        "negativity": negativity,
        "correction_rate": rate,
        "correction_residual": resid,
        "window": (lo, hi),
    }


def limit_map_probe(sys: SoftSystem, alphas, nets):
    """Numerical witness that a compatible family of cpc maps has a limit.

    ``alphas[n]`` maps level n into a fixed target.  For each probe net the
    image sequence alpha_n(a_n) is profiled over the tail window: rows are
    (net index, m, m', ||alpha_m(a_m) - alpha_m'(a_m')||), and the sup per
    net is the pairwise-consistency defect.
    """
    if len(alphas) != sys.horizon:
        raise DimensionMismatch("need one map per level")
    target = alphas[0].target
    for n, al in enumerate(alphas):
        if al.source.block_sizes != sys.levels[n].block_sizes:
            raise DimensionMismatch(f"alpha[{n}] source does not match level {n}")
        if al.target.block_sizes != target.block_sizes:
            raise DimensionMismatch("alphas must share one target")
        if not al.is_cpc():
            raise DimensionMismatch(f"alpha[{n}] is not a cp contraction")
    lo, hi = _tail_window(sys.horizon)
    rows = []
    sups = []
    for idx, net in enumerate(nets):
        images = [alphas[n].apply(net.entries[n]) for n in range(sys.horizon)]
        worst = 0.0
        for m in range(lo, hi):
            for mp in range(m + 1, hi):
                val = float((images[m] - images[mp]).norm())
                rows.append((idx, m, mp, val))
                worst = max(worst, val)
        sups.append(worst)
    return {"rows": rows, "consistency": sups, "window": (lo, hi)}


# -- truncation approximation for strict systems -------------------------------


def net_algebra(sys: SoftSystem) -> FdVNAlgebra:
    """All levels side by side: the finite stand-in for the net space."""
    return FdVNAlgebra([s for lev in sys.levels for s in lev.block_sizes])


def net_to_element(x: BoundedNet) -> AlgElement:
    blocks = [b for a in x.entries for b in a.blocks]
    return AlgElement(net_algebra(x.system), blocks)


def element_to_net(sys: SoftSystem, el: AlgElement, tag: str = "custom") -> BoundedNet:
    entries = []
    k = 0
    for lev in sys.levels:
        nb = lev.num_blocks
        entries.append(AlgElement(lev, el.blocks[k: k + nb]))
        k += nb
    return BoundedNet(sys, entries, tag=tag)


def truncation_cpa(sys: SoftSystem, m: int, tol: float = 1e-10):
    """Compression/extension pair through the first m levels of a strict system.

    psi truncates a net to coordinates 0..m-1; phi extends a truncated net
    by pushing the (m-1)-th coordinate forward along the connecting maps.
    Both are ucp, and phi o psi fixes every net that is eventually strict
    from index <= m-1 onward; on basic nets of a strict system this is
    exact.  Raises :class:`NotStrict` when the system's transitivity
    residual exceeds ``tol``.
    """
    if not (1 <= m <= sys.horizon):
        raise DimensionMismatch("truncation index must be within the horizon")
    residual = exact_transitivity_residual(sys)
    if residual > tol:
        raise NotStrict(f"transitivity residual {residual:.3e} exceeds {tol:.1e}")
    big = net_algebra(sys)
    trunc_count = sum(lev.num_blocks for lev in sys.levels[:m])
    psi = cpmaps.compress_blocks(big, range(trunc_count))
    trunc_alg = psi.target

    # map (level, block-in-level) to flat block index of the net algebra
    flat = []
    for li, lev in enumerate(sys.levels):
        for b in range(lev.num_blocks):
            flat.append((li, b))

    choi = []
    for p in range(trunc_count):
        lev_p, b_p = flat[p]
        n_p = sys.levels[lev_p].block_sizes[b_p]
        row = []
        for q, (lev_q, b_q) in enumerate(flat):
            m_q = sys.levels[lev_q].block_sizes[b_q]
            t = np.zeros((n_p, n_p, m_q, m_q), dtype=np.complex128)
            if lev_q < m:
                if (lev_q, b_q) == (lev_p, b_p):
                    for i in range(n_p):
                        for j in range(n_p):
                            t[i, j, i, j] = 1.0
            elif lev_p == m - 1:
                t[...] = sys.connecting(lev_q, m - 1).choi[b_p][b_q]
            row.append(t)
        choi.append(row)
    phi = cpmaps.CPMap(trunc_alg, big, choi)
    return psi, phi
