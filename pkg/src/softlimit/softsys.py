"""Soft inductive systems at finite horizon.

A system is a finite family of block algebras (levels 0..N-1) with a
triangular table of unital completely positive connecting maps j[n][m]
for n > m; j[n][n] is the identity implicitly.  The operations here
measure transitivity defects on probe elements or as map norms, select
subsequences carrying summability certificates, build the exactly
transitive telescoped system, and profile isometry/multiplicativity
behaviour.

"sup over n" is always evaluated at the available horizon and reported
as such: outputs are decay profiles plus fitted rates, never claims about
a limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cpmaps
from .algebra import AlgElement, FdVNAlgebra
from .cpmaps import CPMap
from .errors import FlagViolation, HorizonTooShort, ShapeMismatch
from .linalg import Tolerance, batch_op_norm, dagger

__all__ = [
    "SoftSystem",
    "DefectReport",
    "SummabilityCertificate",
    "SplitData",
    "transitivity_defects",
    "refine_to_summable",
    "subsystem",
    "strictify",
    "asym_isometry_profile",
    "mult_defect_profile",
    "amplify_system",
    "fit_decay_rate",
]

NORM_KINDS = ("pointwise", "interval", "cb")


class SoftSystem:
    """Finite-horizon family of levels with connecting ucp maps."""

    def __init__(self, levels, maps, name: str = "", provenance: str = "",
                 verify: bool = True, tol: Tolerance | None = None):
        self.levels = list(levels)
        self.maps = dict(maps)
        self.name = name
        self.provenance = provenance
        n_levels = len(self.levels)
        for (n, m), f in self.maps.items():
            if not (0 <= m < n < n_levels):
                raise ShapeMismatch(f"connecting map index ({n},{m}) outside the horizon")
            if f.source.block_sizes != self.levels[m].block_sizes:
                raise ShapeMismatch(f"map ({n},{m}) source does not match level {m}")
            if f.target.block_sizes != self.levels[n].block_sizes:
                raise ShapeMismatch(f"map ({n},{m}) target does not match level {n}")
        for n in range(n_levels):
            for m in range(n):
                if (n, m) not in self.maps:
                    raise ShapeMismatch(f"missing connecting map ({n},{m})")
        if verify:
            for (n, m), f in sorted(self.maps.items()):
                flags = f.verify(tol)
                if not flags["ucp"]:
                    raise FlagViolation(f"connecting map ({n},{m}) is not ucp: {flags}")

    @property
    def horizon(self) -> int:
        return len(self.levels)

    def connecting(self, n: int, m: int) -> CPMap:
        """j[n][m]; the identity for n == m."""
        if n == m:
            return cpmaps.identity_map(self.levels[n])
        if n < m:
            raise ShapeMismatch("connecting maps run upward only (n >= m)")
        return self.maps[(n, m)]

    def probes(self, level: int):
        """Default probe set: matrix units plus the unit of the level."""
        return self.levels[level].basis_elements()

    def __repr__(self):
        return f"SoftSystem({self.name or 'unnamed'}, horizon={self.horizon})"


@dataclass
class SummabilityCertificate:
    """Decreasing summable bound dominating all checked triple map defects."""

    epsilons: list
    norm_kind: str
    rows: list  # (n, m, k, defect, bound) with original level indices
    verified_bound: bool

    def __post_init__(self):
        eps = list(self.epsilons)
        if any(e <= 0 for e in eps):
            raise ValueError("certificate epsilons must be positive")
        if any(b <= a for a, b in zip(eps[1:], eps[:-1])):
            # require strictly decreasing: eps[i] > eps[i+1]
            raise ValueError("certificate epsilons must be strictly decreasing")

    def tail(self, position: int) -> float:
        """sum of epsilons strictly beyond ``position``."""
        return float(sum(self.epsilons[position + 1:]))


@dataclass
class SplitData:
    """Per-level cpc maps from a limit stand-in into each level."""

    maps: list


@dataclass
class DefectReport:
    """Triple-defect table with per-middle-index aggregation and decay fit."""

    rows: list  # (m, n, l, probe_id, defect, norm_kind)
    norm_kind: str
    fit_rate: float = np.nan
    fit_residual: float = np.nan

    def per_m(self) -> dict:
        out: dict = {}
        for m, n, l, pid, defect, kind in self.rows:
            out[m] = max(out.get(m, 0.0), defect)
        return dict(sorted(out.items()))

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r[0], r[1], r[2], str(r[3])))


def fit_decay_rate(values: dict, window: str = "tail"):
    """Least-squares decay rate of log-defect vs index.

    Returns (rate, residual); rate is the positive decay slope.  The
    default window is the trailing half of the available indices, where
    edge effects from the first levels have washed out.
    """
    items = [(m, d) for m, d in sorted(values.items()) if d > 0.0]
    if window == "tail":
        items = items[len(items) // 2:]
    if len(items) < 2:
        return float("nan"), float("nan")
    ms = np.array([m for m, _ in items], dtype=float)
    logs = np.log([d for _, d in items])
    a = np.stack([ms, np.ones_like(ms)], axis=1)
    coef, *_ = np.linalg.lstsq(a, logs, rcond=None)
    resid = float(np.sqrt(np.mean((a @ coef - logs) ** 2)))
    return float(-coef[0]), resid


def _triple_pointwise(sys: SoftSystem, n: int, m: int, l: int, probes):
    """Per-probe values of ||(j_nl - j_nm j_ml)(a)||."""
    j_nl = sys.connecting(n, l)
    j_nm = sys.connecting(n, m)
    j_ml = sys.connecting(m, l)
    labels = [pid for pid, _ in probes]
    if sys.levels[l].num_blocks == 1 and sys.levels[m].num_blocks == 1 \
            and sys.levels[n].num_blocks == 1:
        stack = np.stack([a.blocks[0] for _, a in probes])
        direct = j_nl.apply_stack(stack)
        via = j_nm.apply_stack(j_ml.apply_stack(stack))
        return list(zip(labels, batch_op_norm(direct - via).tolist()))
    out = []
    for pid, a in probes:
        diff = j_nl.apply(a) - j_nm.apply(j_ml.apply(a))
        out.append((pid, diff.norm()))
    return out


def map_triple_defect(sys: SoftSystem, n: int, m: int, l: int,
                      norm_kind: str = "cb", seed: int = 0) -> float:
    """Map-norm defect ||j_nl - j_nm o j_ml|| (cb exact, interval upper)."""
    delta = sys.connecting(n, l) - cpmaps.compose(sys.connecting(n, m), sys.connecting(m, l))
    if norm_kind == "cb":
        from . import sdp

        return sdp.cb_norm(delta)
    if norm_kind == "interval":
        lower, upper = cpmaps.map_norm_interval(delta, seed=seed)
        return upper
    raise ValueError(f"unknown map norm kind {norm_kind!r}")


def transitivity_defects(sys: SoftSystem, probes=None, norm_kind: str = "pointwise",
                         seed: int = 0, workers: int = 1) -> DefectReport:
    """Tabulate asymptotic-transitivity defects over all triples n > m > l.

    ``probes`` maps a level index to a list of (label, element); the
    default is matrix units plus the unit.  ``norm_kind`` 'pointwise'
    evaluates on probes; 'cb'/'interval' measure the map difference norm
    per triple (probe column '*').  With fewer than three levels the
    report is empty.  Sweep cells are independent; ``workers`` > 1 fans
    them out over a thread pool with order-deterministic assembly.
    """
    if norm_kind not in NORM_KINDS:
        raise ValueError(f"norm_kind must be one of {NORM_KINDS}")
    n_levels = sys.horizon

    def sweep(l: int):
        out = []
        probe_list = probes(l) if probes is not None else sys.probes(l)
        for m in range(l + 1, n_levels - 1):
            for n in range(m + 1, n_levels):
                if norm_kind == "pointwise":
                    for pid, val in _triple_pointwise(sys, n, m, l, probe_list):
                        out.append((m, n, l, pid, float(val), norm_kind))
                else:
                    val = map_triple_defect(sys, n, m, l, norm_kind=norm_kind, seed=seed)
                    out.append((m, n, l, "*", float(val), norm_kind))
        return out

    ls = range(max(n_levels - 2, 0))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(sweep, ls))
    else:
        chunks = [sweep(l) for l in ls]
    rows = [row for chunk in chunks for row in chunk]
    report = DefectReport(rows=rows, norm_kind=norm_kind)
    rate, resid = fit_decay_rate(report.per_m())
    report.fit_rate, report.fit_residual = rate, resid
    return report


def subsystem(sys: SoftSystem, indices) -> SoftSystem:
    """Restriction to a strictly increasing list of level indices."""
    idx = list(indices)
    if any(b <= a for a, b in zip(idx, idx[1:])) or not idx:
        raise ShapeMismatch("indices must be strictly increasing and nonempty")
    levels = [sys.levels[i] for i in idx]
    maps = {}
    for a in range(len(idx)):
        for b in range(a):
            maps[(a, b)] = sys.connecting(idx[a], idx[b])
    return SoftSystem(levels, maps, name=f"{sys.name}|sub", provenance=sys.provenance,
                      verify=False)


def refine_to_summable(sys: SoftSystem, target_epsilons, norm_kind: str = "cb",
                       seed: int = 0):
    """Greedy cofinal subsequence whose triple map defects obey the target.

    ``target_epsilons[b]`` bounds every defect whose middle element sits at
    position ``b`` of the selection.  The next index is always the smallest
    admissible one.  Success requires the selection to reach the last level
    of the horizon with at least three members; otherwise the measured
    decay has not fallen below the target within the available levels and
    :class:`HorizonTooShort` is raised.
    """
    eps = [float(e) for e in target_epsilons]
    n_levels = sys.horizon
    if len(eps) < n_levels:
        raise ValueError("need a target epsilon per potential selection position")

    cache: dict = {}

    def defect(n, m, k):
        key = (n, m, k)
        if key not in cache:
            cache[key] = map_triple_defect(sys, n, m, k, norm_kind=norm_kind, seed=seed)
        return cache[key]

    selected: list = []
    rows = []
    for t in range(n_levels):
        ok = True
        new_rows = []
        for b in range(1, len(selected)):
            for c in range(b):
                d = defect(t, selected[b], selected[c])
                new_rows.append((t, selected[b], selected[c], d, eps[b]))
                if d >= eps[b]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            selected.append(t)
            rows.extend(new_rows)

    if len(selected) < 3 or selected[-1] != n_levels - 1:
        raise HorizonTooShort(
            f"defect decay does not meet the target within the horizon "
            f"(selected {selected} of {n_levels} levels)"
        )
    cert = SummabilityCertificate(
        epsilons=eps[: len(selected)],
        norm_kind=norm_kind,
        rows=rows,
        verified_bound=True,
    )
    return selected, cert


def strictify(sys: SoftSystem) -> SoftSystem:
    """Replace j[n][m] by the telescoped chain j[n][n-1] o ... o j[m+1][m].

    The result is exactly transitive by construction (within roundoff of
    the Choi compositions) and each map is ucp as a composition of ucp
    maps.  When the input carries a summability certificate, each new map
    is within the certificate tail of the original.
    """
    maps = {}
    for m in range(sys.horizon - 1):
        chain = sys.connecting(m + 1, m)
        maps[(m + 1, m)] = chain
        for n in range(m + 2, sys.horizon):
            chain = cpmaps.compose(sys.connecting(n, n - 1), chain)
            maps[(n, m)] = chain
    return SoftSystem(sys.levels, maps, name=f"{sys.name}~strict",
                      provenance="strictified", verify=False)


def exact_transitivity_residual(sys: SoftSystem) -> float:
    """Max Choi distance between composed and direct connecting maps."""
    worst = 0.0
    for l in range(max(sys.horizon - 2, 0)):
        for m in range(l + 1, sys.horizon - 1):
            for n in range(m + 1, sys.horizon):
                composed = cpmaps.compose(sys.connecting(n, m), sys.connecting(m, l))
                worst = max(worst, cpmaps.choi_distance(sys.connecting(n, l), composed))
    return worst


def asym_isometry_profile(sys: SoftSystem, samples: int = 32, refine_steps: int = 30,
                          seed: int = 0):
    """Estimated min of ||j_nm(a)|| over unit-norm a, per pair n > m.

    Randomized search over self-adjoint unitaries and normalized random
    elements with greedy local refinement; the value is an upper bound on
    the true infimum and is flagged as an estimate.  Returns (pair_rows,
    per_m) where pair_rows are (n, m, estimate) and per_m is the inf over
    n at each m.
    """
    rng = np.random.default_rng(seed)
    pair_rows = []
    for m in range(sys.horizon - 1):
        algebra = sys.levels[m]
        candidates = []
        for _ in range(samples):
            blocks = []
            for size in algebra.block_sizes:
                rank = int(rng.integers(0, size + 1))
                blocks.append(cpmaps._random_symmetry(rng, size, rank))
            candidates.append(AlgElement(algebra, blocks))
            raw = [rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
                   for s in algebra.block_sizes]
            el = AlgElement(algebra, raw)
            nrm = el.norm()
            if nrm > 1e-12:
                candidates.append((1.0 / nrm) * el)
        for n in range(m + 1, sys.horizon):
            j = sys.connecting(n, m)
            best = min(j.apply(x).norm() for x in candidates)
            x_best = min(candidates, key=lambda x: j.apply(x).norm())
            eps = 0.2
            x = x_best
            for _ in range(refine_steps):
                blocks = []
                for b, s in zip(x.blocks, algebra.block_sizes):
                    h = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
                    blocks.append(b + eps * 0.5 * (h + dagger(h)))
                cand = AlgElement(algebra, blocks)
                nrm = cand.norm()
                if nrm <= 1e-12:
                    continue
                cand = (1.0 / nrm) * cand
                val = j.apply(cand).norm()
                if val < best:
                    best, x = val, cand
                else:
                    eps *= 0.7
            pair_rows.append((n, m, float(best)))
    per_m: dict = {}
    for n, m, est in pair_rows:
        per_m[m] = min(per_m.get(m, np.inf), est)
    return pair_rows, dict(sorted(per_m.items()))


def mult_defect_profile(sys: SoftSystem, probe_pairs=None, max_pairs: int = 24,
                        seed: int = 0):
    """C*-flavored defect ||j_nm((j_ml a)(j_ml b)) - (j_nl a)(j_nl b)||.

    ``probe_pairs`` maps a level to (label, a, b) triples; the default
    draws a seeded sample of basis pairs.  A decaying profile is evidence
    that the system behaves like a system of C*-algebras.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for l in range(max(sys.horizon - 2, 0)):
        if probe_pairs is not None:
            pairs = probe_pairs(l)
        else:
            basis = sys.probes(l)
            all_pairs = [(f"{pa}.{pb}", a, b) for pa, a in basis for pb, b in basis]
            if len(all_pairs) > max_pairs:
                pick = rng.choice(len(all_pairs), size=max_pairs, replace=False)
                pairs = [all_pairs[i] for i in sorted(pick)]
            else:
                pairs = all_pairs
        for m in range(l + 1, sys.horizon - 1):
            j_ml = sys.connecting(m, l)
            for n in range(m + 1, sys.horizon):
                j_nm = sys.connecting(n, m)
                j_nl = sys.connecting(n, l)
                for pid, a, b in pairs:
                    lhs = j_nm.apply(j_ml.apply(a) * j_ml.apply(b))
                    rhs = j_nl.apply(a) * j_nl.apply(b)
                    rows.append((m, n, l, pid, float((lhs - rhs).norm()), "pointwise"))
    report = DefectReport(rows=rows, norm_kind="pointwise")
    rate, resid = fit_decay_rate(report.per_m())
    report.fit_rate, report.fit_residual = rate, resid
    return report


def amplify_system(sys: SoftSystem, nu: int) -> SoftSystem:
    """Matrix amplification of every level and connecting map."""
    levels = [FdVNAlgebra([n * nu for n in a.block_sizes]) for a in sys.levels]
    maps = {key: cpmaps.amplify_map(f, nu) for key, f in sys.maps.items()}
    return SoftSystem(levels, maps, name=f"{sys.name}(x{nu})",
                      provenance=sys.provenance, verify=False)
