"""Experiment runner: configuration, builtin systems, CSV reporting.

Every run is deterministic given (config, seed): CSV rows are sorted, the
RNG is seeded once, and every output file starts with a metadata line
carrying the artifact version, the seed, and a hash of the logical config
(the output directory is not part of the hash).  Exit codes: 0 success,
2 invalid config or parse error, 3 numerical failure, 4 horizon too short.

The environment variable SOFTLIMIT_THREADS caps the worker pool used for
defect sweeps.
"""
from __future__ import annotations

import hashlib
import os
import sys as _sys
from pathlib import Path

import click
import numpy as np

from . import __version__, cpmaps, ncstates, nets, nuclearity, serialize, softsys
from .algebra import OperatorSystemSpace
from .errors import (
    ConfigInvalid,
    HorizonTooShort,
    NumericalFailure,
    ParseError,
    SoftlimitError,
    SolverFailure,
)

_NORMS = ("pointwise", "interval", "cb")
_TOP_KEYS = {"system", "seed", "norm", "horizon", "out", "tolerances",
             "strictify", "cpa", "ncdual", "limit_probe", "qd", "path"}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def _workers() -> int:
    raw = os.environ.get("SOFTLIMIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = serialize.load_path(path)
    except (OSError, ParseError) as exc:
        raise ConfigInvalid(f"config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config: top-level object must be a JSON object")
    return cfg


def _validate(cfg: dict):
    for key in cfg:
        if key not in _TOP_KEYS:
            raise ConfigInvalid(f"config field {key!r} is not recognized")
    seed = cfg.get("seed", 0)
    if not (isinstance(seed, int) and seed >= 0):
        raise ConfigInvalid("config field 'seed' must be a nonnegative integer")
    norm = cfg.get("norm", "pointwise")
    if norm not in _NORMS:
        raise ConfigInvalid(f"config field 'norm' must be one of {_NORMS}")
    horizon = cfg.get("horizon")
    if horizon is not None and not (isinstance(horizon, int) and horizon >= 2):
        raise ConfigInvalid("config field 'horizon' must be an integer >= 2")
    system = cfg.get("system")
    if system is not None:
        if not isinstance(system, dict):
            raise ConfigInvalid("config field 'system' must be an object")
        if "path" in system:
            if not isinstance(system["path"], str):
                raise ConfigInvalid("config field 'system.path' must be a string")
        else:
            builtin = system.get("builtin")
            if builtin not in ("uhf", "perturbed", "interval"):
                raise ConfigInvalid(
                    "config field 'system.builtin' must be 'uhf', 'perturbed' or 'interval'"
                )
            if builtin == "uhf":
                depth = system.get("depth", 5)
                if not (isinstance(depth, int) and 1 <= depth <= 6):
                    raise ConfigInvalid("config field 'system.depth' must be 1..6")
            if builtin == "perturbed":
                hz = system.get("horizon", 10)
                if not (isinstance(hz, int) and hz >= 2):
                    raise ConfigInvalid("config field 'system.horizon' must be >= 2")
                dim = system.get("dim", 2)
                if not (isinstance(dim, int) and dim >= 1):
                    raise ConfigInvalid("config field 'system.dim' must be >= 1")
                weights = system.get("weights")
                if weights is not None:
                    if not (isinstance(weights, list)
                            and all(isinstance(w, (int, float)) for w in weights)
                            and all(0.0 <= float(w) < 1.0 for w in weights)):
                        raise ConfigInvalid(
                            "config field 'system.weights' must be a list in [0, 1)"
                        )
            if builtin == "interval":
                grids = system.get("grids", [4, 8, 16, 32])
                if not (isinstance(grids, list) and grids
                        and all(isinstance(g, int) for g in grids)):
                    raise ConfigInvalid("config field 'system.grids' must be a list of ints")
                fine = system.get("fine", 256)
                if not (isinstance(fine, int) and fine > 1):
                    raise ConfigInvalid("config field 'system.fine' must be an integer > 1")


def _merged(cfg: dict, seed, norm, horizon, out) -> dict:
    merged = dict(cfg)
    if seed is not None:
        merged["seed"] = seed
    if norm is not None:
        merged["norm"] = norm
    if horizon is not None:
        merged["horizon"] = horizon
    if out is not None:
        merged["out"] = out
    merged.setdefault("seed", 0)
    merged.setdefault("norm", "pointwise")
    _validate(merged)
    return merged


def _config_hash(cfg: dict) -> str:
    logical = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(serialize.dumps(logical).encode()).hexdigest()[:16]


def default_weights(horizon: int) -> list:
    """Dyadic mixing weights 2^-m, clamped into [0, 1) at the first level."""
    return [0.5] + [2.0 ** -m for m in range(1, horizon)]


def build_cpa(system_cfg: dict) -> nuclearity.CpaSystem:
    builtin = system_cfg.get("builtin")
    if builtin == "uhf":
        return nuclearity.example_uhf(system_cfg.get("depth", 5))
    if builtin == "interval":
        return nuclearity.example_interval(system_cfg.get("grids", [4, 8, 16, 32]),
                                           fine=system_cfg.get("fine", 256))
    raise ConfigInvalid(f"system.builtin {builtin!r} does not define an approximation system")


def build_system(system_cfg: dict, horizon: int | None = None) -> softsys.SoftSystem:
    if "path" in system_cfg:
        kind, payload = serialize.bundle_from_json(serialize.load_path(system_cfg["path"]))
        if kind != "system":
            raise ConfigInvalid(f"bundle at {system_cfg['path']} holds a {kind}, not a system")
        sysm = payload
    else:
        builtin = system_cfg.get("builtin")
        if builtin == "perturbed":
            hz = system_cfg.get("horizon", 10)
            base = nuclearity.constant_base_system(hz, dim=system_cfg.get("dim", 2))
            weights = system_cfg.get("weights") or default_weights(hz)
            sysm = nuclearity.example_perturbed(base, weights)
        else:
            sysm = nuclearity.induce(build_cpa(system_cfg)).soft
    if horizon is not None and horizon < sysm.horizon:
        sysm = softsys.subsystem(sysm, range(horizon))
    return sysm


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def write_csv(outdir: Path, name: str, header, rows, cfg: dict) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    meta = f"# softlimit={__version__} seed={cfg.get('seed', 0)} config={_config_hash(cfg)}"
    lines = [meta, ",".join(header)]
    for row in sorted(rows, key=lambda r: tuple(str(x) for x in r)):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\r\n".join(lines) + "\r\n", encoding="utf-8")
    return path


def _run(cfg: dict, runner):
    try:
        outdir = Path(cfg.get("out", "."))
        written = runner(cfg, outdir)
        for p in written:
            click.echo(str(p))
        return 0
    except ConfigInvalid as exc:
        _fail(2, str(exc))
    except ParseError as exc:
        _fail(2, str(exc))
    except HorizonTooShort as exc:
        _fail(4, str(exc))
    except (NumericalFailure, SolverFailure) as exc:
        _fail(3, str(exc))
    except SoftlimitError as exc:
        _fail(3, str(exc))


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON config file")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="output directory")(fn)
    fn = click.option("--seed", type=int, default=None, help="RNG seed")(fn)
    fn = click.option("--norm", type=click.Choice(_NORMS), default=None,
                      help="norm for defect sweeps")(fn)
    fn = click.option("--horizon", type=int, default=None, help="truncate to this horizon")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="softlimit")
def main():
    """Numerical laboratory for soft inductive systems."""


def _prepare(config_path, seed, norm, horizon, out) -> dict:
    try:
        cfg = _merged(_load_config(config_path), seed, norm, horizon, out)
    except ConfigInvalid as exc:
        _fail(2, str(exc))
    return cfg


@main.command()
@common_options
def verify(config_path, out, seed, norm, horizon):
    """Verify connecting-map flags and exact-transitivity residual."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        sysm = build_system(cfg.get("system", {"builtin": "uhf"}), cfg.get("horizon"))
        rows = []
        for (n, m), f in sorted(sysm.maps.items()):
            flags = f.verify()
            rows.append((n, m, flags["cp"], flags["ucp"], flags["cpc"]))
        residual = softsys.exact_transitivity_residual(sysm)
        summary = [("exact_transitivity_residual", residual),
                   ("horizon", sysm.horizon)]
        return [
            write_csv(outdir, "verify.csv", ["n", "m", "cp", "ucp", "cpc"], rows, cfg),
            write_csv(outdir, "verify_summary.csv", ["key", "value"], summary, cfg),
        ]

    raise SystemExit(_run(cfg, runner))


@main.command()
@common_options
def defects(config_path, out, seed, norm, horizon):
    """Transitivity-defect sweep over all triples n > m > l."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        sysm = build_system(cfg.get("system", {"builtin": "uhf"}), cfg.get("horizon"))
        report = softsys.transitivity_defects(
            sysm, norm_kind=cfg["norm"], seed=cfg["seed"], workers=_workers()
        )
        summary = [(m, v) for m, v in report.per_m().items()]
        fit = [("fit_rate", report.fit_rate), ("fit_residual", report.fit_residual)]
        return [
            write_csv(outdir, "defects.csv",
                      ["m", "n", "l", "probe_id", "defect", "norm_kind"],
                      report.sorted_rows(), cfg),
            write_csv(outdir, "defects_summary.csv", ["m", "sup_defect"], summary, cfg),
            write_csv(outdir, "defects_fit.csv", ["key", "value"], fit, cfg),
        ]

    raise SystemExit(_run(cfg, runner))


@main.command()
@common_options
def strictify(config_path, out, seed, norm, horizon):
    """Summable refinement, telescoped system, and closeness bounds."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        sysm = build_system(cfg.get("system", {"builtin": "perturbed"}), cfg.get("horizon"))
        opts = cfg.get("strictify", {})
        scale = float(opts.get("scale", 4.0))
        ratio = float(opts.get("ratio", 0.5))
        eps = [scale * ratio ** m for m in range(sysm.horizon)]
        indices, cert = softsys.refine_to_summable(sysm, eps, norm_kind="cb",
                                                   seed=cfg["seed"])
        sub = softsys.subsystem(sysm, indices)
        strict = softsys.strictify(sub)
        from . import sdp

        rows = []
        for n in range(sub.horizon):
            for m in range(n):
                diff = sdp.cb_norm(strict.connecting(n, m) - sub.connecting(n, m))
                tail = cert.tail(m)
                rows.append((n, m, diff, tail, diff <= tail + 1e-10))
        residual = softsys.exact_transitivity_residual(strict)
        summary = [("exact_transitivity_residual", residual),
                   ("selected", " ".join(map(str, indices))),
                   ("norm_kind", cert.norm_kind)]
        return [
            write_csv(outdir, "strictify.csv",
                      ["n", "m", "cb_diff", "tail_bound", "within"], rows, cfg),
            write_csv(outdir, "strictify_summary.csv", ["key", "value"], summary, cfg),
        ]

    raise SystemExit(_run(cfg, runner))


def _interval_probes(fine: int):
    return [
        ("one", nuclearity.interval_function(lambda t: 1.0, fine)),
        ("x", nuclearity.interval_function(lambda t: t, fine)),
        ("x2", nuclearity.interval_function(lambda t: t * t, fine)),
    ]


def _ambient_probes(cpa: nuclearity.CpaSystem, seed: int, count: int = 12):
    ambient = cpa.space.ambient
    basis = ambient.basis_elements()
    rng = np.random.default_rng(seed)
    if len(basis) > count:
        pick = rng.choice(len(basis) - 1, size=count - 1, replace=False) + 1
        basis = [basis[0]] + [basis[i] for i in sorted(pick)]
    return basis


@main.command()
@common_options
def cpa(config_path, out, seed, norm, horizon):
    """Approximation system: induced-system bound and reconstruction table."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        system_cfg = cfg.get("system", {"builtin": "interval"})
        capprox = build_cpa(system_cfg)
        induced = nuclearity.induce(capprox)
        if system_cfg.get("builtin") == "interval":
            probes = _interval_probes(system_cfg.get("fine", 256))
        else:
            probes = _ambient_probes(capprox, cfg["seed"])
        recon = [
            (n, pid, capprox.reconstruction_defect(a, n))
            for n in range(capprox.depth)
            for pid, a in probes
        ]
        return [
            write_csv(outdir, "cpa_bound.csv",
                      ["n", "m", "l", "probe_id", "defect", "bound"],
                      induced.inequality_rows, cfg),
            write_csv(outdir, "cpa_recon.csv", ["level", "probe_id", "defect"],
                      recon, cfg),
        ]

    raise SystemExit(_run(cfg, runner))


@main.command("limit-probe")
@common_options
def limit_probe(config_path, out, seed, norm, horizon):
    """Seminorm/convergence verdicts for basic nets and top-level probes."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        sysm = build_system(cfg.get("system", {"builtin": "uhf"}), cfg.get("horizon"))
        probe_nets = [nets.unit_net(sysm)]
        for pid, a in sysm.probes(0):
            probe_nets.append(nets.basic_net(sysm, 0, a))
        verdict_rows = []
        for idx, net in enumerate(probe_nets):
            v = nets.analyze_net(net)
            verdict_rows.append((
                idx, net.tag, v.seminorm_estimate,
                max(v.jconv_defect.values()) if v.jconv_defect else 0.0,
                v.null_rate, v.null_residual,
            ))
        top = sysm.horizon - 1
        alphas = [sysm.connecting(top, n) for n in range(sysm.horizon)]
        probe = nets.limit_map_probe(sysm, alphas, probe_nets)
        return [
            write_csv(outdir, "limit_verdicts.csv",
                      ["net", "tag", "seminorm", "max_jconv", "null_rate",
                       "null_residual"], verdict_rows, cfg),
            write_csv(outdir, "limit_cauchy.csv", ["net", "m", "mp", "value"],
                      probe["rows"], cfg),
        ]

    raise SystemExit(_run(cfg, runner))


@main.command()
@common_options
@click.option("--level", "state_level", type=int, default=None,
              help="matrix-state level k (<= 8)")
def ncdual(config_path, out, seed, norm, horizon, state_level):
    """Projective (pulled-back state) defects against primal defects."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        opts = cfg.get("ncdual", {})
        k = state_level if state_level is not None else int(opts.get("level", 2))
        if not (1 <= k <= 8):
            raise ConfigInvalid("ncdual state level must lie in 1..8")
        samples = int(opts.get("samples", 6))
        sysm = build_system(cfg.get("system", {"builtin": "uhf"}), cfg.get("horizon"))
        rows = ncstates.projective_defect(sysm, k, samples=samples, seed=cfg["seed"])
        table = [(n, m, l, label, dual, primal, dual <= primal + 1e-10)
                 for n, m, l, label, dual, primal in rows]
        return [write_csv(outdir, "ncdual.csv",
                          ["n", "m", "l", "state", "dual", "primal", "within"],
                          table, cfg)]

    raise SystemExit(_run(cfg, runner))


@main.command()
@common_options
def qd(config_path, out, seed, norm, horizon):
    """Quasidiagonality-style defects of the approximation down maps."""
    cfg = _prepare(config_path, seed, norm, horizon, out)

    def runner(cfg, outdir):
        system_cfg = cfg.get("system", {"builtin": "uhf"})
        capprox = build_cpa(system_cfg)
        if system_cfg.get("builtin") == "interval":
            singles = _interval_probes(system_cfg.get("fine", 256))
        else:
            singles = _ambient_probes(capprox, cfg["seed"], count=8)
        pairs = [(f"{pa}.{pb}", a, b) for pa, a in singles for pb, b in singles]
        rows = nuclearity.qd_defect(capprox.down, pairs)
        return [write_csv(outdir, "qd.csv",
                          ["level", "pair", "mult_defect", "iso_defect"], rows, cfg)]

    raise SystemExit(_run(cfg, runner))


@main.command()
@click.argument("path", type=click.Path())
def roundtrip(path):
    """Check that a JSON bundle is a parse/serialize fixed point."""
    try:
        ok = serialize.roundtrip(path)
    except ParseError as exc:
        _fail(2, str(exc))
    except OSError as exc:
        _fail(2, f"cannot read bundle: {exc}")
    click.echo("true" if ok else "false")
    raise SystemExit(0 if ok else 3)


if __name__ == "__main__":
    main()
