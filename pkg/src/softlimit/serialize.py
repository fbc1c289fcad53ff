"""JSON encodings for matrices, algebras, elements, maps, systems and nets.

Doubles are emitted through Python's shortest-roundtrip repr, so a
parse -> serialize -> parse cycle is a fixed point bit for bit.  NaN and
infinities are forbidden on both paths.
"""
from __future__ import annotations

import json
import math

import numpy as np

from . import cpmaps
from .algebra import AlgElement, FdVNAlgebra, OperatorSystemSpace
from .cpmaps import CPMap
from .errors import ParseError
from .nets import BoundedNet
from .nuclearity import CpaSystem
from .softsys import SoftSystem

__all__ = [
    "matrix_to_json",
    "matrix_from_json",
    "algebra_to_json",
    "algebra_from_json",
    "element_to_json",
    "element_from_json",
    "map_to_json",
    "map_from_json",
    "system_to_json",
    "system_from_json",
    "net_to_json",
    "net_from_json",
    "cpa_to_json",
    "cpa_from_json",
    "bundle_to_json",
    "bundle_from_json",
    "dumps",
    "loads",
    "load_path",
    "roundtrip",
]


def _check_finite(x: float):
    if not math.isfinite(x):
        raise ParseError("non-finite scalar in matrix data")
    return float(x)


def matrix_to_json(m) -> dict:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ParseError("matrix encoding requires a 2-D array")
    rows, cols = a.shape
    data = [[_check_finite(z.real), _check_finite(z.imag)] for z in a.ravel()]
    return {"rows": int(rows), "cols": int(cols), "data": data}


def matrix_from_json(obj) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad matrix object: {exc}") from exc
    if rows < 0 or cols < 0 or len(data) != rows * cols:
        raise ParseError("matrix data length does not match rows*cols")
    out = np.empty(rows * cols, dtype=np.complex128)
    for i, pair in enumerate(data):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ParseError("matrix entries must be [re, im] pairs")
        out[i] = complex(_check_finite(pair[0]), _check_finite(pair[1]))
    return out.reshape(rows, cols)


def algebra_to_json(a: FdVNAlgebra) -> dict:
    return {"blocks": list(a.block_sizes)}


def algebra_from_json(obj) -> FdVNAlgebra:
    try:
        return FdVNAlgebra(obj["blocks"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad algebra object: {exc}") from exc


def element_to_json(e: AlgElement) -> dict:
    return {
        "algebra": algebra_to_json(e.algebra),
        "blocks": [matrix_to_json(b) for b in e.blocks],
    }


def element_from_json(obj) -> AlgElement:
    try:
        algebra = algebra_from_json(obj["algebra"])
        blocks = [matrix_from_json(b) for b in obj["blocks"]]
        return AlgElement(algebra, blocks)
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"bad element object: {exc}") from exc


def map_to_json(f: CPMap) -> dict:
    return {
        "source": algebra_to_json(f.source),
        "target": algebra_to_json(f.target),
        "choi": [
            [matrix_to_json(f.pair_choi_matrix(p, q)) for q in range(f.target.num_blocks)]
            for p in range(f.source.num_blocks)
        ],
    }


def map_from_json(obj) -> CPMap:
    try:
        source = algebra_from_json(obj["source"])
        target = algebra_from_json(obj["target"])
        choi = []
        for p, n in enumerate(source.block_sizes):
            row = []
            for q, m in enumerate(target.block_sizes):
                c = matrix_from_json(obj["choi"][p][q])
                if c.shape != (n * m, n * m):
                    raise ParseError("choi block has wrong dimensions")
                row.append(cpmaps._choi_matrix_to_tensor(c, n, m))
            choi.append(row)
        return CPMap(source, target, choi)
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"bad map object: {exc}") from exc


def system_to_json(sys: SoftSystem) -> dict:
    return {
        "name": sys.name,
        "provenance": sys.provenance,
        "levels": [algebra_to_json(a) for a in sys.levels],
        "maps": [
            {"n": n, "m": m, "map": map_to_json(f)}
            for (n, m), f in sorted(sys.maps.items())
        ],
    }


def system_from_json(obj, verify: bool = False) -> SoftSystem:
    try:
        levels = [algebra_from_json(a) for a in obj["levels"]]
        maps = {
            (int(e["n"]), int(e["m"])): map_from_json(e["map"]) for e in obj["maps"]
        }
        return SoftSystem(levels, maps, name=obj.get("name", ""),
                          provenance=obj.get("provenance", ""), verify=verify)
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"bad system object: {exc}") from exc


def net_to_json(x: BoundedNet) -> dict:
    return {
        "system": system_to_json(x.system),
        "entries": [element_to_json(e) for e in x.entries],
        "tag": x.tag,
    }


def net_from_json(obj) -> BoundedNet:
    try:
        sys = system_from_json(obj["system"])
        entries = [element_from_json(e) for e in obj["entries"]]
        return BoundedNet(sys, entries, tag=obj.get("tag", "custom"))
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"bad net object: {exc}") from exc


def cpa_to_json(cpa: CpaSystem) -> dict:
    return {
        "name": cpa.name,
        "ambient": algebra_to_json(cpa.space.ambient),
        "basis": [element_to_json(b) for b in cpa.space.basis],
        "levels": [algebra_to_json(a) for a in cpa.levels],
        "down": [map_to_json(f) for f in cpa.down],
        "up": [map_to_json(f) for f in cpa.up],
    }


def cpa_from_json(obj) -> CpaSystem:
    try:
        ambient = algebra_from_json(obj["ambient"])
        space = OperatorSystemSpace(ambient, [element_from_json(b) for b in obj["basis"]])
        return CpaSystem(
            space=space,
            down=[map_from_json(f) for f in obj["down"]],
            up=[map_from_json(f) for f in obj["up"]],
            levels=[algebra_from_json(a) for a in obj["levels"]],
            name=obj.get("name", ""),
        )
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"bad cpa object: {exc}") from exc


_KINDS = {
    "system": (system_to_json, system_from_json),
    "net": (net_to_json, net_from_json),
    "cpa": (cpa_to_json, cpa_from_json),
}


def bundle_to_json(kind: str, payload) -> dict:
    enc, _ = _KINDS[kind]
    return {"format": "softlimit-bundle", "version": 1, "kind": kind,
            "payload": enc(payload)}


def bundle_from_json(obj):
    try:
        kind = obj["kind"]
        _, dec = _KINDS[kind]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad bundle: {exc}") from exc
    return kind, dec(obj["payload"])


def _reject_constant(name):
    raise ParseError(f"non-finite constant {name!r} is forbidden")


def dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False, sort_keys=True, separators=(",", ":"))


def loads(text: str):
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc


def load_path(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def roundtrip(path: str) -> bool:
    """parse -> serialize -> parse fixed point, bit-exact doubles."""
    raw = load_path(path)
    kind, payload = bundle_from_json(raw)
    once = dumps(bundle_to_json(kind, payload))
    kind2, payload2 = bundle_from_json(loads(once))
    twice = dumps(bundle_to_json(kind2, payload2))
    return once == twice
