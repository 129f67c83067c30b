"""JSON system specification files and deterministic report writing.

A specification document looks like::

    {"n": 1, "N": 2, "s": [0, 0], "t": [4, 2],
     "sector": {"theta_min": 0.52, "theta_max": 5.76},
     "entries": [[[{"alpha": [4], "coeff": {"const_re": 1.0, "const_im": 0.0,
                                            "bumps": [{"amp_re": ..., "amp_im": ...,
                                                       "center": [...], "width": ...}]}}], ...]],
     "grid": {"M": 64, "L": 6.283185307179586},
     "tolerances": {...}, "metadata": {...}}

Bumps may carry an optional ``"deriv"`` multi-index (plain partial
derivatives of the Gaussian); it is written only when nonzero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from .symbols import Bump, Coefficient, DNSystem, DNValidationError, Sector, Term, validate_orders


@dataclass
class SystemSpec:
    system: DNSystem
    sector: Sector | None = None
    grid: dict | None = None
    tolerances: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# deterministic JSON


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return json.dumps(str(obj))
        text = "%.17g" % obj
        if "." not in text and "e" not in text and "n" not in text:
            text += ".0"
        return text
    if isinstance(obj, complex):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return _encode(obj.item(), indent, level)
    if hasattr(obj, "tolist"):
        return _encode(obj.tolist(), indent, level)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and 17-significant-digit floats."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


# ---------------------------------------------------------------------------
# parsing


def _require(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise DNValidationError(f"expected an object at {path or '/'}", path)
    if key not in doc:
        raise DNValidationError(f"missing field '{key}'", f"{path}/{key}")
    return doc[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DNValidationError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise DNValidationError(f"expected a finite number, got {value!r}", path)
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DNValidationError(f"expected an integer, got {value!r}", path)
    return value


def _int_list(value, path: str, length: int | None = None) -> list[int]:
    if not isinstance(value, list):
        raise DNValidationError("expected a list of integers", path)
    if length is not None and len(value) != length:
        raise DNValidationError(f"expected {length} entries, got {len(value)}", path)
    return [_integer(v, f"{path}/{i}") for i, v in enumerate(value)]


def _parse_bump(doc, n: int, path: str) -> Bump:
    amp = complex(_number(_require(doc, "amp_re", path), f"{path}/amp_re"),
                  _number(doc.get("amp_im", 0.0), f"{path}/amp_im"))
    center = _require(doc, "center", path)
    if not isinstance(center, list) or len(center) != n:
        raise DNValidationError(f"center must be a list of {n} numbers", f"{path}/center")
    center = [_number(c, f"{path}/center/{i}") for i, c in enumerate(center)]
    width = _number(_require(doc, "width", path), f"{path}/width")
    if width <= 0:
        raise DNValidationError(f"width must be positive, got {width}", f"{path}/width")
    deriv = _int_list(doc["deriv"], f"{path}/deriv", n) if "deriv" in doc else ()
    if any(d < 0 for d in deriv):
        raise DNValidationError("derivative orders must be non-negative", f"{path}/deriv")
    return Bump(amp, center, width, deriv)


def _parse_coeff(doc, n: int, path: str) -> Coefficient:
    if not isinstance(doc, dict):
        raise DNValidationError("expected a coefficient object", path)
    const = complex(_number(doc.get("const_re", 0.0), f"{path}/const_re"),
                    _number(doc.get("const_im", 0.0), f"{path}/const_im"))
    bumps = doc.get("bumps", [])
    if not isinstance(bumps, list):
        raise DNValidationError("bumps must be a list", f"{path}/bumps")
    return Coefficient(const, tuple(_parse_bump(b, n, f"{path}/bumps/{i}") for i, b in enumerate(bumps)))


def parse_spec(doc: dict) -> SystemSpec:
    """Build a :class:`SystemSpec` from a decoded JSON document.

    Raises :class:`DNValidationError` with a JSON-pointer ``path``.
    """
    if not isinstance(doc, dict):
        raise DNValidationError("top level must be an object", "")
    n = _integer(_require(doc, "n", ""), "/n")
    if n < 1:
        raise DNValidationError(f"dimension n must be >= 1, got {n}", "/n")
    s = _int_list(_require(doc, "s", ""), "/s")
    t = _int_list(_require(doc, "t", ""), "/t")
    N = _integer(doc.get("N", len(s)), "/N")
    if len(s) != N:
        raise DNValidationError(f"s has {len(s)} entries but N={N}", "/s")
    if len(t) != N:
        raise DNValidationError(f"t has {len(t)} entries but N={N}", "/t")
    orders = validate_orders(s, t)
    entries = _require(doc, "entries", "")
    if not isinstance(entries, list) or len(entries) != N:
        raise DNValidationError(f"entries must be an {N}x{N} array", "/entries")
    cells = []
    for j, row in enumerate(entries):
        if not isinstance(row, list) or len(row) != N:
            raise DNValidationError(f"row must have {N} entries", f"/entries/{j}")
        out_row = []
        for k, cell in enumerate(row):
            path = f"/entries/{j}/{k}"
            if not isinstance(cell, list):
                raise DNValidationError("entry must be a list of terms", path)
            terms = []
            for i, term in enumerate(cell):
                tp = f"{path}/{i}"
                alpha = _int_list(_require(term, "alpha", tp), f"{tp}/alpha", n)
                if any(a < 0 for a in alpha):
                    raise DNValidationError("multi-index entries must be non-negative", f"{tp}/alpha")
                terms.append(Term(tuple(alpha), _parse_coeff(_require(term, "coeff", tp), n, f"{tp}/coeff")))
            out_row.append(terms)
        cells.append(out_row)
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise DNValidationError("metadata must be an object", "/metadata")
    system = DNSystem(n, orders, cells, dict(meta))
    sector = None
    if "sector" in doc:
        sec = doc["sector"]
        sector = Sector(_number(_require(sec, "theta_min", "/sector"), "/sector/theta_min"),
                        _number(_require(sec, "theta_max", "/sector"), "/sector/theta_max"))
    grid = None
    if "grid" in doc:
        g = doc["grid"]
        M = _integer(_require(g, "M", "/grid"), "/grid/M")
        L = _number(_require(g, "L", "/grid"), "/grid/L")
        if M < 4 or M % 2:
            raise DNValidationError(f"M must be even and >= 4, got {M}", "/grid/M")
        if L <= 0:
            raise DNValidationError(f"L must be positive, got {L}", "/grid/L")
        grid = {"M": M, "L": L}
    tol = doc.get("tolerances", {})
    if not isinstance(tol, dict):
        raise DNValidationError("tolerances must be an object", "/tolerances")
    return SystemSpec(system, sector, grid, dict(tol))


def load_spec(path) -> SystemSpec:
    """Read and validate a specification file.

    ``OSError`` for unreadable files, ``json.JSONDecodeError`` for malformed
    JSON and :class:`DNValidationError` for semantic problems propagate.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_spec(json.loads(text))


# ---------------------------------------------------------------------------
# serialization


def _bump_doc(b: Bump) -> dict:
    doc = {"amp_re": b.amplitude.real, "amp_im": b.amplitude.imag,
           "center": list(b.center), "width": b.width}
    if any(b.deriv):
        doc["deriv"] = list(b.deriv)
    return doc


def system_to_doc(system: DNSystem) -> dict:
    entries = []
    for row in system.entries:
        entries.append([[{"alpha": list(term.alpha),
                          "coeff": {"const_re": term.coeff.constant.real,
                                    "const_im": term.coeff.constant.imag,
                                    "bumps": [_bump_doc(b) for b in term.coeff.bumps]}}
                         for term in cell] for cell in row])
    return {"n": system.n, "N": system.N, "s": list(system.orders.s), "t": list(system.orders.t),
            "entries": entries}


def spec_to_doc(spec: SystemSpec) -> dict:
    doc = system_to_doc(spec.system)
    if spec.sector is not None:
        doc["sector"] = {"theta_min": spec.sector.theta_min, "theta_max": spec.sector.theta_max}
    if spec.grid is not None:
        doc["grid"] = dict(spec.grid)
    doc["tolerances"] = dict(spec.tolerances)
    doc["metadata"] = dict(spec.system.metadata)
    return doc
