"""JSON model files: schema checks, loading, and the bundled corpus."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .algebroid import AlgebroidModel, Section
from .expr import ExprError, ZERO, as_expr, parse
from .riemann import MetricModel
from .sigma import OneFormPotential, SourceManifold

REQUIRED = ("name", "dimM", "rank", "coords", "frame", "anchor", "metric")
OPTIONAL = ("bracket", "box", "sections", "oneform", "sigma", "description")
ALIASES = {"so3": "so3_killing"}


class SchemaError(ValueError):
    pass


@dataclass
class SigmaSpec:
    source: SourceManifold
    boundary: dict = field(default_factory=dict)


@dataclass
class LoadedModel:
    model: AlgebroidModel
    metric: MetricModel
    sections: dict = field(default_factory=dict)
    oneform: OneFormPotential | None = None
    sigma: SigmaSpec | None = None
    raw: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.model.name


def _expr(text, where: str, allowed) -> object:
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise SchemaError(f"{where}: expected an expression string or number")
    try:
        e = parse(text) if isinstance(text, str) else as_expr(float(text))
    except ExprError as err:
        raise SchemaError(f"{where}: {err}") from None
    unknown = sorted(e.free_vars() - set(allowed))
    if unknown:
        raise SchemaError(f"{where}: undeclared name(s) {', '.join(unknown)}")
    return e


def _names(doc, key: str, count: int) -> list[str]:
    names = doc[key]
    if not isinstance(names, list) or not all(isinstance(s, str) and s.isidentifier() for s in names):
        raise SchemaError(f"{key}: expected a list of identifiers")
    if len(names) != count:
        raise SchemaError(f"{key}: expected {count} names, got {len(names)}")
    if len(set(names)) != len(names):
        raise SchemaError(f"{key}: duplicate names")
    return names


def _index(v, frame: list[str], where: str) -> int:
    if isinstance(v, str):
        if v not in frame:
            raise SchemaError(f"{where}: unknown frame element {v!r}")
        return frame.index(v)
    if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < len(frame):
        raise SchemaError(f"{where}: index {v!r} out of range 0..{len(frame) - 1}")
    return v


def _vector(vals, n: int, where: str, allowed) -> list:
    if not isinstance(vals, list) or len(vals) != n:
        raise SchemaError(f"{where}: expected {n} entries")
    return [_expr(v, f"{where}[{i}]", allowed) for i, v in enumerate(vals)]


def _bracket(entries, frame: list[str], coords: list[str]) -> list:
    n = len(frame)
    Q = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
    seen = {}
    for k, ent in enumerate(entries):
        where = f"bracket[{k}]"
        if not isinstance(ent, dict) or set(ent) != {"a", "b", "c", "expr"}:
            raise SchemaError(f"{where}: expected keys a, b, c, expr")
        a, b, c = (_index(ent[key], frame, where) for key in "abc")
        e = _expr(ent["expr"], where, coords)
        if a == b:
            raise SchemaError(f"{where}: symmetric entry Q_{a}{a}^{c}; the bracket is antisymmetric")
        key = (min(a, b), max(a, b), c)
        if key in seen:
            raise SchemaError(f"{where}: entry for ({a},{b},{c}) already given by bracket[{seen[key]}]; "
                              "give one ordering only")
        seen[key] = k
        Q[a][b][c] = e
        Q[b][a][c] = -e
    return Q


def _sigma(block, m: AlgebroidModel) -> SigmaSpec:
    if not isinstance(block, dict):
        raise SchemaError("sigma: expected an object")
    k = block.get("k")
    if k not in (1, 2):
        raise SchemaError("sigma.k: must be 1 or 2")
    names = block.get("names", ["t"] if k == 1 else ["z1", "z2"])
    if not isinstance(names, list) or len(names) != k:
        raise SchemaError("sigma.names: expected one name per source axis")
    metric = block.get("metric")
    if metric is not None:
        if not isinstance(metric, list) or len(metric) != k:
            raise SchemaError("sigma.metric: expected upper-triangular rows")
        metric = [_vector(row, k - i, f"sigma.metric[{i}]", names) for i, row in enumerate(metric)]
    boundary = block.get("boundary", {})
    if not isinstance(boundary, dict):
        raise SchemaError("sigma.boundary: expected an object")
    for key in ("start", "end"):
        if key in boundary:
            if k != 1:
                raise SchemaError(f"sigma.boundary.{key}: only for k = 1")
            v = boundary[key]
            if not isinstance(v, list) or len(v) != m.dimM:
                raise SchemaError(f"sigma.boundary.{key}: expected {m.dimM} numbers")
    if "phi" in boundary:
        boundary = dict(boundary, phi=_vector(boundary["phi"], m.dimM, "sigma.boundary.phi", names))
    try:
        source = SourceManifold(k, block.get("sizes", [101] * k), block.get("box", [[0.0, 1.0]] * k),
                                names=names, metric=metric, periodic=tuple(block.get("periodic", ())))
    except (ValueError, TypeError) as err:
        raise SchemaError(f"sigma: {err}") from None
    return SigmaSpec(source=source, boundary=boundary)


def model_from_dict(doc: dict) -> LoadedModel:
    if not isinstance(doc, dict):
        raise SchemaError("model file must hold a JSON object")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise SchemaError(f"missing field(s): {', '.join(missing)}")
    extra = sorted(set(doc) - set(REQUIRED) - set(OPTIONAL))
    if extra:
        raise SchemaError(f"unknown field(s): {', '.join(extra)}")
    d, n = doc["dimM"], doc["rank"]
    if not isinstance(d, int) or d < 0 or not isinstance(n, int) or n < 1:
        raise SchemaError("dimM must be a non-negative integer and rank a positive one")
    coords = _names(doc, "coords", d)
    frame = _names(doc, "frame", n)
    if set(coords) & set(frame):
        raise SchemaError("coords and frame share a name")
    anchor = doc["anchor"]
    if not isinstance(anchor, list) or len(anchor) != n:
        raise SchemaError(f"anchor: expected {n} rows")
    anchor = [_vector(row, d, f"anchor[{a}]", coords) for a, row in enumerate(anchor)]
    Q = _bracket(doc.get("bracket", []), frame, coords)
    box = doc.get("box", [[-1.0, 1.0]] * d)
    if not isinstance(box, list) or len(box) != d or not all(
            isinstance(iv, list) and len(iv) == 2 and iv[0] < iv[1] for iv in box):
        raise SchemaError(f"box: expected {d} intervals [lo, hi] with lo < hi")
    m = AlgebroidModel(str(doc["name"]), coords, frame, anchor, Q, [tuple(iv) for iv in box])
    rows = doc["metric"]
    if not isinstance(rows, list) or len(rows) != n:
        raise SchemaError(f"metric: expected {n} rows")
    full = all(isinstance(r, list) and len(r) == n for r in rows)
    g = [_vector(r, n if full else n - a, f"metric[{a}]", coords) for a, r in enumerate(rows)]
    met = MetricModel(g, m)
    sections = {}
    for name, comps in (doc.get("sections") or {}).items():
        sections[name] = Section(_vector(comps, n, f"sections.{name}", coords), m, name)
    oneform = None
    if doc.get("oneform") is not None:
        oneform = OneFormPotential(_vector(doc["oneform"], n, "oneform", coords))
    sigma = _sigma(doc["sigma"], m) if doc.get("sigma") is not None else None
    return LoadedModel(m, met, sections, oneform, sigma, doc)


def load_model(path) -> LoadedModel:
    """Load a model file, or a bundled model by name (``flat_tm2``, ``so3``, ...)."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and str(path) in bundled_names() + list(ALIASES):
        return load_bundled(str(path))
    try:
        doc = json.loads(p.read_text())
    except OSError as err:
        raise SchemaError(f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None
    return model_from_dict(doc)


def bundled_names() -> list[str]:
    root = resources.files("algebroid_lab") / "models"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> LoadedModel:
    name = ALIASES.get(name, name)
    text = (resources.files("algebroid_lab") / "models" / f"{name}.json").read_text()
    return model_from_dict(json.loads(text))
